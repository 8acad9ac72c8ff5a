#pragma once

// Training objectives: subject reconstruction, the derivation regularizer in
// its computable form, the truncation threshold and gate, class-image
// regularization, and the weighted total. The frozen-branch contract is
// enforced here: positions that must be gradient-truncated reject live
// arguments.

#include <stdexcept>

#include "sude/array.hpp"
#include "sude/denoiser.hpp"

namespace sude {

struct LossBreakdown {
    double l_sub = 0.0;
    double l_sude_raw = 0.0;
    double tau_t = 0.0;
    int gate = 1;
    double l_reg = 0.0;
    double w_s = 0.0;
    double w_r = 0.0;
    double total = 0.0;
    Var total_var;  // scalar on tape, for backward
};

inline void require_frozen(const Prediction& p, const char* pos) {
    if (p.branch == Branch::Live || p.value.requires_grad())
        throw std::invalid_argument(std::string(pos) +
                                    " must be a frozen-branch prediction");
}

inline void require_live(const Prediction& p, const char* pos) {
    if (p.branch != Branch::Live)
        throw std::invalid_argument(std::string(pos) +
                                    " must be a live-branch prediction");
}

// Reconstruction of the noised subject example at step t-1.
inline Var sub_loss(Tape& tape, const Prediction& pred_sub, Var x_prev) {
    require_live(pred_sub, "sub_loss: pred_sub");
    return tape.mse(x_prev, pred_sub.value);
}

// (1/(2 sigma^2)) [ |sub - cate|^2 - |sub - uncond|^2 ]; the category and
// unconditional branches are priors and must be detached.
inline Var sude_raw(Tape& tape, const Prediction& pred_sub,
                    const Prediction& pred_cate, const Prediction& pred_uncond,
                    double sigma_t) {
    require_live(pred_sub, "sude_raw: pred_sub");
    require_frozen(pred_cate, "sude_raw: pred_cate");
    require_frozen(pred_uncond, "sude_raw: pred_uncond");
    if (!(sigma_t > 0.0)) throw std::invalid_argument("sude_raw: sigma_t <= 0");
    Var a = tape.mse(pred_sub.value, pred_cate.value);
    Var b = tape.mse(pred_sub.value, pred_uncond.value);
    return tape.scale(tape.sub(a, b), 1.0 / (2.0 * sigma_t * sigma_t));
}

// -(1/(2 sigma^2)) |cate - uncond|^2, the per-step lower bound of the raw
// regularizer. Pure value, never differentiated.
inline double threshold_tau(const Prediction& pred_cate,
                            const Prediction& pred_uncond, double sigma_t) {
    require_frozen(pred_cate, "threshold_tau: pred_cate");
    require_frozen(pred_uncond, "threshold_tau: pred_uncond");
    if (!(sigma_t > 0.0))
        throw std::invalid_argument("threshold_tau: sigma_t <= 0");
    const Array& c = pred_cate.value.value();
    const Array& u = pred_uncond.value.value();
    require_same_shape(c, u, "threshold_tau");
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        double d = c.values[i] - u.values[i];
        s += d * d;
    }
    // Same rounding path as sude_raw (multiply by the reciprocal), so the
    // boundary identity raw(sub = cate) == tau holds bit-exactly.
    return -s * (1.0 / (2.0 * sigma_t * sigma_t));
}

// gate = 0 iff raw <= tau (boundary inclusive). The gate is a constant in
// differentiation.
inline int truncate_gate(double l_sude_raw, double tau_t) {
    return l_sude_raw <= tau_t ? 0 : 1;
}

struct Truncated {
    double gated = 0.0;
    int gate = 1;
};

inline Truncated truncate(double l_sude_raw, double tau_t) {
    int g = truncate_gate(l_sude_raw, tau_t);
    return Truncated{g * l_sude_raw, g};
}

// Keep category-conditioned predictions where the pretrained model had them.
inline Var cir_loss(Tape& tape, const Prediction& pred_pretrained_cate,
                    const Prediction& pred_live_cate) {
    if (pred_pretrained_cate.branch != Branch::PretrainedFrozen ||
        pred_pretrained_cate.value.requires_grad())
        throw std::invalid_argument(
            "cir_loss: first argument must be a pretrained-frozen prediction");
    require_live(pred_live_cate, "cir_loss: pred_live_cate");
    return tape.mse(pred_pretrained_cate.value, pred_live_cate.value);
}

struct TotalLossInputs {
    Var l_sub;
    Var l_sude_raw;   // invalid when the term is absent
    double tau_t = 0.0;
    Var l_reg;        // invalid when the term is absent
};

inline LossBreakdown total_loss(Tape& tape, const TotalLossInputs& in,
                                double w_s, double w_r) {
    if (w_s < 0.0 || w_r < 0.0)
        throw std::invalid_argument("total_loss: weights must be nonnegative");
    LossBreakdown b;
    b.w_s = w_s;
    b.w_r = w_r;
    b.l_sub = in.l_sub.scalar();
    b.tau_t = in.tau_t;
    Var total = in.l_sub;
    if (in.l_sude_raw.valid()) {
        b.l_sude_raw = in.l_sude_raw.scalar();
        b.gate = truncate_gate(b.l_sude_raw, b.tau_t);
        total = tape.add(total, tape.scale(in.l_sude_raw, w_s * b.gate));
    } else {
        b.l_sude_raw = 0.0;
        b.gate = 1;
    }
    if (in.l_reg.valid()) {
        b.l_reg = in.l_reg.scalar();
        total = tape.add(total, tape.scale(in.l_reg, w_r));
    }
    b.total_var = total;
    b.total = total.scalar();
    return b;
}

}  // namespace sude
