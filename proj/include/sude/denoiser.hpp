#pragma once

// The conditional denoiser: a token embedding table plus a small tanh MLP
// predicting epsilon, converted to the posterior-mean prediction through the
// schedule. Two evaluation paths share the same arithmetic: a plain one for
// frozen branches and sampling, and a tape one for training.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sude/array.hpp"
#include "sude/rng.hpp"
#include "sude/schedule.hpp"
#include "sude/tokens.hpp"

namespace sude {

enum class Branch { Live, Frozen, PretrainedFrozen };

enum class TrainableMode { EmbeddingOnly, FullModel };

inline TrainableMode trainable_from_string(const std::string& s) {
    if (s == "embedding_only") return TrainableMode::EmbeddingOnly;
    if (s == "full_model") return TrainableMode::FullModel;
    throw std::invalid_argument("unknown trainable mode: " + s);
}

inline std::string to_string(TrainableMode m) {
    return m == TrainableMode::EmbeddingOnly ? "embedding_only" : "full_model";
}

struct DenoiserDims {
    int d_x = 256;
    int d_c = 16;
    int d_time = 16;
    int hidden = 128;
};

// Sinusoidal features of the integer step, constant w.r.t. parameters.
inline std::vector<double> time_features(int t, int dim) {
    std::vector<double> f(dim);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        f[2 * i] = std::sin(t * freq);
        f[2 * i + 1] = std::cos(t * freq);
    }
    return f;
}

class Denoiser {
public:
    Denoiser() = default;

    Denoiser(DenoiserDims dims, Vocabulary vocab, std::uint64_t init_seed)
        : dims_(dims), vocab_(vocab) {
        CounterRng rng(init_seed, 0x6d6f64656cULL);
        int in = dims.d_x + dims.d_c + dims.d_time;
        add_param("net/W1", {static_cast<std::size_t>(dims.hidden),
                             static_cast<std::size_t>(in)}, rng, in);
        add_param("net/b1", {static_cast<std::size_t>(dims.hidden)}, rng, 0);
        add_param("net/W2", {static_cast<std::size_t>(dims.hidden),
                             static_cast<std::size_t>(dims.hidden)}, rng, dims.hidden);
        add_param("net/b2", {static_cast<std::size_t>(dims.hidden)}, rng, 0);
        add_param("net/W3", {static_cast<std::size_t>(dims.hidden),
                             static_cast<std::size_t>(dims.hidden)}, rng, dims.hidden);
        add_param("net/b3", {static_cast<std::size_t>(dims.hidden)}, rng, 0);
        add_param("net/Wo", {static_cast<std::size_t>(dims.d_x),
                             static_cast<std::size_t>(dims.hidden)}, rng, dims.hidden);
        add_param("net/bo", {static_cast<std::size_t>(dims.d_x)}, rng, 0);
        for (int r = 0; r < vocab.rows(); ++r) {
            CounterRng er(init_seed, 0x656d62ULL + r);
            std::vector<double> row(dims.d_c);
            for (double& v : row) v = 0.1 * er.next_normal();
            params_[emb_name(r)] = Array::vec(std::move(row));
        }
    }

    const DenoiserDims& dims() const { return dims_; }
    const Vocabulary& vocab() const { return vocab_; }

    static std::string emb_name(int row) {
        return "emb/" + std::to_string(row);
    }
    std::string subject_param(int subject_id) const {
        return emb_name(vocab_.row_of(ConditionToken{TokenKind::Subject, subject_id}));
    }

    std::map<std::string, Array>& params() { return params_; }
    const std::map<std::string, Array>& params() const { return params_; }

    Array& param(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end())
            throw std::invalid_argument("unknown parameter: " + name);
        return it->second;
    }
    const Array& param(const std::string& name) const {
        return const_cast<Denoiser*>(this)->param(name);
    }

    // Initialize a subject token near its category row; the small noise
    // breaks exact degeneracy with the category condition.
    void init_subject(int subject_id, int category, std::uint64_t seed) {
        const Array& cat = param(emb_name(vocab_.row_of(
            ConditionToken{TokenKind::Category, category})));
        Array row = cat;
        CounterRng rng(seed, 0x73756273656564ULL);
        for (double& v : row.values) v += 0.01 * rng.next_normal();
        param(subject_param(subject_id)) = std::move(row);
    }

    // Mean of the condition's token embedding rows.
    std::vector<double> condition_embedding(const Condition& c) const {
        std::vector<double> e(dims_.d_c, 0.0);
        for (auto tok : c.tokens) {
            const Array& row = param(emb_name(vocab_.row_of(tok)));
            for (int i = 0; i < dims_.d_c; ++i) e[i] += row.values[i];
        }
        for (double& v : e) v /= static_cast<double>(c.tokens.size());
        return e;
    }

    // Plain clean-data estimate (no tape). The network predicts x0; the
    // x_t passthrough of the posterior mean is applied analytically, so the
    // bottleneck never has to carry an identity map of the data.
    Array forward_x0(const Array& x_t, const Condition& c, int t) const {
        check_input(x_t);
        std::vector<double> in = x_t.values;
        std::vector<double> ce = condition_embedding(c);
        in.insert(in.end(), ce.begin(), ce.end());
        std::vector<double> tf = time_features(t, dims_.d_time);
        in.insert(in.end(), tf.begin(), tf.end());

        std::vector<double> h = affine_tanh("net/W1", "net/b1", in);
        h = affine_tanh("net/W2", "net/b2", h);
        h = affine_tanh("net/W3", "net/b3", h);
        const Array& wo = param("net/Wo");
        const Array& bo = param("net/bo");
        std::vector<double> out(dims_.d_x);
        for (int i = 0; i < dims_.d_x; ++i) {
            const double* row = wo.values.data() + static_cast<std::size_t>(i) * dims_.hidden;
            double acc = bo.values[i];
            for (int j = 0; j < dims_.hidden; ++j) acc += row[j] * h[j];
            out[i] = acc;
        }
        return Array::vec(std::move(out));
    }

    Array mean_from_x0(const Array& x_t, const Array& x0_hat, int t,
                       const NoiseSchedule& s) const {
        s.check_t(t);
        PosteriorCoeffs pc = posterior_mean_coeffs(t, s);
        Array out = x_t;
        for (std::size_t i = 0; i < out.size(); ++i)
            out.values[i] = pc.c_x0 * x0_hat.values[i] + pc.c_xt * x_t.values[i];
        return out;
    }

    // Plain posterior-mean prediction (frozen-style evaluation).
    Array predict_mean_value(const Array& x_t, const Condition& c, int t,
                             const NoiseSchedule& s) const {
        return mean_from_x0(x_t, forward_x0(x_t, c, t), t, s);
    }

    void check_input(const Array& x_t) const {
        if (x_t.shape.size() != 1 ||
            x_t.shape[0] != static_cast<std::size_t>(dims_.d_x))
            throw std::invalid_argument("denoiser: input shape " + x_t.shape_str() +
                                        " does not match d_x=" +
                                        std::to_string(dims_.d_x));
    }

    std::vector<std::string> select_trainable(TrainableMode mode,
                                              int subject_id) const {
        std::vector<std::string> names;
        if (mode == TrainableMode::FullModel)
            for (const auto& [k, v] : params_)
                if (k.rfind("net/", 0) == 0) names.push_back(k);
        names.push_back(subject_param(subject_id));
        return names;
    }

private:
    std::vector<double> affine_tanh(const std::string& wn, const std::string& bn,
                                    const std::vector<double>& x) const {
        const Array& w = param(wn);
        const Array& b = param(bn);
        std::size_t m = w.shape[0], n = w.shape[1];
        std::vector<double> out(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double* row = w.values.data() + i * n;
            double acc = b.values[i];
            for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
            out[i] = std::tanh(acc);
        }
        return out;
    }

    void add_param(const std::string& name, std::vector<std::size_t> shape,
                   CounterRng& rng, int fan_in) {
        Array a = Array::zeros(shape);
        if (fan_in > 0) {
            double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (double& v : a.values) v = s * rng.next_normal();
        }
        params_[name] = std::move(a);
    }

    DenoiserDims dims_;
    Vocabulary vocab_;
    std::map<std::string, Array> params_;
};

// Tape-side view of a denoiser: parameters registered as leaves once, then
// any number of forward passes build on the same tape.
class DenoiserTape {
public:
    DenoiserTape(Tape& tape, const Denoiser& model,
                 const std::vector<std::string>& trainable)
        : tape_(tape), model_(model) {
        for (const auto& [name, value] : model.params()) {
            bool rg = std::find(trainable.begin(), trainable.end(), name) !=
                      trainable.end();
            vars_[name] = tape.leaf(value, rg);
        }
    }

    Var var(const std::string& name) const {
        auto it = vars_.find(name);
        if (it == vars_.end())
            throw std::invalid_argument("unknown parameter: " + name);
        return it->second;
    }

    Var condition_embedding(const Condition& c) {
        std::vector<Var> rows;
        for (auto tok : c.tokens)
            rows.push_back(var(Denoiser::emb_name(model_.vocab().row_of(tok))));
        Var acc = rows[0];
        for (std::size_t i = 1; i < rows.size(); ++i) acc = tape_.add(acc, rows[i]);
        return tape_.scale(acc, 1.0 / static_cast<double>(rows.size()));
    }

    Var forward_x0(const Array& x_t, const Condition& c, int t) {
        model_.check_input(x_t);
        const DenoiserDims& d = model_.dims();
        Var xin = tape_.constant(x_t);
        Var ce = condition_embedding(c);
        Var tf = tape_.constant(Array::vec(time_features(t, d.d_time)));
        Var in = tape_.concat(std::array<Var, 3>{xin, ce, tf});
        Var h = tape_.tanh(tape_.add(tape_.matvec(var("net/W1"), in), var("net/b1")));
        h = tape_.tanh(tape_.add(tape_.matvec(var("net/W2"), h), var("net/b2")));
        h = tape_.tanh(tape_.add(tape_.matvec(var("net/W3"), h), var("net/b3")));
        return tape_.add(tape_.matvec(var("net/Wo"), h), var("net/bo"));
    }

    Var mean_from_x0(const Array& x_t, Var x0_hat, int t,
                     const NoiseSchedule& s) {
        s.check_t(t);
        PosteriorCoeffs pc = posterior_mean_coeffs(t, s);
        Array xt_term = x_t;
        for (double& v : xt_term.values) v *= pc.c_xt;
        return tape_.add(tape_.scale(x0_hat, pc.c_x0),
                         tape_.constant(std::move(xt_term)));
    }

    Tape& tape() { return tape_; }

private:
    Tape& tape_;
    const Denoiser& model_;
    std::map<std::string, Var> vars_;
};

// A branch-tagged posterior-mean prediction, as consumed by the losses.
struct Prediction {
    Var value;
    Branch branch = Branch::Live;
};

// predict_mean over the three branches. `pretrained` may be null unless the
// PretrainedFrozen branch is requested.
inline Prediction predict_mean(DenoiserTape& live, const Denoiser& frozen_model,
                               const Denoiser* pretrained, const Array& x_t,
                               const Condition& c, int t, const NoiseSchedule& s,
                               Branch branch) {
    switch (branch) {
        case Branch::Live: {
            Var x0 = live.forward_x0(x_t, c, t);
            return Prediction{live.mean_from_x0(x_t, x0, t, s), Branch::Live};
        }
        case Branch::Frozen: {
            Array v = frozen_model.predict_mean_value(x_t, c, t, s);
            return Prediction{live.tape().constant(std::move(v)), Branch::Frozen};
        }
        case Branch::PretrainedFrozen: {
            if (!pretrained)
                throw std::invalid_argument("predict_mean: no pretrained weights");
            Array v = pretrained->predict_mean_value(x_t, c, t, s);
            return Prediction{live.tape().constant(std::move(v)),
                              Branch::PretrainedFrozen};
        }
    }
    throw std::invalid_argument("predict_mean: bad branch");
}

}  // namespace sude
