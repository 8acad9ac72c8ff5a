#pragma once

// Pretraining on the glyph grid and one-shot subject fine-tuning in the four
// modes (baseline / +derivation / +class-image regularization / both).
// Every noise draw is counter-keyed, so runs are deterministic functions of
// (config, seed), and all modes draw the identical random sequence.

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sude/checkpoint.hpp"
#include "sude/config.hpp"
#include "sude/denoiser.hpp"
#include "sude/glyph.hpp"
#include "sude/losses.hpp"
#include "sude/rng.hpp"
#include "sude/schedule.hpp"

namespace sude {

class SgdMomentum {
public:
    SgdMomentum(double lr, double momentum) : lr_(lr), mu_(momentum) {}

    void step(Denoiser& model, const std::map<std::string, Array>& grads) {
        for (const auto& [name, g] : grads) {
            Array& p = model.param(name);
            Array& m = buffers_.try_emplace(name, Array::zeros(p.shape)).first->second;
            for (std::size_t i = 0; i < p.size(); ++i) {
                m.values[i] = mu_ * m.values[i] + g.values[i];
                p.values[i] -= lr_ * m.values[i];
            }
        }
    }

private:
    double lr_, mu_;
    std::map<std::string, Array> buffers_;
};

// Adam for fine-tuning: the regularizer's 1/(2 sigma_t^2) factor spans five
// orders of magnitude across steps, and per-coordinate second-moment
// normalization absorbs that spread where plain SGD lets single small-t
// draws dominate the update.
class Adam {
public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(Denoiser& model, const std::map<std::string, Array>& grads) {
        ++t_;
        double bc1 = 1.0 - std::pow(b1_, t_);
        double bc2 = 1.0 - std::pow(b2_, t_);
        for (const auto& [name, g] : grads) {
            Array& p = model.param(name);
            Array& m = m_.try_emplace(name, Array::zeros(p.shape)).first->second;
            Array& v = v_.try_emplace(name, Array::zeros(p.shape)).first->second;
            for (std::size_t i = 0; i < p.size(); ++i) {
                m.values[i] = b1_ * m.values[i] + (1.0 - b1_) * g.values[i];
                v.values[i] =
                    b2_ * v.values[i] + (1.0 - b2_) * g.values[i] * g.values[i];
                double mhat = m.values[i] / bc1;
                double vhat = v.values[i] / bc2;
                p.values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    int t_ = 0;
    std::map<std::string, Array> m_, v_;
};

struct PretrainResult {
    Denoiser model;
    std::vector<double> epoch_loss;
};

inline PretrainResult pretrain(const ExperimentConfig& cfg) {
    cfg.validate();
    Vocabulary vocab;
    NoiseSchedule sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end,
                                        cfg.sigma_min);
    std::vector<GlyphExample> data =
        gen_pretrain_set(cfg.dataset_seed, cfg.per_condition, vocab);
    Condition null_cond = null_condition();

    PretrainResult res{Denoiser(cfg.dims, vocab, cfg.seed), {}};
    Denoiser& model = res.model;
    SgdMomentum opt(cfg.pretrain_lr, 0.9);
    std::vector<std::string> all_params;
    for (const auto& [k, v] : model.params()) all_params.push_back(k);

    Tape tape;
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        // Seeded shuffle of the visit order.
        std::vector<std::size_t> order(data.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        CounterRng shuffle_rng(cfg.seed, mix_key(0x70726574ULL, epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_in(0, i - 1)]);

        double epoch_loss = 0.0;
        std::size_t batch = static_cast<std::size_t>(cfg.pretrain_batch);
        for (std::size_t off = 0; off < order.size(); off += batch) {
            std::size_t end = std::min(order.size(), off + batch);
            tape.reset();
            DenoiserTape live(tape, model, all_params);
            Var loss;
            for (std::size_t i = off; i < end; ++i) {
                const GlyphExample& ex = data[order[i]];
                CounterRng rng(cfg.seed,
                               mix_key(mix_key(0x6e6f697365ULL, epoch), order[i]));
                int t = static_cast<int>(rng.next_in(1, cfg.T));
                Array eps = Array::vec(rng.normal_vec(ex.image.size()));
                Array x_t = forward_noise(ex.image, eps, t, sched);
                // Classifier-free-style dropout at two granularities: the
                // whole condition falls back to null with uncond_drop, and
                // otherwise each token drops independently so partial
                // prompts (category alone, category + one attribute) are
                // in-distribution at fine-tune and evaluation time.
                bool drop = rng.next_uniform() < cfg.uncond_drop;
                Condition cond = null_cond;
                if (!drop) {
                    std::vector<ConditionToken> kept;
                    for (auto tok : ex.cond.tokens)
                        if (rng.next_uniform() >= cfg.token_drop)
                            kept.push_back(tok);
                    if (!kept.empty()) {
                        canonicalize(kept);
                        cond = Condition{std::move(kept)};
                    }
                }
                // Step-mean error weighted by 1/c_x0(t)^2, which reduces
                // exactly to the clean-data residual: the x_t passthrough
                // cancels, leaving |x0_hat - x0|^2. A flat weight starves
                // the high-noise steps (c_x0^2 ~ 2e-4 there) and leaves the
                // sampler's entry region untrained.
                Var x0_hat = live.forward_x0(x_t, cond, t);
                Var l = tape.mse(tape.constant(ex.image), x0_hat);
                loss = loss.valid() ? tape.add(loss, l) : l;
            }
            loss = tape.scale(loss, 1.0 / static_cast<double>(end - off));
            epoch_loss += loss.scalar() * static_cast<double>(end - off);
            tape.backward(loss);
            std::map<std::string, Array> grads;
            for (const std::string& name : all_params)
                grads[name] = tape.grad(live.var(name));
            opt.step(model, grads);
        }
        res.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    return res;
}

struct FinetuneLogRow {
    int step = 0;
    int t = 0;
    LossBreakdown loss;
};

struct FinetuneResult {
    Denoiser model;
    SubjectInstance subject;
    int subject_token_id = 0;
    std::vector<FinetuneLogRow> log;
};

inline FinetuneResult finetune(const ExperimentConfig& cfg,
                               const Denoiser& pretrained) {
    cfg.validate();
    NoiseSchedule sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end,
                                        cfg.sigma_min);
    FinetuneResult res;
    res.model = pretrained;
    res.subject = make_subject(cfg.subject_category, cfg.subject_seed);
    res.subject_token_id = 0;
    Denoiser& model = res.model;
    model.init_subject(res.subject_token_id, cfg.subject_category,
                       cfg.subject_seed);

    std::vector<std::string> trainable =
        model.select_trainable(cfg.trainable, res.subject_token_id);
    Adam opt(cfg.finetune_lr);

    // The training prompt names the subject together with its category (the
    // "a [V] dog" convention), so fine-tuning exercises the shared category
    // token and the regularizers have a real prior to protect.
    Condition c_sub = compose(subj_token(res.subject_token_id),
                              cat_token(cfg.subject_category), {}, {},
                              Template::P1);
    Condition c_cate = category_condition(cfg.subject_category, model.vocab());
    Condition c_null = null_condition();

    double w_s = cfg.effective_ws();
    double w_r = cfg.effective_wr();
    const Array& x0 = res.subject.example;

    Tape tape;
    for (int step = 0; step < cfg.finetune_steps; ++step) {
        CounterRng rng(cfg.seed, mix_key(0x66696e65ULL, step));
        int t = static_cast<int>(rng.next_in(1, cfg.T));
        Array eps = Array::vec(rng.normal_vec(x0.size()));
        Array x_t = forward_noise(x0, eps, t, sched);
        Array x_prev = posterior_mean(x0, x_t, t, sched);
        double sigma = posterior_sigma(t, sched);

        tape.reset();
        DenoiserTape live(tape, model, trainable);
        Prediction pred_sub =
            predict_mean(live, model, &pretrained, x_t, c_sub, t, sched, Branch::Live);
        // Reference branches come from the pretrained weights, not a detached
        // copy of the live model: at this scale a live-detached reference
        // drifts with the update it is supposed to anchor, and the derivation
        // term then chases its own tail until the backbone collapses. The
        // pretrained reference turns the truncation region into a fixed
        // half-space per (x_t, t).
        Prediction pred_cate_frozen =
            predict_mean(live, model, &pretrained, x_t, c_cate, t, sched,
                         Branch::PretrainedFrozen);
        Prediction pred_null_frozen =
            predict_mean(live, model, &pretrained, x_t, c_null, t, sched,
                         Branch::PretrainedFrozen);
        Prediction pred_cate_live =
            predict_mean(live, model, &pretrained, x_t, c_cate, t, sched, Branch::Live);

        TotalLossInputs in;
        in.l_sub = sub_loss(tape, pred_sub, tape.constant(x_prev));
        in.l_sude_raw = sude_raw(tape, pred_sub, pred_cate_frozen,
                                 pred_null_frozen, sigma);
        in.tau_t = cfg.truncation
                       ? threshold_tau(pred_cate_frozen, pred_null_frozen, sigma)
                       : -std::numeric_limits<double>::infinity();
        in.l_reg = cir_loss(tape, pred_cate_frozen, pred_cate_live);
        LossBreakdown lb = total_loss(tape, in, w_s, w_r);
        if (!cfg.truncation)
            lb.tau_t = threshold_tau(pred_cate_frozen, pred_null_frozen, sigma);

        tape.backward(lb.total_var);
        std::map<std::string, Array> grads;
        double norm2 = 0.0;
        for (const std::string& name : trainable) {
            Array g = tape.grad(live.var(name));
            for (double v : g.values) norm2 += v * v;
            grads[name] = std::move(g);
        }
        // The regularizer's 1/(2 sigma_t^2) factor reaches ~5e5 at the
        // smallest steps; a global-norm ceiling keeps single draws from
        // destroying the backbone.
        double norm = std::sqrt(norm2);
        if (norm > cfg.finetune_clip) {
            double scale = cfg.finetune_clip / norm;
            for (auto& [name, g] : grads)
                for (double& v : g.values) v *= scale;
        }
        opt.step(model, grads);

        res.log.push_back(FinetuneLogRow{step, t, lb});
    }
    return res;
}

}  // namespace sude
