#pragma once

// Verification suites behind the `verify` CLI subcommand: exact math
// identities, gradient contracts, and sampler convergence. Each row is
// (property, max error, tolerance, pass).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sude/array.hpp"
#include "sude/denoiser.hpp"
#include "sude/losses.hpp"
#include "sude/oracle.hpp"
#include "sude/glyph.hpp"
#include "sude/rng.hpp"
#include "sude/sampler.hpp"
#include "sude/schedule.hpp"
#include "sude/train.hpp"

namespace sude {

struct VerifyRow {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline VerifyRow make_row(std::string name, double err, double tol) {
    return VerifyRow{std::move(name), err, tol, err < tol};
}

// Small exact-world fixture shared by the suites.
inline DiracWorld test_world(int d_x = 2, std::size_t n_conditions = 3,
                             std::uint64_t seed = 42) {
    DiracWorld w;
    w.schedule = make_schedule(100, 1e-4, 0.05);
    CounterRng rng(seed, 0x776f726c64ULL);
    double total = 0.0;
    std::vector<double> raw;
    for (std::size_t c = 0; c < n_conditions; ++c) {
        std::vector<double> a(d_x);
        for (double& v : a) v = 2.0 * rng.next_uniform() - 1.0;
        // Spread anchors out to keep pairwise distances comfortably positive.
        a[c % d_x] += (c % 2 == 0 ? 1.5 : -1.5);
        w.anchors.push_back(Array::vec(std::move(a)));
        double p = 0.2 + rng.next_uniform();
        raw.push_back(p);
        total += p;
    }
    for (double p : raw) w.priors.push_back(p / total);
    // Exact normalization to satisfy the 1e-12 prior invariant.
    double s = 0.0;
    for (double p : w.priors) s += p;
    w.priors.back() += 1.0 - s;
    w.validate();
    return w;
}

inline std::vector<VerifyRow> verify_math() {
    std::vector<VerifyRow> rows;

    {  // decomposition identity over randomized discrete worlds
        CounterRng rng(123, 0x6465636fULL);
        double max_err = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            DiscreteWorld w;
            w.n_states = 4;
            w.n_categories = 3;
            w.joint.resize(w.n_states * w.n_categories);
            double sum = 0.0;
            for (double& v : w.joint) {
                v = 0.05 + rng.next_uniform();
                sum += v;
            }
            for (double& v : w.joint) v /= sum;
            max_err = std::max(max_err, decomposition_check(w));
        }
        rows.push_back(make_row("decomposition_identity", max_err, 1e-10));
    }

    {  // revealed classifier == joint-density Bayes route
        DiracWorld w = test_world();
        std::vector<std::size_t> cands = {0, 1, 2};
        int T = w.schedule.T;
        std::vector<int> tgrid = {1, T / 4, T / 2, 3 * T / 4, T};
        double max_err = 0.0;
        for (int t : tgrid)
            for (int draw = 0; draw < 100; ++draw) {
                CounterRng rng(777, mix_key(t, draw));
                std::size_t c = rng.next_in(0, cands.size() - 1);
                const Array& anchor = w.anchors[c];
                Array eps_prev = Array::vec(rng.normal_vec(anchor.size()));
                Array x_prev = anchor;
                if (t > 1)
                    x_prev = forward_noise(anchor, eps_prev, t - 1, w.schedule);
                Array x_t = x_prev;
                double beta = w.schedule.beta[t];
                for (std::size_t i = 0; i < x_t.size(); ++i)
                    x_t.values[i] = std::sqrt(1.0 - beta) * x_prev.values[i] +
                                    std::sqrt(beta) * rng.next_normal();
                std::vector<double> a = revealed_posterior(w, x_t, x_prev, t, cands);
                std::vector<double> b = joint_bayes_posterior(w, x_prev, x_t, t, cands);
                for (std::size_t k = 0; k < cands.size(); ++k)
                    max_err = std::max(max_err, std::abs(a[k] - b[k]));
            }
        rows.push_back(make_row("classifier_factorization", max_err, 1e-8));
    }

    {  // boundary identity: raw(s = cate) == tau, gate closed
        CounterRng rng(9, 0x626f756eULL);
        double max_err = 0.0;
        bool gates_ok = true;
        for (int trial = 0; trial < 10000; ++trial) {
            std::size_t n = 4;
            Array cate = Array::vec(rng.normal_vec(n));
            Array unc = Array::vec(rng.normal_vec(n));
            double sigma = 0.05 + rng.next_uniform();
            Tape tape;
            Prediction ps{tape.leaf(cate, true), Branch::Live};
            Prediction pc{tape.constant(cate), Branch::Frozen};
            Prediction pu{tape.constant(unc), Branch::Frozen};
            double raw = sude_raw(tape, ps, pc, pu, sigma).scalar();
            double tau = threshold_tau(pc, pu, sigma);
            max_err = std::max(max_err, std::abs(raw - tau));
            if (truncate(raw, tau).gate != 0) gates_ok = false;
        }
        rows.push_back(make_row("boundary_identity", max_err, 1e-12));
        rows.push_back(make_row("boundary_gate_closed", gates_ok ? 0.0 : 1.0, 0.5));
    }

    {  // schedule sigma vs brute-force conditioning of the forward joint
        NoiseSchedule s = make_schedule(100, 1e-4, 0.05);
        double max_err = 0.0;
        for (int t = 2; t <= s.T; ++t) {
            double ab_prev = s.alpha_bar[t - 1];
            double beta = s.beta[t];
            double var_prev = 1.0 - ab_prev;
            double cov = std::sqrt(1.0 - beta) * var_prev;
            double var_t = (1.0 - beta) * var_prev + beta;
            double cond_var = var_prev - cov * cov / var_t;
            max_err = std::max(
                max_err, std::abs(std::sqrt(cond_var) - posterior_sigma(t, s)));
        }
        rows.push_back(make_row("posterior_sigma_conditioning", max_err, 1e-8));
    }

    return rows;
}

inline std::vector<VerifyRow> verify_gradients() {
    std::vector<VerifyRow> rows;

    {  // tape gradients vs central differences on random compositions
        CounterRng rng(5, 0x67726164ULL);
        double max_err = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            std::size_t n = 3;
            std::vector<double> p0(2 * n);
            for (double& v : p0) v = 4.0 * rng.next_uniform() - 2.0;
            auto f = [&](const std::vector<double>& p) {
                Tape tape;
                Var a = tape.leaf(Array::vec({p.begin(), p.begin() + n}), true);
                Var b = tape.leaf(Array::vec({p.begin() + n, p.end()}), true);
                Var h = tape.tanh(tape.mul(a, b));
                Var loss = tape.add(tape.mse(h, b), tape.scale(tape.sum(a), 0.5));
                return loss.scalar();
            };
            Tape tape;
            Var a = tape.leaf(Array::vec({p0.begin(), p0.begin() + n}), true);
            Var b = tape.leaf(Array::vec({p0.begin() + n, p0.end()}), true);
            Var h = tape.tanh(tape.mul(a, b));
            Var loss = tape.add(tape.mse(h, b), tape.scale(tape.sum(a), 0.5));
            tape.backward(loss);
            std::vector<double> grad = tape.grad(a).values;
            std::vector<double> gb = tape.grad(b).values;
            grad.insert(grad.end(), gb.begin(), gb.end());
            FiniteDiffReport rep = finite_diff_check(f, p0, grad, 1e-5, 1e-4);
            max_err = std::max(max_err, rep.max_rel_error);
        }
        rows.push_back(make_row("random_composition_fd", max_err, 1e-4));
    }

    {  // full objective on a toy denoiser vs central differences
        ExperimentConfig cfg;
        cfg.dims = DenoiserDims{4, 4, 4, 8};
        cfg.T = 10;
        NoiseSchedule sched = make_schedule(cfg.T, 1e-3, 0.1, cfg.sigma_min);
        Vocabulary vocab;
        Denoiser model(cfg.dims, vocab, 3);
        model.init_subject(0, 0, 3);
        Denoiser pretrained = model;
        std::vector<std::string> trainable = model.select_trainable(
            TrainableMode::FullModel, 0);

        CounterRng rng(21, 0x746f79ULL);
        Array x0 = Array::vec(rng.normal_vec(4));
        int t = 6;
        Array eps = Array::vec(rng.normal_vec(4));
        Array x_t = forward_noise(x0, eps, t, sched);
        Array x_prev = posterior_mean(x0, x_t, t, sched);
        double sigma = posterior_sigma(t, sched);
        Condition c_sub = compose(subj_token(0), std::nullopt, {}, {}, Template::P0);
        Condition c_cate = category_condition(0, vocab);
        Condition c_null = null_condition();

        // Flatten trainable params, evaluate, compare.
        std::vector<double> flat;
        for (const auto& name : trainable)
            for (double v : model.param(name).values) flat.push_back(v);
        auto unflatten = [&](const std::vector<double>& p) {
            Denoiser m = model;
            std::size_t off = 0;
            for (const auto& name : trainable) {
                Array& a = m.param(name);
                for (std::size_t i = 0; i < a.size(); ++i)
                    a.values[i] = p[off++];
            }
            return m;
        };
        auto f = [&](const std::vector<double>& p) {
            Denoiser m = unflatten(p);
            Tape tape;
            DenoiserTape live(tape, m, trainable);
            Prediction ps = predict_mean(live, m, &pretrained, x_t, c_sub, t,
                                         sched, Branch::Live);
            Prediction pc = predict_mean(live, m, &pretrained, x_t, c_cate, t,
                                         sched, Branch::Frozen);
            Prediction pu = predict_mean(live, m, &pretrained, x_t, c_null, t,
                                         sched, Branch::Frozen);
            Prediction pp = predict_mean(live, m, &pretrained, x_t, c_cate, t,
                                         sched, Branch::PretrainedFrozen);
            Prediction pl = predict_mean(live, m, &pretrained, x_t, c_cate, t,
                                         sched, Branch::Live);
            TotalLossInputs in;
            in.l_sub = sub_loss(tape, ps, tape.constant(x_prev));
            in.l_sude_raw = sude_raw(tape, ps, pc, pu, sigma);
            in.tau_t = threshold_tau(pc, pu, sigma);
            in.l_reg = cir_loss(tape, pp, pl);
            return total_loss(tape, in, 0.4, 1.0).total_var.scalar();
        };
        std::vector<double> grad;
        Tape tape3;
        DenoiserTape live3(tape3, model, trainable);
        Prediction ps = predict_mean(live3, model, &pretrained, x_t, c_sub, t,
                                     sched, Branch::Live);
        Prediction pc = predict_mean(live3, model, &pretrained, x_t, c_cate, t,
                                     sched, Branch::Frozen);
        Prediction pu = predict_mean(live3, model, &pretrained, x_t, c_null, t,
                                     sched, Branch::Frozen);
        Prediction pp = predict_mean(live3, model, &pretrained, x_t, c_cate, t,
                                     sched, Branch::PretrainedFrozen);
        Prediction pl = predict_mean(live3, model, &pretrained, x_t, c_cate, t,
                                     sched, Branch::Live);
        TotalLossInputs in;
        in.l_sub = sub_loss(tape3, ps, tape3.constant(x_prev));
        in.l_sude_raw = sude_raw(tape3, ps, pc, pu, sigma);
        in.tau_t = threshold_tau(pc, pu, sigma);
        in.l_reg = cir_loss(tape3, pp, pl);
        LossBreakdown lb3 = total_loss(tape3, in, 0.4, 1.0);
        tape3.backward(lb3.total_var);
        for (const auto& name : trainable) {
            Array g = tape3.grad(live3.var(name));
            grad.insert(grad.end(), g.values.begin(), g.values.end());
        }
        FiniteDiffReport rep = finite_diff_check(f, flat, grad, 1e-5, 1e-4);
        rows.push_back(make_row("full_objective_fd", rep.max_rel_error, 1e-4));

        // Frozen-branch gradients must be exactly zero: the regularizer's
        // frozen inputs are constants on the tape.
        double frozen_grad = 0.0;
        for (Var v : {pc.value, pu.value, pp.value}) {
            Array g = tape3.grad(v);
            for (double x : g.values) frozen_grad = std::max(frozen_grad, std::abs(x));
        }
        rows.push_back(make_row("frozen_branch_grads_zero", frozen_grad, 1e-300));
    }

    {  // positive-scale ordering invariance of w_s * raw
        CounterRng rng(31, 0x6f726465ULL);
        bool ok = true;
        std::vector<double> weights = {0.1, 0.4, 1.5, 2.0};
        for (int trial = 0; trial < 10000; ++trial) {
            std::size_t n = 3;
            Array cate = Array::vec(rng.normal_vec(n));
            Array unc = Array::vec(rng.normal_vec(n));
            Array s1 = Array::vec(rng.normal_vec(n));
            Array s2 = Array::vec(rng.normal_vec(n));
            double sigma = 0.1 + rng.next_uniform();
            Tape tape;
            Prediction pc{tape.constant(cate), Branch::Frozen};
            Prediction pu{tape.constant(unc), Branch::Frozen};
            Prediction pa{tape.leaf(s1, true), Branch::Live};
            Prediction pb{tape.leaf(s2, true), Branch::Live};
            double ra = sude_raw(tape, pa, pc, pu, sigma).scalar();
            double rb = sude_raw(tape, pb, pc, pu, sigma).scalar();
            auto sgn = [](double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); };
            for (double w : weights)
                if (sgn(w * ra - w * rb) != sgn(ra - rb)) ok = false;
        }
        rows.push_back(make_row("ws_ordering_invariance", ok ? 0.0 : 1.0, 0.5));
    }

    return rows;
}

inline std::vector<VerifyRow> verify_sampler() {
    std::vector<VerifyRow> rows;
    DiracWorld w = test_world(2, 3, 4242);
    std::size_t cond = 1;
    MeanPredictor exact = [&](const Array& x, int t) {
        return exact_mean(w, x, cond, t);
    };

    {  // exact-denoiser DDIM(50, eta=0) convergence to the anchor
        double max_err = 0.0;
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            auto trajs = sample(exact, 2, w.schedule, SampleMethod::Ddim, 50,
                                0.0, seed, 1);
            for (std::size_t i = 0; i < 2; ++i)
                max_err = std::max(max_err,
                                   std::abs(trajs[0].final_x0.values[i] -
                                            w.anchors[cond].values[i]));
        }
        rows.push_back(make_row("ddim_exact_convergence", max_err, 1e-3));
    }

    {  // ancestral chain lands within 3-sigma statistics of the anchor
        int n = 200;
        double mean0 = 0.0, mean1 = 0.0;
        auto trajs = sample(exact, 2, w.schedule, SampleMethod::Ddpm, w.schedule.T,
                            1.0, 99, n);
        double var0 = 0.0;
        for (const auto& tr : trajs) {
            mean0 += tr.final_x0.values[0];
            mean1 += tr.final_x0.values[1];
        }
        mean0 /= n;
        mean1 /= n;
        for (const auto& tr : trajs) {
            double d = tr.final_x0.values[0] - mean0;
            var0 += d * d;
        }
        var0 /= n;
        double se = std::sqrt(var0 / n) + 1e-6;
        double err = std::max(std::abs(mean0 - w.anchors[cond].values[0]),
                              std::abs(mean1 - w.anchors[cond].values[1]));
        rows.push_back(make_row("ddpm_exact_mean_3sigma", err, 3.0 * se + 0.05));
    }

    {  // determinism: identical inputs, identical bytes
        auto a = sample(exact, 2, w.schedule, SampleMethod::Ddim, 25, 0.0, 7, 3);
        auto b = sample(exact, 2, w.schedule, SampleMethod::Ddim, 25, 0.0, 7, 3);
        bool same = true;
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t k = 0; k < a[i].final_x0.size(); ++k)
                if (a[i].final_x0.values[k] != b[i].final_x0.values[k])
                    same = false;
        rows.push_back(make_row("sampler_determinism", same ? 0.0 : 1.0, 0.5));
    }

    return rows;
}

inline std::vector<VerifyRow> verify_all() {
    std::vector<VerifyRow> rows = verify_math();
    for (auto& r : verify_gradients()) rows.push_back(r);
    for (auto& r : verify_sampler()) rows.push_back(r);
    return rows;
}

}  // namespace sude
