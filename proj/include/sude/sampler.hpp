#pragma once

// Ancestral (DDPM) and deterministic (DDIM) reverse-process sampling from
// any posterior-mean predictor (a trained denoiser or the exact oracle).

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sude/array.hpp"
#include "sude/rng.hpp"
#include "sude/schedule.hpp"

namespace sude {

// Posterior-mean prediction for a fixed condition: (x_t, t) -> mean.
using MeanPredictor = std::function<Array(const Array&, int)>;

enum class SampleMethod { Ddpm, Ddim };

inline SampleMethod method_from_string(const std::string& s) {
    if (s == "ddpm") return SampleMethod::Ddpm;
    if (s == "ddim") return SampleMethod::Ddim;
    throw std::invalid_argument("unknown sample method: " + s);
}

inline std::string to_string(SampleMethod m) {
    return m == SampleMethod::Ddpm ? "ddpm" : "ddim";
}

inline Array ddpm_step(const MeanPredictor& predict, const Array& x_t, int t,
                       const NoiseSchedule& s, const Array& noise) {
    s.check_t(t);
    Array out = predict(x_t, t);
    if (t > 1) {
        double sig = posterior_sigma(t, s);
        for (std::size_t i = 0; i < out.size(); ++i)
            out.values[i] += sig * noise.values[i];
    }
    return out;
}

// Evenly spaced decreasing subsequence of T..1 with exactly `steps` entries.
inline std::vector<int> ddim_plan(int T, int steps) {
    if (steps < 1 || steps > T)
        throw std::invalid_argument("ddim_plan: need 1 <= steps <= T");
    std::vector<int> plan(steps);
    if (steps == 1) {
        plan[0] = T;
        return plan;
    }
    for (int i = 0; i < steps; ++i) {
        double v = T - static_cast<double>(i) * (T - 1) / (steps - 1);
        plan[i] = static_cast<int>(std::lround(v));
    }
    plan.back() = 1;
    return plan;
}

// Recover eps from the mean prediction, form the x0 estimate, and re-noise
// to level t_to. eta = 0 is fully deterministic; t_to = 0 returns the x0
// estimate.
inline Array ddim_step(const MeanPredictor& predict, const Array& x_t,
                       int t_from, int t_to, const NoiseSchedule& s, double eta,
                       const Array* noise = nullptr) {
    if (!(t_from > t_to && t_to >= 0))
        throw std::invalid_argument("ddim_step: need t_from > t_to >= 0");
    if (!(eta >= 0.0 && eta <= 1.0))
        throw std::invalid_argument("ddim_step: need 0 <= eta <= 1");
    s.check_t(t_from);
    Array mean = predict(x_t, t_from);
    double beta = s.beta[t_from];
    double ab_from = s.alpha_bar[t_from];
    double coef = beta / std::sqrt(1.0 - ab_from);
    // mean = (x_t - coef * eps) / sqrt(1 - beta)
    Array eps = x_t;
    for (std::size_t i = 0; i < eps.size(); ++i)
        eps.values[i] =
            (x_t.values[i] - std::sqrt(1.0 - beta) * mean.values[i]) / coef;
    Array x0 = x_t;
    double sab = std::sqrt(ab_from);
    for (std::size_t i = 0; i < x0.size(); ++i)
        x0.values[i] =
            (x_t.values[i] - std::sqrt(1.0 - ab_from) * eps.values[i]) / sab;
    if (t_to == 0) return x0;
    double ab_to = s.alpha_bar[t_to];
    double sig = eta * std::sqrt((1.0 - ab_to) / (1.0 - ab_from)) *
                 std::sqrt(1.0 - ab_from / ab_to);
    double dir = std::sqrt(std::max(0.0, 1.0 - ab_to - sig * sig));
    Array out = x_t;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values[i] = std::sqrt(ab_to) * x0.values[i] + dir * eps.values[i];
        if (sig > 0.0 && noise) out.values[i] += sig * noise->values[i];
    }
    return out;
}

struct SampleTrajectory {
    std::uint64_t seed = 0;
    std::vector<int> steps;
    Array final_x0;
};

// `count` independent trajectories, each keyed by (seed, trajectory index);
// every noise draw is keyed further by the step, so results are independent
// of execution order.
inline std::vector<SampleTrajectory> sample(const MeanPredictor& predict,
                                            std::size_t d_x,
                                            const NoiseSchedule& s,
                                            SampleMethod method, int steps,
                                            double eta, std::uint64_t seed,
                                            int count) {
    if (count < 1) throw std::invalid_argument("sample: count >= 1");
    std::vector<SampleTrajectory> out;
    out.reserve(count);
    for (int traj = 0; traj < count; ++traj) {
        std::uint64_t tkey = mix_key(seed, static_cast<std::uint64_t>(traj));
        SampleTrajectory tr;
        tr.seed = tkey;
        CounterRng init_rng(tkey, 0);
        Array x = Array::vec(init_rng.normal_vec(d_x));
        if (method == SampleMethod::Ddpm) {
            for (int t = s.T; t >= 1; --t) {
                tr.steps.push_back(t);
                CounterRng step_rng(tkey, static_cast<std::uint64_t>(t));
                Array noise = Array::vec(step_rng.normal_vec(d_x));
                x = ddpm_step(predict, x, t, s, noise);
            }
        } else {
            std::vector<int> plan = ddim_plan(s.T, steps);
            plan.push_back(0);
            for (std::size_t i = 0; i + 1 < plan.size(); ++i) {
                tr.steps.push_back(plan[i]);
                CounterRng step_rng(tkey, static_cast<std::uint64_t>(plan[i]));
                Array noise = Array::vec(step_rng.normal_vec(d_x));
                x = ddim_step(predict, x, plan[i], plan[i + 1], s, eta, &noise);
            }
        }
        tr.final_x0 = std::move(x);
        out.push_back(std::move(tr));
    }
    return out;
}

}  // namespace sude
