#pragma once

// Exact ground truth in a world where each condition owns a single clean
// data point. There the reverse conditional is exactly Gaussian, so the
// revealed implicit classifier can be checked against an independent
// joint-density Bayes route with zero modeling error.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sude/array.hpp"
#include "sude/schedule.hpp"

namespace sude {

struct DiracWorld {
    std::vector<Array> anchors;   // one clean point per condition
    std::vector<double> priors;   // strictly positive, sums to 1
    NoiseSchedule schedule;

    void validate() const {
        if (anchors.empty() || anchors.size() != priors.size())
            throw std::invalid_argument("DiracWorld: anchors/priors mismatch");
        double s = 0.0;
        for (double p : priors) {
            if (!(p > 0.0)) throw std::invalid_argument("DiracWorld: nonpositive prior");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-12)
            throw std::invalid_argument("DiracWorld: priors do not sum to 1");
        for (std::size_t i = 0; i < anchors.size(); ++i)
            for (std::size_t j = i + 1; j < anchors.size(); ++j) {
                double d = 0.0;
                for (std::size_t k = 0; k < anchors[i].size(); ++k) {
                    double e = anchors[i].values[k] - anchors[j].values[k];
                    d += e * e;
                }
                if (!(d > 0.0))
                    throw std::invalid_argument("DiracWorld: coincident anchors");
            }
    }

    const Array& anchor(std::size_t c) const {
        if (c >= anchors.size())
            throw std::invalid_argument("DiracWorld: unknown condition " +
                                        std::to_string(c));
        return anchors[c];
    }
};

// Forward-posterior mean of x_{t-1} given (x_t, anchor[c]): the unique
// optimizer of the denoising loss in this world.
inline Array exact_mean(const DiracWorld& w, const Array& x_t, std::size_t c,
                        int t) {
    return posterior_mean(w.anchor(c), x_t, t, w.schedule);
}

namespace detail {

inline void softmax_inplace(std::vector<double>& logp) {
    double mx = logp[0];
    for (double v : logp) mx = std::max(mx, v);
    double s = 0.0;
    for (double& v : logp) {
        v = std::exp(v - mx);
        s += v;
    }
    for (double& v : logp) v /= s;
}

// log N(x; sqrt(ab) anchor, (1-ab) I), dropping x-independent constants is
// not allowed here because dimensions are shared across candidates anyway;
// keep the full log density for clarity.
inline double log_forward_marginal(const Array& x, const Array& anchor,
                                   double alpha_bar) {
    double var = 1.0 - alpha_bar;
    double a = std::sqrt(alpha_bar);
    double q = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x.values[i] - a * anchor.values[i];
        q += d * d;
    }
    double n = static_cast<double>(x.size());
    return -0.5 * q / var - 0.5 * n * std::log(6.283185307179586 * var);
}

}  // namespace detail

// p(condition | x at noise level t_level) from priors and the forward
// marginals. t_level = 0 is the degenerate clean level: mass goes to the
// exactly matching anchor (nearest, in the limiting sense).
inline std::vector<double> bayes_posterior(const DiracWorld& w, const Array& x,
                                           int t_level,
                                           const std::vector<std::size_t>& candidates) {
    if (candidates.empty())
        throw std::invalid_argument("bayes_posterior: no candidates");
    std::vector<double> logp(candidates.size());
    if (t_level == 0) {
        // Dirac marginal: one-hot at the nearest anchor.
        std::size_t best = 0;
        double bestd = 0.0;
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            const Array& a = w.anchor(candidates[k]);
            double d = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                double e = x.values[i] - a.values[i];
                d += e * e;
            }
            if (k == 0 || d < bestd) {
                best = k;
                bestd = d;
            }
        }
        std::vector<double> p(candidates.size(), 0.0);
        p[best] = 1.0;
        return p;
    }
    w.schedule.check_t(t_level);
    for (std::size_t k = 0; k < candidates.size(); ++k)
        logp[k] = std::log(w.priors[candidates[k]]) +
                  detail::log_forward_marginal(x, w.anchor(candidates[k]),
                                               w.schedule.alpha_bar[t_level]);
    detail::softmax_inplace(logp);
    return logp;
}

// Independent route for p(c | x_prev, x_t): the literal forward-joint
// factorization q(x_prev | anchor_c) q(x_t | x_prev), normalized over
// candidates. At t = 1 the level-0 marginal is a Dirac and the posterior is
// one-hot at the matching anchor.
inline std::vector<double> joint_bayes_posterior(
    const DiracWorld& w, const Array& x_prev, const Array& x_t, int t,
    const std::vector<std::size_t>& candidates) {
    w.schedule.check_t(t);
    if (candidates.empty())
        throw std::invalid_argument("joint_bayes_posterior: no candidates");
    if (t == 1) return bayes_posterior(w, x_prev, 0, candidates);
    // log q(x_t | x_prev) under the single forward transition.
    double beta = w.schedule.beta[t];
    double trans = 0.0;
    double a = std::sqrt(1.0 - beta);
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        double d = x_t.values[i] - a * x_prev.values[i];
        trans += d * d;
    }
    double log_trans = -0.5 * trans / beta -
                       0.5 * static_cast<double>(x_t.size()) *
                           std::log(6.283185307179586 * beta);
    std::vector<double> logp(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k)
        logp[k] = std::log(w.priors[candidates[k]]) +
                  detail::log_forward_marginal(x_prev, w.anchor(candidates[k]),
                                               w.schedule.alpha_bar[t - 1]) +
                  log_trans;
    detail::softmax_inplace(logp);
    return logp;
}

// The revealed implicit classifier: softmax over candidates of
// log C_t(k) - |x_prev - exact_mean(x_t, k, t)|^2 / (2 sigma_t^2),
// with C_t the marginal posterior at level t.
inline std::vector<double> revealed_posterior(
    const DiracWorld& w, const Array& x_t, const Array& x_prev, int t,
    const std::vector<std::size_t>& candidates) {
    w.schedule.check_t(t);
    std::vector<double> ct = bayes_posterior(w, x_t, t, candidates);
    double sig = posterior_sigma(t, w.schedule);
    std::vector<double> logp(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        Array m = exact_mean(w, x_t, candidates[k], t);
        double q = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            double d = x_prev.values[i] - m.values[i];
            q += d * d;
        }
        logp[k] = std::log(ct[k]) - q / (2.0 * sig * sig);
    }
    detail::softmax_inplace(logp);
    return logp;
}

// A tabulated joint p(x_state, category) given some fixed context; used to
// check the chain-rule decomposition by brute-force marginalization.
struct DiscreteWorld {
    std::size_t n_states = 0;
    std::size_t n_categories = 0;
    std::vector<double> joint;  // row-major [state][category], sums to 1

    double p(std::size_t s, std::size_t c) const {
        return joint[s * n_categories + c];
    }
};

// Max absolute error over all outcomes of
//   log p(x) + log p(c|x) - log p(x|c) - log p(c)
// which must vanish for any strictly positive joint.
inline double decomposition_check(const DiscreteWorld& w) {
    if (w.joint.size() != w.n_states * w.n_categories)
        throw std::invalid_argument("decomposition_check: bad table size");
    for (double v : w.joint)
        if (!(v > 0.0))
            throw std::invalid_argument(
                "decomposition_check: identity requires full support");
    std::vector<double> px(w.n_states, 0.0), pc(w.n_categories, 0.0);
    for (std::size_t s = 0; s < w.n_states; ++s)
        for (std::size_t c = 0; c < w.n_categories; ++c) {
            px[s] += w.p(s, c);
            pc[c] += w.p(s, c);
        }
    double max_err = 0.0;
    for (std::size_t s = 0; s < w.n_states; ++s)
        for (std::size_t c = 0; c < w.n_categories; ++c) {
            double lhs = std::log(px[s]) + std::log(w.p(s, c) / px[s]);
            double rhs = std::log(w.p(s, c) / pc[c]) + std::log(pc[c]);
            max_err = std::max(max_err, std::abs(lhs - rhs));
        }
    return max_err;
}

}  // namespace sude
