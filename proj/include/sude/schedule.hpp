#pragma once

// Linear-beta noise schedule, the closed-form forward process, and the
// forward-posterior standard deviation used by the regularization losses.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sude/array.hpp"

namespace sude {

struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // beta[t], t = 1..T (index 0 unused)
    std::vector<double> alpha_bar;  // alpha_bar[t], t = 0..T, alpha_bar[0] = 1
    std::vector<double> sigma;      // sigma[t], t = 1..T (index 0 unused)
    double sigma_min = 1e-3;

    void check_t(int t) const {
        if (t < 1 || t > T)
            throw std::out_of_range("schedule: step " + std::to_string(t) +
                                    " outside 1.." + std::to_string(T));
    }
};

inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end,
                                   double sigma_min = 1e-3) {
    if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument(
            "make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.sigma_min = sigma_min;
    s.beta.assign(T + 1, 0.0);
    s.alpha_bar.assign(T + 1, 1.0);
    s.sigma.assign(T + 1, 0.0);
    for (int t = 1; t <= T; ++t) {
        s.beta[t] = beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
        s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t]);
        double raw = std::sqrt((1.0 - s.alpha_bar[t - 1]) /
                               (1.0 - s.alpha_bar[t]) * s.beta[t]);
        s.sigma[t] = std::max(sigma_min, raw);
    }
    return s;
}

inline double posterior_sigma(int t, const NoiseSchedule& s) {
    s.check_t(t);
    return s.sigma[t];
}

// x_t = sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) eps
inline Array forward_noise(const Array& x0, const Array& eps, int t,
                           const NoiseSchedule& s) {
    s.check_t(t);
    require_same_shape(x0, eps, "forward_noise");
    double a = std::sqrt(s.alpha_bar[t]);
    double b = std::sqrt(1.0 - s.alpha_bar[t]);
    Array out = x0;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] = a * x0.values[i] + b * eps.values[i];
    return out;
}

// Coefficients of the forward-posterior mean of x_{t-1} given (x_t, x0):
//   mean = c_x0 * x0 + c_xt * x_t
struct PosteriorCoeffs {
    double c_x0 = 0.0;
    double c_xt = 0.0;
};

inline PosteriorCoeffs posterior_mean_coeffs(int t, const NoiseSchedule& s) {
    s.check_t(t);
    double ab_prev = s.alpha_bar[t - 1];
    double ab = s.alpha_bar[t];
    double beta = s.beta[t];
    PosteriorCoeffs c;
    c.c_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    c.c_xt = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    return c;
}

inline Array posterior_mean(const Array& x0, const Array& xt, int t,
                            const NoiseSchedule& s) {
    require_same_shape(x0, xt, "posterior_mean");
    PosteriorCoeffs c = posterior_mean_coeffs(t, s);
    Array out = x0;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] = c.c_x0 * x0.values[i] + c.c_xt * xt.values[i];
    return out;
}

}  // namespace sude
