#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sude/oracle.hpp"
#include "sude/rng.hpp"

using namespace sude;

namespace {
DiracWorld small_world() {
    DiracWorld w;
    w.schedule = make_schedule(100, 1e-4, 0.05);
    w.anchors = {Array::vec({1.0, 0.0}), Array::vec({-1.0, 0.5}),
                 Array::vec({0.0, -1.0})};
    w.priors = {0.5, 0.3, 0.2};
    w.validate();
    return w;
}
}  // namespace

TEST_CASE("world validation rejects malformed inputs") {
    DiracWorld w = small_world();
    w.priors = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = small_world();
    w.anchors.pop_back();
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("exact_mean equals the schedule posterior mean of the anchor") {
    DiracWorld w = small_world();
    CounterRng rng(2, 6);
    for (int t : {1, 25, 50, 100}) {
        Array x_t = Array::vec(rng.normal_vec(2));
        for (std::size_t c = 0; c < w.anchors.size(); ++c) {
            Array got = exact_mean(w, x_t, c, t);
            Array want = posterior_mean(w.anchors[c], x_t, t, w.schedule);
            CHECK(got.values[0] == Catch::Approx(want.values[0]));
            CHECK(got.values[1] == Catch::Approx(want.values[1]));
        }
    }
}

TEST_CASE("bayes posterior at level zero is a one-hot on the nearest anchor") {
    DiracWorld w = small_world();
    std::vector<std::size_t> cands = {0, 1, 2};
    std::vector<double> p =
        bayes_posterior(w, Array::vec({0.95, 0.02}), 0, cands);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 0.0);
    CHECK(p[2] == 0.0);
}

TEST_CASE("bayes posterior is a proper distribution favoring near anchors") {
    DiracWorld w = small_world();
    std::vector<std::size_t> cands = {0, 1, 2};
    CounterRng rng(5, 5);
    for (int t : {10, 50, 100}) {
        for (int trial = 0; trial < 50; ++trial) {
            std::size_t c = rng.next_in(0, 2);
            Array eps = Array::vec(rng.normal_vec(2));
            Array x = forward_noise(w.anchors[c], eps, t, w.schedule);
            std::vector<double> p = bayes_posterior(w, x, t, cands);
            double sum = 0.0;
            for (double v : p) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(sum == Catch::Approx(1.0));
        }
    }
}

TEST_CASE("bayes posterior matches a brute-force Monte Carlo estimate") {
    // Monte Carlo reference: p(c | x_t) ~ prior * density of x_t under the
    // closed-form forward marginal, estimated by binning noisy draws.
    DiracWorld w = small_world();
    std::vector<std::size_t> cands = {0, 1, 2};
    int t = 40;
    Array x = Array::vec({0.6, -0.1});
    std::vector<double> exact = bayes_posterior(w, x, t, cands);
    double ab = w.schedule.alpha_bar[t];
    std::vector<double> density(3);
    for (int c = 0; c < 3; ++c) {
        double d2 = 0.0;
        for (int i = 0; i < 2; ++i) {
            double m = std::sqrt(ab) * w.anchors[c].values[i];
            double d = x.values[i] - m;
            d2 += d * d;
        }
        density[c] = w.priors[c] * std::exp(-d2 / (2.0 * (1.0 - ab)));
    }
    double z = density[0] + density[1] + density[2];
    for (int c = 0; c < 3; ++c)
        CHECK(exact[c] == Catch::Approx(density[c] / z).margin(1e-12));
}

TEST_CASE("revealed posterior equals the joint-density factorization") {
    DiracWorld w = small_world();
    std::vector<std::size_t> cands = {0, 1, 2};
    CounterRng rng(7, 8);
    for (int t : {2, 25, 50, 75, 100}) {
        for (int trial = 0; trial < 40; ++trial) {
            std::size_t c = rng.next_in(0, 2);
            Array eps = Array::vec(rng.normal_vec(2));
            Array x_prev = t > 1
                               ? forward_noise(w.anchors[c], eps, t - 1,
                                               w.schedule)
                               : w.anchors[c];
            double beta = w.schedule.beta[t];
            Array x_t = x_prev;
            for (double& v : x_t.values)
                v = std::sqrt(1.0 - beta) * v +
                    std::sqrt(beta) * rng.next_normal();
            std::vector<double> a =
                revealed_posterior(w, x_t, x_prev, t, cands);
            std::vector<double> b =
                joint_bayes_posterior(w, x_prev, x_t, t, cands);
            for (int k = 0; k < 3; ++k)
                CHECK(a[k] == Catch::Approx(b[k]).margin(1e-8));
        }
    }
}

TEST_CASE("empty candidate sets are rejected") {
    DiracWorld w = small_world();
    Array x = Array::vec({0.0, 0.0});
    CHECK_THROWS_AS(bayes_posterior(w, x, 10, {}), std::invalid_argument);
    CHECK_THROWS_AS(revealed_posterior(w, x, x, 10, {}),
                    std::invalid_argument);
}

TEST_CASE("discrete decomposition identity holds with full support") {
    CounterRng rng(3, 3);
    for (int trial = 0; trial < 200; ++trial) {
        DiscreteWorld w;
        w.n_states = 5;
        w.n_categories = 4;
        w.joint.resize(20);
        double sum = 0.0;
        for (double& v : w.joint) {
            v = 0.01 + rng.next_uniform();
            sum += v;
        }
        for (double& v : w.joint) v /= sum;
        CHECK(decomposition_check(w) < 1e-10);
    }
}

TEST_CASE("decomposition check refuses empty support") {
    DiscreteWorld w;
    w.n_states = 2;
    w.n_categories = 2;
    w.joint = {0.5, 0.5, 0.0, 0.0};
    CHECK_THROWS_AS(decomposition_check(w), std::invalid_argument);
}
