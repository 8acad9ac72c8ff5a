#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sude/denoiser.hpp"
#include "sude/losses.hpp"
#include "sude/rng.hpp"

using namespace sude;

namespace {
Prediction live(Tape& tape, std::vector<double> v) {
    return Prediction{tape.leaf(Array::vec(std::move(v)), true), Branch::Live};
}
Prediction frozen(Tape& tape, std::vector<double> v) {
    return Prediction{tape.constant(Array::vec(std::move(v))), Branch::Frozen};
}
}  // namespace

TEST_CASE("sub_loss basic values and gradient") {
    Tape tape;
    Prediction p = live(tape, {1.0, 0.0});
    CHECK(sub_loss(tape, p, tape.constant(Array::vec({1.0, 0.0}))).scalar() ==
          0.0);
    Var l = sub_loss(tape, p, tape.constant(Array::vec({0.0, 0.0})));
    CHECK(l.scalar() == 1.0);
    tape.backward(l);
    Array g = tape.grad(p.value);
    CHECK(g.values[0] == 2.0);
    CHECK(g.values[1] == 0.0);
}

TEST_CASE("sub_loss rejects frozen predictions") {
    Tape tape;
    Prediction p = frozen(tape, {1.0});
    CHECK_THROWS_AS(sub_loss(tape, p, tape.constant(Array::vec({1.0}))),
                    std::invalid_argument);
}

TEST_CASE("sude_raw worked examples") {
    Tape tape;
    CHECK(sude_raw(tape, live(tape, {1.0, 0.0}), frozen(tape, {0.0, 0.0}),
                   frozen(tape, {2.0, 0.0}), 1.0)
              .scalar() == 0.0);
    CHECK(sude_raw(tape, live(tape, {1.0, 0.0}), frozen(tape, {1.0, 0.0}),
                   frozen(tape, {0.0, 0.0}), 1.0)
              .scalar() == -0.5);
}

TEST_CASE("sude_raw requires frozen reference branches") {
    Tape tape;
    Prediction sub = live(tape, {1.0});
    Prediction cate_live = live(tape, {0.0});
    Prediction unc = frozen(tape, {0.0});
    CHECK_THROWS_AS(sude_raw(tape, sub, cate_live, unc, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(sude_raw(tape, frozen(tape, {1.0}), unc, unc, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(sude_raw(tape, sub, unc, unc, 0.0), std::invalid_argument);
}

TEST_CASE("sude_raw scales as 1/sigma^2") {
    CounterRng rng(4, 4);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tape;
        Prediction s = live(tape, rng.normal_vec(3));
        Prediction c = frozen(tape, rng.normal_vec(3));
        Prediction u = frozen(tape, rng.normal_vec(3));
        double base = sude_raw(tape, s, c, u, 1.0).scalar();
        double sigma = 0.1 + rng.next_uniform();
        double scaled = sude_raw(tape, s, c, u, sigma).scalar();
        CHECK(scaled == Catch::Approx(base / (sigma * sigma)));
    }
}

TEST_CASE("threshold_tau is never positive and hits the worked example") {
    Tape tape;
    Prediction c = frozen(tape, {1.0, 0.0});
    Prediction u = frozen(tape, {0.0, 0.0});
    CHECK(threshold_tau(c, u, 1.0) == -0.5);
    CounterRng rng(8, 1);
    for (int trial = 0; trial < 200; ++trial) {
        Prediction a = frozen(tape, rng.normal_vec(4));
        Prediction b = frozen(tape, rng.normal_vec(4));
        CHECK(threshold_tau(a, b, 0.05 + rng.next_uniform()) <= 0.0);
    }
}

TEST_CASE("gate closes exactly at and below the threshold") {
    CHECK(truncate_gate(-1.0, -0.5) == 0);
    CHECK(truncate_gate(-0.5, -0.5) == 0);
    CHECK(truncate_gate(-0.4, -0.5) == 1);
    Truncated tr = truncate(-0.7, -0.5);
    CHECK(tr.gate == 0);
    CHECK(truncate(0.1, -0.5).gate == 1);
}

TEST_CASE("boundary identity: pred_sub == pred_cate lands exactly on tau") {
    CounterRng rng(12, 9);
    for (int trial = 0; trial < 500; ++trial) {
        Tape tape;
        std::vector<double> cv = rng.normal_vec(5);
        Prediction s{tape.leaf(Array::vec(cv), true), Branch::Live};
        Prediction c = frozen(tape, cv);
        Prediction u = frozen(tape, rng.normal_vec(5));
        double sigma = 0.05 + rng.next_uniform();
        double raw = sude_raw(tape, s, c, u, sigma).scalar();
        double tau = threshold_tau(c, u, sigma);
        CHECK(raw == tau);
        CHECK(truncate(raw, tau).gate == 0);
    }
}

TEST_CASE("cir_loss demands pretrained-frozen and live inputs") {
    Tape tape;
    Prediction pre{tape.constant(Array::vec({1.0, 2.0})),
                   Branch::PretrainedFrozen};
    Prediction cur = live(tape, {1.0, 0.0});
    CHECK(cir_loss(tape, pre, cur).scalar() == 4.0);
    Prediction wrong = frozen(tape, {1.0, 2.0});
    CHECK_THROWS_AS(cir_loss(tape, wrong, cur), std::invalid_argument);
    CHECK_THROWS_AS(cir_loss(tape, pre, wrong), std::invalid_argument);
}

TEST_CASE("total_loss composes the weighted objective") {
    Tape tape;
    TotalLossInputs in;
    in.l_sub = tape.constant(Array::scalar(2.0));
    in.l_sude_raw = tape.constant(Array::scalar(0.5));
    in.tau_t = -0.25;
    in.l_reg = tape.constant(Array::scalar(3.0));
    LossBreakdown lb = total_loss(tape, in, 0.4, 1.0);
    CHECK(lb.gate == 1);
    CHECK(lb.total == Catch::Approx(2.0 + 0.4 * 0.5 + 3.0));
    CHECK(lb.total_var.scalar() == Catch::Approx(lb.total));

    // Below the threshold the gated term disappears.
    in.l_sude_raw = tape.constant(Array::scalar(-0.5));
    LossBreakdown closed = total_loss(tape, in, 0.4, 1.0);
    CHECK(closed.gate == 0);
    CHECK(closed.total == Catch::Approx(2.0 + 3.0));
}

TEST_CASE("total_loss without optional terms is just l_sub") {
    Tape tape;
    TotalLossInputs in;
    in.l_sub = tape.constant(Array::scalar(1.5));
    LossBreakdown lb = total_loss(tape, in, 0.4, 1.0);
    CHECK(lb.total == 1.5);
    CHECK(lb.gate == 1);
    CHECK(lb.l_reg == 0.0);
}

TEST_CASE("w_s preserves ordering of raw regularizer values") {
    CounterRng rng(31, 7);
    for (int trial = 0; trial < 500; ++trial) {
        Tape tape;
        Prediction c = frozen(tape, rng.normal_vec(3));
        Prediction u = frozen(tape, rng.normal_vec(3));
        double sigma = 0.1 + rng.next_uniform();
        double ra = sude_raw(tape, live(tape, rng.normal_vec(3)), c, u, sigma)
                        .scalar();
        double rb = sude_raw(tape, live(tape, rng.normal_vec(3)), c, u, sigma)
                        .scalar();
        for (double w : {0.1, 0.4, 1.5, 2.0})
            CHECK(((w * ra < w * rb) == (ra < rb)));
    }
}

TEST_CASE("negative weights are rejected") {
    Tape tape;
    TotalLossInputs in;
    in.l_sub = tape.constant(Array::scalar(1.0));
    CHECK_THROWS_AS(total_loss(tape, in, -0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(total_loss(tape, in, 0.4, -1.0), std::invalid_argument);
}
