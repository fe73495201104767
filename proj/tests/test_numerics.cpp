#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "dpace/numerics.hpp"
#include "dpace/rng.hpp"
#include "oracles.hpp"

using namespace dpace;

TEST_CASE("softmax basic values") {
    CHECK(softmax({0.0, 0.0}) == RealVector{0.5, 0.5});

    const RealVector u = softmax({1000.0, 1000.0, 1000.0});
    for (double v : u) {
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }

    const RealVector s = softmax({0.0, std::log(3.0)});
    CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rejects non-finite input") {
    CHECK_THROWS_AS(softmax({1.0, std::numeric_limits<double>::quiet_NaN()}),
                    std::invalid_argument);
    CHECK_THROWS_AS(softmax({std::numeric_limits<double>::infinity()}), std::invalid_argument);
    CHECK_THROWS_AS(softmax({}), std::invalid_argument);
}

TEST_CASE("softmax is a distribution and shift invariant") {
    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
        const int n = 1 + rng.next_below(12);
        RealVector x(n);
        for (double& v : x) {
            v = rng.next_uniform(-30.0, 30.0);
        }
        const RealVector p = softmax(x);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);

        const double c = rng.next_uniform(-100.0, 100.0);
        RealVector shifted = x;
        for (double& v : shifted) {
            v += c;
        }
        const RealVector ps = softmax(shifted);
        for (int i = 0; i < n; ++i) {
            CHECK(std::abs(p[i] - ps[i]) < 1e-12);
        }
    }
}

TEST_CASE("log_softmax matches log of softmax") {
    Rng rng(8);
    RealVector x(6);
    for (double& v : x) {
        v = rng.next_uniform(-5.0, 5.0);
    }
    const RealVector p = softmax(x);
    const RealVector lp = log_softmax(x);
    for (int i = 0; i < 6; ++i) {
        CHECK(lp[i] == doctest::Approx(std::log(p[i])).epsilon(1e-12));
    }
}

TEST_CASE("finite differences on known functions") {
    auto square0 = [](const RealVector& v) { return v[0] * v[0]; };
    const RealVector g = finite_diff_grad(square0, {3.0}, 1e-5);
    CHECK(std::abs(g[0] - 6.0) < 1e-8);

    auto constant = [](const RealVector&) { return 4.2; };
    for (double v : finite_diff_grad(constant, {1.0, 2.0, 3.0}, 1e-6)) {
        CHECK(v == 0.0);
    }

    // analytic gradient of -log softmax(x)[0] at (0,0) is (-0.5, 0.5)
    auto nll0 = [](const RealVector& v) { return -log_softmax(v)[0]; };
    const RealVector g2 = finite_diff_grad(nll0, {0.0, 0.0}, 1e-6);
    CHECK(std::abs(g2[0] - -0.5) < 1e-9);
    CHECK(std::abs(g2[1] - 0.5) < 1e-9);

    CHECK_THROWS_AS(finite_diff_grad(constant, {1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("adamw zero gradient with zero decay leaves params unchanged") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamWState st(3, cfg);
    std::vector<double> params{1.0, -2.0, 0.5};
    const std::vector<double> before = params;
    std::vector<double> grads{0.0, 0.0, 0.0};
    adamw_step(params, grads, st);
    CHECK(params == before);
    CHECK(st.step == 1);
}

TEST_CASE("adamw first step moves against the gradient sign") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    AdamWState st(2, cfg);
    std::vector<double> params{0.0, 0.0};
    std::vector<double> grads{2.5, -0.3};
    adamw_step(params, grads, st);
    // bias-corrected first step is lr * g / (|g| + eps), i.e. nearly lr * sign(g)
    CHECK(params[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(params[1] == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("adamw trajectory is bit-deterministic") {
    auto run = [] {
        AdamWState st(4, {});
        std::vector<double> params{0.1, 0.2, 0.3, 0.4};
        Rng rng(99);
        for (int s = 0; s < 50; ++s) {
            std::vector<double> grads(4);
            for (double& g : grads) {
                g = rng.next_gaussian();
            }
            adamw_step(params, grads, st);
        }
        return params;
    };
    const auto a = run();
    const auto b = run();
    CHECK(a == b); // bit identical
}

TEST_CASE("adamw rejects shape mismatch") {
    AdamWState st(2, {});
    std::vector<double> params{1.0, 2.0, 3.0};
    std::vector<double> grads{0.0, 0.0, 0.0};
    CHECK_THROWS_AS(adamw_step(params, grads, st), std::invalid_argument);
}

TEST_CASE("adamw weight decay is decoupled") {
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.5;
    AdamWState st(1, cfg);
    std::vector<double> params{2.0};
    std::vector<double> grads{0.0};
    adamw_step(params, grads, st);
    // zero gradient: the only update is -lr * wd * p
    CHECK(params[0] == doctest::Approx(2.0 - 0.01 * 0.5 * 2.0).epsilon(1e-12));
}
