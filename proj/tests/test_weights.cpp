#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dpace/rng.hpp"
#include "dpace/weights.hpp"
#include "oracles.hpp"

using namespace dpace;

namespace {

std::vector<double> random_block(Rng& rng, int b) {
    std::vector<double> q(b);
    for (double& v : q) {
        do {
            v = rng.next_double();
        } while (v == 0.0); // confidences live in (0, 1]
    }
    return q;
}

} // namespace

TEST_CASE("smooth_confidences hand values and limits") {
    const std::vector<double> q{0.8, 0.5, 0.2};
    const std::vector<double> s = smooth_confidences(q, 0.5);
    CHECK(s[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(s[2] == doctest::Approx(0.6).epsilon(1e-12));

    CHECK(smooth_confidences(q, 0.0) == q);
    for (double v : smooth_confidences(q, 1.0)) {
        CHECK(v == 1.0);
    }

    CHECK_THROWS_AS(smooth_confidences(q, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(smooth_confidences(q, 1.1), std::invalid_argument);
    CHECK_THROWS_AS(smooth_confidences({1.5}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(smooth_confidences({}, 0.5), std::invalid_argument);
}

TEST_CASE("prefix_products hand values") {
    const std::vector<double> p = prefix_products({0.9, 0.75, 0.6});
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.675).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(0.405).epsilon(1e-12));

    CHECK(prefix_products({1.0, 1.0, 1.0}) == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(prefix_products({0.3}) == std::vector<double>{0.3});
}

TEST_CASE("continuation_values hand values") {
    const std::vector<double> f = continuation_values({0.9, 0.75, 0.6});
    CHECK(f[0] == doctest::Approx(2.2).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(f[2] == 1.0);

    // all ones: f_j = B - j + 1
    const std::vector<double> ones = continuation_values({1.0, 1.0, 1.0, 1.0});
    CHECK(ones == std::vector<double>{4.0, 3.0, 2.0, 1.0});

    CHECK(continuation_values({0.7}) == std::vector<double>{1.0});
}

TEST_CASE("dpace_weights hand values and trivial cases") {
    const std::vector<double> w = dpace_weights({0.8, 0.5, 0.2}, 0.5);
    CHECK(w[0] == doctest::Approx(1.98).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.08).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(0.405).epsilon(1e-12));

    // cross-check against the product form (prod qs) * f
    const std::vector<double> qs = smooth_confidences({0.8, 0.5, 0.2}, 0.5);
    const std::vector<double> p = prefix_products(qs);
    const std::vector<double> f = continuation_values(qs);
    for (int j = 0; j < 3; ++j) {
        CHECK(std::abs(w[j] - p[j] * f[j]) < 1e-12);
    }

    const std::vector<double> all1 = dpace_weights({1.0, 1.0, 1.0, 1.0, 1.0}, 0.3);
    CHECK(all1 == std::vector<double>{5.0, 4.0, 3.0, 2.0, 1.0});

    // B = 1: the weight is the smoothed confidence itself
    const std::vector<double> single = dpace_weights({0.4}, 0.5);
    CHECK(single[0] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("surrogate hand values") {
    CHECK(surrogate_S({0.8, 0.5, 0.2}) == doctest::Approx(1.28).epsilon(1e-12));
    CHECK(surrogate_S({1.0, 1.0, 1.0, 1.0}) == 4.0);
    CHECK(surrogate_S({0.5, 0.5}) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("weight identity: suffix-sum equals product form on random blocks") {
    const std::vector<double> alphas{0.0, 0.3, 0.5, 0.7, 0.9, 1.0};
    Rng rng(42);
    for (int t = 0; t < 1000; ++t) {
        const int b = 1 + rng.next_below(32);
        const std::vector<double> q = random_block(rng, b);
        const double alpha = alphas[t % alphas.size()];
        const std::vector<double> w = dpace_weights(q, alpha);
        const std::vector<double> qs = smooth_confidences(q, alpha);
        const std::vector<double> p = prefix_products(qs);
        const std::vector<double> f = continuation_values(qs);
        for (int j = 0; j < b; ++j) {
            CHECK(std::abs(w[j] - p[j] * f[j]) < 1e-10);
        }
    }
}

TEST_CASE("weights are strictly decreasing and bounded") {
    Rng rng(43);
    for (int t = 0; t < 300; ++t) {
        const int b = 1 + rng.next_below(16);
        const std::vector<double> q = random_block(rng, b);
        const double alpha = rng.next_uniform(0.05, 1.0);
        const std::vector<double> w = dpace_weights(q, alpha);
        const std::vector<double> p = prefix_products(smooth_confidences(q, alpha));
        for (int j = 0; j < b; ++j) {
            if (j + 1 < b) {
                CHECK(w[j] > w[j + 1]);
            }
            CHECK(w[j] > 0.0);
            CHECK(w[j] <= static_cast<double>(b - j) + 1e-12);
            CHECK(p[j] >= std::pow(alpha, j + 1) - 1e-12);
        }
    }
}

TEST_CASE("surrogate equals enumeration of E[X] under independent acceptance") {
    Rng rng(44);
    for (int t = 0; t < 100; ++t) {
        const int b = 1 + rng.next_below(12);
        std::vector<double> q(b);
        for (double& v : q) {
            v = rng.next_double();
        }
        CHECK(std::abs(surrogate_S(q) - oracles::exact_expected_accept(q)) < 1e-12);
    }
}
