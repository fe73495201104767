#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpace/analysis.hpp"
#include "dpace/rng.hpp"
#include "dpace/weights.hpp"
#include "oracles.hpp"

using namespace dpace;

TEST_CASE("spearman on monotone data") {
    const std::vector<double> x{1, 2, 3};
    CHECK(spearman(x, std::vector<double>{10, 20, 30}).rho == doctest::Approx(1.0));
    CHECK(spearman(x, std::vector<double>{3, 2, 1}).rho == doctest::Approx(-1.0));
}

TEST_CASE("spearman handles ties with average ranks") {
    const std::vector<double> x{1, 2, 2, 3};
    const std::vector<double> y{1, 2, 3, 4};
    const CorrelationReport rep = spearman(x, y);
    CHECK(std::abs(rep.rho - oracles::rank_pearson(x, y)) < 1e-12);
    CHECK(rep.n == 4);

    Rng rng(61);
    for (int t = 0; t < 100; ++t) {
        const int n = 2 + rng.next_below(40);
        std::vector<double> xs(n), ys(n);
        for (int i = 0; i < n; ++i) {
            // coarse grid forces plenty of ties
            xs[i] = static_cast<double>(rng.next_below(6));
            ys[i] = static_cast<double>(rng.next_below(6));
        }
        try {
            const CorrelationReport r = spearman(xs, ys);
            CHECK(std::abs(r.rho - oracles::rank_pearson(xs, ys)) < 1e-12);
            CHECK(r.rho >= -1.0);
            CHECK(r.rho <= 1.0);
        } catch (const std::domain_error&) {
            // constant input drawn; the oracle would divide by zero too
        }
    }
}

TEST_CASE("spearman is invariant under strictly monotone transforms") {
    Rng rng(62);
    std::vector<double> xs(50), ys(50);
    for (int i = 0; i < 50; ++i) {
        xs[i] = rng.next_uniform(-2.0, 2.0);
        ys[i] = rng.next_uniform(-2.0, 2.0);
    }
    const double base = spearman(xs, ys).rho;
    std::vector<double> ex(50), cy(50);
    for (int i = 0; i < 50; ++i) {
        ex[i] = std::exp(xs[i]);                 // increasing transform of x
        cy[i] = ys[i] * ys[i] * ys[i] + 2.0 * ys[i]; // increasing transform of y
    }
    CHECK(spearman(ex, ys).rho == doctest::Approx(base).epsilon(1e-12));
    CHECK(spearman(xs, cy).rho == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("spearman errors") {
    CHECK_THROWS_AS(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}),
                    std::domain_error);
    CHECK_THROWS_AS(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2}),
                    std::domain_error);
    CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}),
                    std::invalid_argument);
}

TEST_CASE("p-value shrinks with stronger evidence") {
    Rng rng(63);
    std::vector<double> xs(200), noisy(200);
    for (int i = 0; i < 200; ++i) {
        xs[i] = rng.next_uniform(0.0, 1.0);
        noisy[i] = xs[i] + rng.next_gaussian() * 0.1;
    }
    const CorrelationReport strong = spearman(xs, noisy);
    CHECK(strong.p_value < 1e-10);

    std::vector<double> unrelated(200);
    for (double& v : unrelated) {
        v = rng.next_uniform(0.0, 1.0);
    }
    CHECK(spearman(xs, unrelated).p_value > 1e-6);
}

namespace {

std::vector<BlockOutcome> simulated_blocks(int n, int b, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<BlockOutcome> blocks(n);
    for (BlockOutcome& o : blocks) {
        o.q.resize(b);
        const double base = rng.next_uniform(0.1, 0.95);
        for (double& q : o.q) {
            q = std::clamp(base + rng.next_uniform(-0.1, 0.1), 0.01, 0.99);
        }
        int x = 0;
        for (double q : o.q) {
            if (!rng.next_bernoulli(q)) {
                break;
            }
            ++x;
        }
        o.accepted = x;
        o.emitted = x + 1;
        o.surrogate = surrogate_S(o.q);
    }
    return blocks;
}

} // namespace

TEST_CASE("compare_statistics on deterministic and shuffled pairings") {
    // emitted strictly increasing with q: both correlations are 1
    std::vector<BlockOutcome> mono(8);
    for (int i = 0; i < 8; ++i) {
        mono[i].q = {0.1 + 0.1 * i, 0.1 + 0.1 * i};
        mono[i].surrogate = surrogate_S(mono[i].q);
        mono[i].accepted = i;
        mono[i].emitted = i + 1;
    }
    const StatisticCorrelations c = compare_statistics(mono);
    CHECK(c.sum_q.rho == doctest::Approx(1.0));
    CHECK(c.surrogate.rho == doctest::Approx(1.0));

    // breaking the pairing kills the correlation
    std::vector<BlockOutcome> shuffled = simulated_blocks(1000, 6, 64);
    std::vector<int> emitted(1000);
    for (int i = 0; i < 1000; ++i) {
        emitted[i] = shuffled[i].emitted;
    }
    Rng rng(65);
    for (int i = 999; i > 0; --i) {
        std::swap(emitted[i], emitted[rng.next_below(i + 1)]);
    }
    for (int i = 0; i < 1000; ++i) {
        shuffled[i].emitted = emitted[i];
    }
    const StatisticCorrelations s = compare_statistics(shuffled);
    CHECK(std::abs(s.sum_q.rho) < 0.1);
    CHECK(std::abs(s.surrogate.rho) < 0.1);
}

TEST_CASE("compare_statistics on Bernoulli blocks is positively correlated") {
    const StatisticCorrelations c = compare_statistics(simulated_blocks(1000, 8, 66));
    CHECK(c.surrogate.rho > 0.0);
    CHECK(c.sum_q.rho > 0.0);
}

TEST_CASE("compare_statistics identical statistics give identical rho") {
    std::vector<BlockOutcome> blocks = simulated_blocks(50, 1, 67);
    // with B = 1 the surrogate equals the confidence sum
    const StatisticCorrelations c = compare_statistics(blocks);
    CHECK(c.sum_q.rho == c.surrogate.rho);
}

TEST_CASE("bin_means basics") {
    const std::vector<double> xs{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> ys{5.0, 5.0, 5.0, 5.0};
    const BinSummary s = bin_means(xs, ys, 2);
    CHECK(s.count == std::vector<std::size_t>{2, 2});
    CHECK(s.mean[0] == 5.0);
    CHECK(s.mean[1] == 5.0);
    CHECK(s.stddev[0] == 0.0);
    CHECK(s.stddev[1] == 0.0);

    // one point per bin
    const BinSummary one = bin_means(std::vector<double>{0.0, 1.0, 2.0},
                                     std::vector<double>{7.0, 8.0, 9.0}, 3);
    CHECK(one.mean == std::vector<double>{7.0, 8.0, 9.0});

    // counts conserve the sample count, empty bins flagged
    Rng rng(68);
    std::vector<double> rx(500), ry(500);
    for (int i = 0; i < 500; ++i) {
        rx[i] = rng.next_gaussian();
        ry[i] = rng.next_uniform(0.0, 4.0);
    }
    const BinSummary r = bin_means(rx, ry, 20);
    CHECK(std::accumulate(r.count.begin(), r.count.end(), std::size_t{0}) == 500);
    for (int b = 0; b < 20; ++b) {
        CHECK(r.empty[b] == (r.count[b] == 0));
    }
    for (std::size_t e = 1; e < r.edges.size(); ++e) {
        CHECK(r.edges[e] > r.edges[e - 1]);
    }
}

TEST_CASE("bin_means degenerate range and validation") {
    const BinSummary s =
        bin_means(std::vector<double>{2.0, 2.0, 2.0}, std::vector<double>{1.0, 2.0, 3.0}, 5);
    CHECK(s.count.size() == 1); // single-bin fallback
    CHECK(s.count[0] == 3);
    CHECK(s.mean[0] == doctest::Approx(2.0));

    CHECK_THROWS_AS(bin_means(std::vector<double>{}, std::vector<double>{}, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(bin_means(std::vector<double>{1.0}, std::vector<double>{1.0}, 0),
                    std::invalid_argument);
}

TEST_CASE("weight_trace windows and means") {
    std::vector<StepMetrics> metrics(10);
    for (int s = 0; s < 10; ++s) {
        metrics[s].step = s + 1;
        metrics[s].mean_weight = {static_cast<double>(s), 1.0};
    }

    const WeightTrace all = weight_trace(metrics, 1, 11);
    CHECK(all.rows.size() == 10);
    CHECK(all.mean[0] == doctest::Approx(4.5)); // mean of 0..9
    CHECK(all.mean[1] == doctest::Approx(1.0));

    const WeightTrace windowed = weight_trace(metrics, 3, 6); // steps 3,4,5
    CHECK(windowed.rows.size() == 3);
    CHECK(windowed.mean[0] == doctest::Approx((2.0 + 3.0 + 4.0) / 3.0));

    // constant rows reproduce the constant
    for (auto& m : metrics) {
        m.mean_weight = {0.5, 0.25};
    }
    const WeightTrace flat = weight_trace(metrics, 1, 11);
    CHECK(flat.mean == std::vector<double>{0.5, 0.25});
    for (const auto& row : flat.rows) {
        CHECK(row == std::vector<double>{0.5, 0.25});
    }

    CHECK_THROWS_AS(weight_trace(metrics, 100, 200), std::invalid_argument);
}
