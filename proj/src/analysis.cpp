#include "dpace/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dpace/weights.hpp"

namespace dpace {

namespace {

// average ranks, 1-based; ties share the mean of their rank range
std::vector<double> average_ranks(std::span<const double> xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) {
            ++j;
        }
        const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw std::domain_error("correlation undefined: zero variance input");
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

CorrelationReport spearman(std::span<const double> xs, std::span<const double> ys,
                           std::string name) {
    if (xs.size() != ys.size()) {
        throw std::invalid_argument("spearman: length mismatch");
    }
    if (xs.size() < 2) {
        throw std::invalid_argument("spearman: need at least 2 samples");
    }
    const std::vector<double> rx = average_ranks(xs);
    const std::vector<double> ry = average_ranks(ys);
    CorrelationReport rep;
    rep.name = std::move(name);
    rep.n = xs.size();
    rep.rho = std::clamp(pearson(rx, ry), -1.0, 1.0);
    if (rep.n > 3 && std::abs(rep.rho) < 1.0) {
        const double z = std::atanh(rep.rho) * std::sqrt(static_cast<double>(rep.n - 3));
        rep.p_value = std::erfc(std::abs(z) / std::sqrt(2.0));
    } else {
        rep.p_value = std::abs(rep.rho) >= 1.0 ? 0.0 : 1.0;
    }
    return rep;
}

StatisticCorrelations compare_statistics(std::span<const BlockOutcome> blocks) {
    std::vector<double> sum_q, surr, tau;
    for (const BlockOutcome& b : blocks) {
        if (b.truncated) {
            continue;
        }
        sum_q.push_back(std::accumulate(b.q.begin(), b.q.end(), 0.0));
        surr.push_back(b.surrogate);
        tau.push_back(static_cast<double>(b.emitted));
    }
    if (tau.size() < 2) {
        throw std::invalid_argument("compare_statistics: need at least 2 usable blocks");
    }
    StatisticCorrelations out;
    out.sum_q = spearman(sum_q, tau, "sum_q");
    out.surrogate = spearman(surr, tau, "surrogate");
    return out;
}

BinSummary bin_means(std::span<const double> xs, std::span<const double> ys, int num_bins) {
    if (num_bins < 1) {
        throw std::invalid_argument("bin_means: num_bins must be >= 1");
    }
    if (xs.size() != ys.size() || xs.empty()) {
        throw std::invalid_argument("bin_means: inputs empty or length mismatch");
    }
    double lo = xs[0], hi = xs[0];
    for (double x : xs) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    BinSummary s;
    if (lo == hi) {
        // degenerate range: a single bin around the common value
        num_bins = 1;
        lo -= 0.5;
        hi += 0.5;
    }
    s.edges.resize(num_bins + 1);
    for (int b = 0; b <= num_bins; ++b) {
        s.edges[b] = lo + (hi - lo) * static_cast<double>(b) / num_bins;
    }
    s.count.assign(num_bins, 0);
    s.mean.assign(num_bins, 0.0);
    s.stddev.assign(num_bins, 0.0);
    s.empty.assign(num_bins, true);
    std::vector<double> sumsq(num_bins, 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        int b = static_cast<int>((xs[i] - lo) / (hi - lo) * num_bins);
        b = std::clamp(b, 0, num_bins - 1);
        s.count[b] += 1;
        s.mean[b] += ys[i];
        sumsq[b] += ys[i] * ys[i];
        s.empty[b] = false;
    }
    for (int b = 0; b < num_bins; ++b) {
        if (s.count[b] == 0) {
            continue;
        }
        const double n = static_cast<double>(s.count[b]);
        s.mean[b] /= n;
        if (s.count[b] > 1) {
            s.stddev[b] = std::sqrt(std::max(0.0, sumsq[b] / n - s.mean[b] * s.mean[b]));
        }
    }
    return s;
}

WeightTrace weight_trace(std::span<const StepMetrics> metrics, long long start_step,
                         long long end_step) {
    WeightTrace t;
    t.start_step = start_step;
    t.end_step = end_step;
    for (const StepMetrics& m : metrics) {
        if (m.step >= start_step && m.step < end_step) {
            t.rows.push_back(m.mean_weight);
        }
    }
    if (t.rows.empty()) {
        throw std::invalid_argument("weight_trace: empty window");
    }
    t.mean.assign(t.rows[0].size(), 0.0);
    for (const auto& row : t.rows) {
        if (row.size() != t.mean.size()) {
            throw std::invalid_argument("weight_trace: inconsistent row lengths");
        }
        for (std::size_t j = 0; j < row.size(); ++j) {
            t.mean[j] += row[j];
        }
    }
    for (double& v : t.mean) {
        v /= static_cast<double>(t.rows.size());
    }
    return t;
}

} // namespace dpace
