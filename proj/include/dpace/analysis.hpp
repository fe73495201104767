#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpace/drafter.hpp"
#include "dpace/specdec.hpp"

namespace dpace {

struct CorrelationReport {
    std::string name;
    double rho = 0.0;
    std::size_t n = 0;
    double p_value = 1.0; // two-sided, large-sample normal approximation (Fisher z)
};

// Spearman rank correlation with average ranks for ties.
// All-equal xs or ys (zero rank variance) -> std::domain_error.
CorrelationReport spearman(std::span<const double> xs, std::span<const double> ys,
                           std::string name = "");

// the two block-level confidence statistics against emitted length, over the
// non-truncated blocks of a stream
struct StatisticCorrelations {
    CorrelationReport sum_q;    // sum_i q_i
    CorrelationReport surrogate; // S = sum_k prod_{i<=k} q_i
};
StatisticCorrelations compare_statistics(std::span<const BlockOutcome> blocks);

struct BinSummary {
    std::vector<double> edges;  // num_bins + 1, strictly increasing
    std::vector<std::size_t> count;
    std::vector<double> mean;   // 0 where a bin is empty
    std::vector<double> stddev; // population sigma; 0 where count < 2
    std::vector<bool> empty;
};

// equal-width bins over [min xs, max xs]; a degenerate range falls back to a
// single bin around the common value
BinSummary bin_means(std::span<const double> xs, std::span<const double> ys, int num_bins);

struct WeightTrace {
    long long start_step = 0; // inclusive
    long long end_step = 0;   // exclusive
    std::vector<double> mean; // per block position, averaged over the window
    std::vector<std::vector<double>> rows; // raw per-step weight rows
};

// aggregates the per-position mean-weight rows of StepMetrics whose step lies
// in [start_step, end_step); empty window -> std::invalid_argument
WeightTrace weight_trace(std::span<const StepMetrics> metrics, long long start_step,
                         long long end_step);

} // namespace dpace
