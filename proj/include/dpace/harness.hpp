#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpace/analysis.hpp"
#include "dpace/config.hpp"
#include "dpace/drafter.hpp"
#include "dpace/specdec.hpp"

namespace dpace {

struct EvalSummary {
    double temperature = 0.0;
    double mean_tau = 0.0;       // over non-truncated blocks
    double mean_accepted = 0.0;  // over non-truncated blocks
    double mean_surrogate = 0.0;
    std::optional<double> spearman_surrogate_tau; // null when degenerate
    std::size_t blocks = 0;           // non-truncated
    std::size_t truncated_blocks = 0; // flagged, excluded from the means
};

struct CheckpointRecord {
    long long step = 0;
    std::optional<double> train_loss; // mean loss since the previous checkpoint
    std::vector<EvalSummary> evals;   // one per configured temperature
};

struct RunRecord {
    std::string config_hash;
    std::string loss_kind;
    std::uint64_t seed = 0;
    long long steps = 0;
    int block = 0;
    std::vector<CheckpointRecord> checkpoints; // ordered by step; last is final
};

nlohmann::ordered_json run_record_to_json(const RunRecord& rec);
RunRecord run_record_from_json(const nlohmann::json& j);

// Full deterministic pipeline for one seed: generate data, train under the
// configured loss, evaluate speculative decoding at every checkpoint.
// Writes record.json, steps.csv, drafter.json and blocks/step*_T*.csv under
// out_dir. Re-running with the same config and seed rewrites identical bytes.
// shared_target, when given, must match cfg.target exactly.
RunRecord run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                         const std::filesystem::path& out_dir,
                         const TargetModel* shared_target = nullptr);

// blocks CSV: run_id, block_index, accepted, emitted, surrogate, q_1..q_B, truncated
std::string blocks_to_csv(const std::string& run_id, std::span<const BlockOutcome> blocks);
std::vector<BlockOutcome> read_blocks_csv(const std::filesystem::path& path);

// steps CSV: step, loss, lr, grad_norm, q_1..q_B, w_1..w_B
std::vector<StepMetrics> read_step_metrics_csv(const std::filesystem::path& path);

struct TempAggregate {
    double temperature = 0.0;
    double tau_mean = 0.0;
    double tau_std = 0.0; // sample std across seeds
    double accepted_mean = 0.0;
    double accepted_std = 0.0;
};

struct CompareRow {
    std::string loss_kind;
    std::vector<TempAggregate> by_temp;
};

struct CompareReport {
    std::vector<std::uint64_t> seeds;
    std::vector<CompareRow> rows; // one per loss kind
};

// trains every (kind, seed) pair from the same base config and aggregates the
// final-checkpoint evals; writes compare.csv and compare.json under out_dir
CompareReport compare_losses(const ExperimentConfig& base, const std::vector<LossKind>& kinds,
                             const std::vector<std::uint64_t>& seeds,
                             const std::filesystem::path& out_dir);

struct AlphaSweepRow {
    double alpha = 0.0;
    std::vector<TempAggregate> by_temp;
    bool stall_flag = false; // mean tau below 1.2 at the first configured temperature
};

struct AlphaSweepReport {
    std::vector<std::uint64_t> seeds;
    std::vector<AlphaSweepRow> rows;
};

AlphaSweepReport sweep_alpha(const ExperimentConfig& base, const std::vector<double>& alphas,
                             const std::vector<std::uint64_t>& seeds,
                             const std::filesystem::path& out_dir);

struct BlockSweepRow {
    int block = 0;
    double gamma = 0.0; // decay constant used for the dflash runs
    std::vector<TempAggregate> dflash;
    std::vector<TempAggregate> dpace;
    std::vector<double> delta_tau_pct;      // 100 * (dpace - dflash) / dflash, per temp
    std::vector<double> delta_accepted_pct;
};

struct BlockSweepReport {
    std::vector<std::uint64_t> seeds;
    std::vector<BlockSweepRow> rows;
};

BlockSweepReport sweep_block(const ExperimentConfig& base, const std::vector<int>& blocks,
                             const std::vector<std::uint64_t>& seeds,
                             const std::filesystem::path& out_dir);

struct CorrelateReport {
    std::size_t n_blocks = 0;
    CorrelationReport sum_q;
    CorrelationReport surrogate;
};

// Spearman of both confidence statistics against emitted length over the
// blocks read from the given CSV files; fewer than 2 usable blocks -> error
CorrelateReport correlate_block_files(const std::vector<std::filesystem::path>& files);

// report JSON includes large-scale reference correlations (0.79 / 0.84) as
// annotation only
nlohmann::ordered_json correlate_report_to_json(const CorrelateReport& rep);

struct GradcheckReport {
    struct PerKind {
        std::string kind;
        int trials = 0;
        double max_rel_err = 0.0;
        bool pass = false;
    };
    double h = 1e-6;
    double tolerance = 1e-5;
    std::vector<PerKind> kinds;
    bool pass = false;
};

// central finite-difference suite over random small instances (B <= 6,
// V <= 8). Detached-weight losses are differenced with their weights frozen
// at the base point, matching the loss definition. corrupt_scale != 1 scales
// the analytic gradient (test hook; must make the suite fail).
GradcheckReport run_gradcheck(const std::vector<LossKind>& kinds, int trials, std::uint64_t seed,
                              double corrupt_scale = 1.0);

nlohmann::ordered_json gradcheck_report_to_json(const GradcheckReport& rep);

struct BernoulliBlocksConfig {
    int blocks = 1000;
    int block_size = 8;
    std::uint64_t seed = 0;
};

// heterogeneous random confidence profiles, one simulated acceptance walk
// each; feeds the correlation pipeline with ground-truth Bernoulli blocks
std::vector<BlockOutcome> simulate_bernoulli_blocks(const BernoulliBlocksConfig& cfg);

} // namespace dpace
