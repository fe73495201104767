#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dpace {

// B x V block of raw drafter scores, one row per block position.
struct LogitBlock {
    int block = 0; // B rows
    int vocab = 0; // V columns
    std::vector<double> a; // row-major B*V

    LogitBlock() = default;
    LogitBlock(int b, int v)
        : block(b), vocab(v), a(static_cast<std::size_t>(b) * v, 0.0) {}

    std::span<double> row(int j) {
        return {a.data() + static_cast<std::size_t>(j) * vocab, static_cast<std::size_t>(vocab)};
    }
    std::span<const double> row(int j) const {
        return {a.data() + static_cast<std::size_t>(j) * vocab, static_cast<std::size_t>(vocab)};
    }
};

// target-policy token ids z_1..z_B, each in [0, V)
using TargetTokens = std::vector<int>;

// B rows of target distributions over V; rows must each sum to 1
struct TargetDistBlock {
    int block = 0;
    int vocab = 0;
    std::vector<double> p; // row-major B*V

    TargetDistBlock() = default;
    TargetDistBlock(int b, int v)
        : block(b), vocab(v), p(static_cast<std::size_t>(b) * v, 0.0) {}

    std::span<double> row(int j) {
        return {p.data() + static_cast<std::size_t>(j) * vocab, static_cast<std::size_t>(vocab)};
    }
    std::span<const double> row(int j) const {
        return {p.data() + static_cast<std::size_t>(j) * vocab, static_cast<std::size_t>(vocab)};
    }

    // each row nonnegative, summing to 1 within 1e-9; else std::invalid_argument
    void validate() const;
};

enum class LossKind {
    dpace,
    dflash,
    topk_mask,
    accept_rate,
    cumulative_only,
    continuation_only,
    target_prob,
    dpakl,
};

// exact strings used in config files and CSV columns
const char* to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s); // unknown -> std::invalid_argument
const std::vector<LossKind>& all_loss_kinds();
bool loss_needs_target_dists(LossKind k); // true for target_prob and dpakl

struct LossConfig {
    LossKind kind = LossKind::dpace;
    double alpha = 0.5; // weight smoothing
    double gamma = 4.0; // dflash decay constant
    int top_k = 3;      // prefix-mask width

    void validate() const; // alpha in [0,1], gamma > 0, top_k >= 1
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;    // B*V, same layout as LogitBlock::a
    std::vector<double> weights; // per-position coefficients applied (mask for topk_mask)
};

// q_i = softmax(row_i)[z_i]; out-of-range token id -> std::invalid_argument
std::vector<double> confidences_from_logits(const LogitBlock& logits, const TargetTokens& targets);

// weighted CE with detached per-position weights from the smoothed surrogate:
// loss = sum_j w_j * (-log q_j), grad row j = w_j * (softmax(row_j) - onehot(z_j))
LossResult loss_dpace(const LogitBlock& logits, const TargetTokens& targets, double alpha);

// fixed exponential position decay: coefficient exp(-(j-1)/gamma) at row j
LossResult loss_dflash(const LogitBlock& logits, const TargetTokens& targets, double gamma);

// hard 0/1 prefix mask: position j contributes only when every earlier target
// token lies in the draft's top-K scores (ties at the K-th score count as in)
LossResult loss_topk_mask(const LogitBlock& logits, const TargetTokens& targets, int top_k);

// directly descends -S(q); gradient computed product-safely (no division by q_j)
LossResult loss_accept_rate(const LogitBlock& logits, const TargetTokens& targets);

// component ablations: weight = prod_{i<=j} qs_i, resp. weight = f_j
LossResult loss_cumulative_only(const LogitBlock& logits, const TargetTokens& targets, double alpha);
LossResult loss_continuation_only(const LogitBlock& logits, const TargetTokens& targets, double alpha);

// weights built from the target probability p(z_i) instead of the draft
// confidence; the CE term stays on the draft confidences
LossResult loss_target_prob(const LogitBlock& logits, const TargetTokens& targets,
                            const TargetDistBlock& target_dists, double alpha);

// KL-distillation variant: C_j = -sum_x p_j(x) log softmax(row_j)(x),
// acceptance proxy a_j = exp(-C_j), weights from the smoothed proxies,
// loss = sum_j w_j * C_j, grad row j = w_j * (softmax(row_j) - p_j)
LossResult loss_dpakl(const LogitBlock& logits, const TargetDistBlock& target_dists, double alpha);

// dispatcher; target_dists may be null unless the kind requires it
LossResult compute_loss(const LogitBlock& logits, const TargetTokens& targets,
                        const TargetDistBlock* target_dists, const LossConfig& cfg);

// decay constants: 16->7, 10->5, 8->4, 12->6; any other B extrapolates
// round(B/2 - 1), floored at 1
double gamma_for_block(int block);

// sum_j w_j * (-log q_j) with w held fixed: the scalar that the
// detached-weight losses differentiate (weights frozen at the base point)
double weighted_ce_value(const LogitBlock& logits, const TargetTokens& targets,
                         std::span<const double> w);

// soft-label cross-entropies C_j = -sum_x p_j(x) log softmax(row_j)(x)
std::vector<double> soft_ce_values(const LogitBlock& logits, const TargetDistBlock& target_dists);

// sum_j w_j * C_j with w held fixed; dpakl analog of weighted_ce_value
double weighted_soft_ce_value(const LogitBlock& logits, const TargetDistBlock& target_dists,
                              std::span<const double> w);

} // namespace dpace
