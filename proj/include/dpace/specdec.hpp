#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dpace/losses.hpp"
#include "dpace/rng.hpp"

namespace dpace {

// Synthetic order-k target language model: one distribution over V per
// length-k context. Immutable after construction; shareable across runs.
struct TargetModel {
    int vocab = 0;
    int order = 0;
    double concentration = 1.0;
    std::uint64_t seed = 0;
    std::vector<double> table; // V^k rows x V, row-major

    std::size_t num_contexts() const;
    std::span<const double> row(std::size_t context_index) const;
    // index of the last `order` tokens of prefix, left-padded with token 0
    std::size_t context_index(std::span<const int> prefix) const;
};

// Each context row is softmax(g / concentration) with g iid standard normal:
// concentration -> 0 approaches one-hot rows, large values approach uniform.
// V^order above max_table_entries -> std::length_error.
TargetModel sample_target_model(int vocab, int order, double concentration, std::uint64_t seed,
                                std::size_t max_table_entries = 1000000);

// decoding policy distribution at temperature T: the context row tempered by
// probs^(1/T) and renormalized; T = 0 yields the one-hot argmax row
// (lowest-index tie-break)
std::vector<double> target_policy_dist(const TargetModel& model, std::span<const int> prefix,
                                       double temperature);

// the token the target decoding policy selects; T > 0 consumes one rng draw,
// T = 0 consumes none
int target_policy_token(const TargetModel& model, std::span<const int> prefix,
                        double temperature, Rng& rng);

// teacher-forced training slice: targets[i] is the policy token following
// context + targets[..i]
struct TrainingExample {
    std::vector<int> context;  // C ids
    TargetTokens targets;      // B ids
    std::optional<TargetDistBlock> target_dists; // policy rows, for dpakl/target_prob
};

// Lazily generates policy sequences and slices teacher-forced examples at
// stride B. Memory stays O(sequence_length) regardless of how much is drawn.
class DataStream {
public:
    DataStream(const TargetModel& model, int context_len, int block, int sequence_length,
               double temperature, std::uint64_t seed, bool with_target_dists);

    TrainingExample next();

private:
    const TargetModel& model_;
    int context_len_;
    int block_;
    int sequence_length_;
    double temperature_;
    bool with_target_dists_;
    Rng rng_;
    std::deque<TrainingExample> buffer_;

    void refill();
};

// materialized variant: all examples from num_sequences sequences of the
// given length; a length-L sequence yields floor((L - C) / B) examples
std::vector<TrainingExample> generate_training_data(const TargetModel& model, int num_sequences,
                                                    int length, int block, int context_len,
                                                    double temperature, std::uint64_t seed,
                                                    bool with_target_dists = false);

// one draft/verify round
struct BlockOutcome {
    std::vector<double> q;  // draft confidence on the policy token, all B positions
    int accepted = 0;       // X: longest matching prefix
    int emitted = 0;        // accepted + 1 (correction or bonus token included)
    double surrogate = 0.0; // S computed from q
    bool truncated = false; // cut short by the token budget; excluded from tau averages
};

struct DecodeConfig {
    double temperature = 0.0;
    int block = 8;
    int max_new_tokens = 128;
    std::uint64_t seed = 0;
};

// a block drafter: full prefix in, B x V logit rows out
using DraftFn = std::function<LogitBlock(std::span<const int> prefix)>;

struct DecodeResult {
    std::vector<int> tokens; // prompt followed by generated tokens
    std::vector<BlockOutcome> blocks;
};

// Lossless block speculative decoding. Per round the drafter proposes B
// tokens (argmax per row); verification is a left-to-right hard match
// against the policy token given the draft-so-far prefix. The first mismatch
// emits the policy's own token in its place; full acceptance appends one
// bonus policy token.
DecodeResult decode_speculative(const TargetModel& model, const DraftFn& draft,
                                std::span<const int> prompt, const DecodeConfig& cfg);

// reference decoder: the policy applied one token at a time
std::vector<int> decode_autoregressive(const TargetModel& model, std::span<const int> prompt,
                                       const DecodeConfig& cfg);

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long long trials = 0;
};

// simulates the accepted length X with independent Bernoulli(q_i) positions,
// stopping at the first rejection
MonteCarloEstimate bernoulli_accept_sim(const std::vector<double>& q, long long trials,
                                        std::uint64_t seed);

} // namespace dpace
