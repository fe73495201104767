#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpace/losses.hpp"
#include "dpace/numerics.hpp"
#include "dpace/specdec.hpp"

namespace dpace {

// Toy parallel block drafter: token embeddings, a two-layer tanh trunk, and
// B independent linear heads. One forward pass over a fixed-width context
// emits all B logit rows; no row consumes another row's output.
struct DrafterConfig {
    int vocab = 32;
    int context = 4;
    int embed = 16;
    int hidden = 64;
    int block = 8;
    std::uint64_t seed = 0;

    void validate() const; // all dimensions >= 1
};

// Flat parameter vector with a fixed layout:
// [embed V*E][W1 H*(C*E)][b1 H][W2 H*H][b2 H][heads B*V*H][head_b B*V]
struct DrafterParams {
    DrafterConfig cfg;
    std::vector<double> theta;

    std::size_t size() const { return theta.size(); }

    std::size_t embed_off() const { return 0; }
    std::size_t w1_off() const;
    std::size_t b1_off() const;
    std::size_t w2_off() const;
    std::size_t b2_off() const;
    std::size_t heads_off() const;
    std::size_t head_b_off() const;
};

std::size_t drafter_param_count(const DrafterConfig& cfg);

// deterministic in cfg.seed; weights scaled 1/sqrt(fan-in), embeddings 0.02,
// biases zero
DrafterParams drafter_init(const DrafterConfig& cfg);

// activations retained for the backward pass
struct ForwardCache {
    std::vector<int> context;
    std::vector<double> x0; // embedded context, C*E
    std::vector<double> h1; // post-tanh trunk layer 1
    std::vector<double> h2; // post-tanh trunk layer 2
};

// context must hold exactly cfg.context ids in [0, V)
LogitBlock drafter_forward(const DrafterParams& params, std::span<const int> context,
                           ForwardCache* cache = nullptr);

// accumulates d(sum_{j,v} grad_logits[j,v] * logits[j,v]) / d(theta) into grad_out
void drafter_backward_accum(const DrafterParams& params, const ForwardCache& cache,
                            std::span<const double> grad_logits, std::span<double> grad_out);

// allocating wrapper around drafter_backward_accum
std::vector<double> drafter_backward(const DrafterParams& params, const ForwardCache& cache,
                                     std::span<const double> grad_logits);

// adapts the drafter to the decode loop: slices the last C tokens of the
// prefix (left-padded with token 0). Takes a snapshot of the parameters.
DraftFn make_draft_fn(const DrafterParams& params);

struct TrainStepOptions {
    double clip_norm = 1.0; // global-norm clip; 0 disables
    int accumulation = 1;   // micro-batch count; batch size must divide evenly
};

struct StepMetrics {
    long long step = 0;
    double loss = 0.0;                // batch mean
    double grad_norm = 0.0;           // pre-clip global norm
    std::vector<double> mean_q;       // batch mean draft confidence per position
    std::vector<double> mean_weight;  // batch mean loss coefficient per position
};

// one optimizer update from a batch of teacher-forced examples: batch-mean
// gradient, clipped at the global norm, applied with adamw_step
StepMetrics train_step(DrafterParams& params, AdamWState& opt,
                       std::span<const TrainingExample> batch, const LossConfig& loss_cfg,
                       const TrainStepOptions& opts = {});

// versioned JSON checkpoint: config header plus the flat parameter array
void save_drafter(const DrafterParams& params, const std::string& path);
DrafterParams load_drafter(const std::string& path);

} // namespace dpace
