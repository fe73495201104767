#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpace/losses.hpp"

namespace dpace {

// config-file problem with the offending field path in the message
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TargetSpec {
    int vocab = 64;
    int order = 3;
    double concentration = 1.0;
    std::uint64_t seed = 1;
};

struct DrafterSpec {
    int context = 4;
    int embed = 16;
    int hidden = 128;
    std::uint64_t seed = 2; // mixed with the run seed for init
};

struct DataSpec {
    int sequence_length = 68;
    double temperature = 1.0;
    std::uint64_t seed = 3; // mixed with the run seed
};

struct TrainSpec {
    long long steps = 1000;
    int batch = 8;
    int accumulation = 1;
    double lr = 1e-3;
    double clip_norm = 1.0;
    long long warmup_steps = 0; // linear lr warmup; 0 disables
    bool cosine_decay = false;  // cosine lr decay after warmup
    DataSpec data;
};

struct EvalSpec {
    std::vector<double> temperatures{0.0, 1.0};
    int prompts = 16;
    int prompt_length = 8;
    int max_new_tokens = 128;
    std::uint64_t seed = 4;
};

struct ExperimentConfig {
    int version = 1;
    TargetSpec target;
    DrafterSpec drafter;
    int block = 8; // shared by loss, drafter heads, and decoding
    LossConfig loss;
    TrainSpec training;
    EvalSpec eval;
    std::vector<std::uint64_t> seeds{1};

    void validate() const; // throws ConfigError with a field path
};

// strict parse: unknown keys and out-of-range values are rejected with the
// field path in the error message
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// canonical serialization (stable key order); parse_config round-trips it
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

// FNV-1a 64 over the canonical serialization, hex encoded
std::string config_hash(const ExperimentConfig& cfg);

} // namespace dpace
