#include "dpace/config.hpp"

#include <fstream>
#include <set>

namespace dpace {

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) {
        throw ConfigError(path + ": expected an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (allowed.find(key) == allowed.end()) {
            throw ConfigError(path + "." + key + ": unknown key");
        }
    }
}

template <typename T>
T get_field(const json& j, const std::string& path, const char* key, T fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

void fail_if(bool cond, const std::string& field, const char* msg) {
    if (cond) {
        throw ConfigError(field + ": " + msg);
    }
}

} // namespace

void ExperimentConfig::validate() const {
    fail_if(version != 1, "version", "must be 1");
    fail_if(target.vocab < 2, "target.vocab", "must be >= 2");
    fail_if(target.order < 1, "target.order", "must be >= 1");
    fail_if(!(target.concentration > 0.0), "target.concentration", "must be > 0");
    fail_if(drafter.context < 1, "drafter.context", "must be >= 1");
    fail_if(drafter.embed < 1, "drafter.embed", "must be >= 1");
    fail_if(drafter.hidden < 1, "drafter.hidden", "must be >= 1");
    fail_if(block < 1, "block", "must be >= 1");
    try {
        loss.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("loss: ") + e.what());
    }
    fail_if(training.steps < 0, "training.steps", "must be >= 0");
    fail_if(training.batch < 1, "training.batch", "must be >= 1");
    fail_if(training.accumulation < 1, "training.accumulation", "must be >= 1");
    fail_if(training.batch % training.accumulation != 0, "training.accumulation",
            "must divide batch");
    fail_if(!(training.lr > 0.0), "training.lr", "must be > 0");
    fail_if(training.clip_norm < 0.0, "training.clip_norm", "must be >= 0 (0 disables)");
    fail_if(training.warmup_steps < 0, "training.warmup_steps", "must be >= 0");
    fail_if(training.data.sequence_length < drafter.context + block,
            "training.data.sequence_length", "must be >= context + block");
    fail_if(!(training.data.temperature >= 0.0), "training.data.temperature", "must be >= 0");
    fail_if(eval.temperatures.empty(), "eval.temperatures", "must be non-empty");
    for (double t : eval.temperatures) {
        fail_if(!(t >= 0.0), "eval.temperatures", "entries must be >= 0");
    }
    fail_if(eval.prompts < 1, "eval.prompts", "must be >= 1");
    fail_if(eval.prompt_length < 1, "eval.prompt_length", "must be >= 1");
    fail_if(eval.max_new_tokens < 1, "eval.max_new_tokens", "must be >= 1");
    fail_if(seeds.empty(), "seeds", "must be non-empty");
}

ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    require_keys(j, "config",
                 {"version", "target", "drafter", "block", "loss", "training", "eval", "seeds"});
    cfg.version = get_field(j, "config", "version", 1);

    if (j.contains("target")) {
        const auto& t = j.at("target");
        require_keys(t, "target", {"vocab", "order", "concentration", "seed"});
        cfg.target.vocab = get_field(t, "target", "vocab", cfg.target.vocab);
        cfg.target.order = get_field(t, "target", "order", cfg.target.order);
        cfg.target.concentration =
            get_field(t, "target", "concentration", cfg.target.concentration);
        cfg.target.seed = get_field(t, "target", "seed", cfg.target.seed);
    }
    if (j.contains("drafter")) {
        const auto& d = j.at("drafter");
        require_keys(d, "drafter", {"context", "embed", "hidden", "seed"});
        cfg.drafter.context = get_field(d, "drafter", "context", cfg.drafter.context);
        cfg.drafter.embed = get_field(d, "drafter", "embed", cfg.drafter.embed);
        cfg.drafter.hidden = get_field(d, "drafter", "hidden", cfg.drafter.hidden);
        cfg.drafter.seed = get_field(d, "drafter", "seed", cfg.drafter.seed);
    }
    cfg.block = get_field(j, "config", "block", cfg.block);
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        require_keys(l, "loss", {"kind", "alpha", "gamma", "top_k"});
        const std::string kind = get_field<std::string>(l, "loss", "kind", "dpace");
        try {
            cfg.loss.kind = loss_kind_from_string(kind);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("loss.kind: ") + e.what());
        }
        cfg.loss.alpha = get_field(l, "loss", "alpha", cfg.loss.alpha);
        cfg.loss.gamma = get_field(l, "loss", "gamma", gamma_for_block(cfg.block));
        cfg.loss.top_k = get_field(l, "loss", "top_k", cfg.loss.top_k);
    } else {
        cfg.loss.gamma = gamma_for_block(cfg.block);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        require_keys(t, "training",
                     {"steps", "batch", "accumulation", "lr", "clip_norm", "warmup_steps",
                      "cosine_decay", "data"});
        cfg.training.steps = get_field(t, "training", "steps", cfg.training.steps);
        cfg.training.batch = get_field(t, "training", "batch", cfg.training.batch);
        cfg.training.accumulation =
            get_field(t, "training", "accumulation", cfg.training.accumulation);
        cfg.training.lr = get_field(t, "training", "lr", cfg.training.lr);
        cfg.training.clip_norm = get_field(t, "training", "clip_norm", cfg.training.clip_norm);
        cfg.training.warmup_steps =
            get_field(t, "training", "warmup_steps", cfg.training.warmup_steps);
        cfg.training.cosine_decay =
            get_field(t, "training", "cosine_decay", cfg.training.cosine_decay);
        if (t.contains("data")) {
            const auto& d = t.at("data");
            require_keys(d, "training.data", {"sequence_length", "temperature", "seed"});
            cfg.training.data.sequence_length = get_field(d, "training.data", "sequence_length",
                                                          cfg.training.data.sequence_length);
            cfg.training.data.temperature =
                get_field(d, "training.data", "temperature", cfg.training.data.temperature);
            cfg.training.data.seed = get_field(d, "training.data", "seed", cfg.training.data.seed);
        }
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        require_keys(e, "eval",
                     {"temperatures", "prompts", "prompt_length", "max_new_tokens", "seed"});
        cfg.eval.temperatures = get_field(e, "eval", "temperatures", cfg.eval.temperatures);
        cfg.eval.prompts = get_field(e, "eval", "prompts", cfg.eval.prompts);
        cfg.eval.prompt_length = get_field(e, "eval", "prompt_length", cfg.eval.prompt_length);
        cfg.eval.max_new_tokens =
            get_field(e, "eval", "max_new_tokens", cfg.eval.max_new_tokens);
        cfg.eval.seed = get_field(e, "eval", "seed", cfg.eval.seed);
    }
    cfg.seeds = get_field(j, "config", "seeds", cfg.seeds);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["version"] = cfg.version;
    j["target"] = {{"vocab", cfg.target.vocab},
                   {"order", cfg.target.order},
                   {"concentration", cfg.target.concentration},
                   {"seed", cfg.target.seed}};
    j["drafter"] = {{"context", cfg.drafter.context},
                    {"embed", cfg.drafter.embed},
                    {"hidden", cfg.drafter.hidden},
                    {"seed", cfg.drafter.seed}};
    j["block"] = cfg.block;
    j["loss"] = {{"kind", to_string(cfg.loss.kind)},
                 {"alpha", cfg.loss.alpha},
                 {"gamma", cfg.loss.gamma},
                 {"top_k", cfg.loss.top_k}};
    j["training"] = {{"steps", cfg.training.steps},
                     {"batch", cfg.training.batch},
                     {"accumulation", cfg.training.accumulation},
                     {"lr", cfg.training.lr},
                     {"clip_norm", cfg.training.clip_norm},
                     {"warmup_steps", cfg.training.warmup_steps},
                     {"cosine_decay", cfg.training.cosine_decay},
                     {"data",
                      {{"sequence_length", cfg.training.data.sequence_length},
                       {"temperature", cfg.training.data.temperature},
                       {"seed", cfg.training.data.seed}}}};
    j["eval"] = {{"temperatures", cfg.eval.temperatures},
                 {"prompts", cfg.eval.prompts},
                 {"prompt_length", cfg.eval.prompt_length},
                 {"max_new_tokens", cfg.eval.max_new_tokens},
                 {"seed", cfg.eval.seed}};
    j["seeds"] = cfg.seeds;
    return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string canon = config_to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace dpace
