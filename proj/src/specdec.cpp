#include "dpace/specdec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpace/numerics.hpp"
#include "dpace/weights.hpp"

namespace dpace {

std::size_t TargetModel::num_contexts() const {
    std::size_t n = 1;
    for (int i = 0; i < order; ++i) {
        n *= static_cast<std::size_t>(vocab);
    }
    return n;
}

std::span<const double> TargetModel::row(std::size_t context_index) const {
    return {table.data() + context_index * vocab, static_cast<std::size_t>(vocab)};
}

std::size_t TargetModel::context_index(std::span<const int> prefix) const {
    std::size_t idx = 0;
    for (int i = order; i-- > 0;) {
        // i tokens back from the end; shorter prefixes are left-padded with 0
        const std::size_t back = static_cast<std::size_t>(i) + 1;
        int tok = 0;
        if (back <= prefix.size()) {
            tok = prefix[prefix.size() - back];
        }
        if (tok < 0 || tok >= vocab) {
            throw std::invalid_argument("target model: token id out of range");
        }
        idx = idx * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(tok);
    }
    return idx;
}

TargetModel sample_target_model(int vocab, int order, double concentration, std::uint64_t seed,
                                std::size_t max_table_entries) {
    if (vocab < 2 || order < 1) {
        throw std::invalid_argument("sample_target_model: need vocab >= 2 and order >= 1");
    }
    if (!(concentration > 0.0)) {
        throw std::invalid_argument("sample_target_model: concentration must be > 0");
    }
    std::size_t contexts = 1;
    for (int i = 0; i < order; ++i) {
        if (contexts > max_table_entries / static_cast<std::size_t>(vocab)) {
            throw std::length_error("sample_target_model: V^k exceeds table limit");
        }
        contexts *= static_cast<std::size_t>(vocab);
    }
    if (contexts > max_table_entries) {
        throw std::length_error("sample_target_model: V^k exceeds table limit");
    }

    TargetModel m;
    m.vocab = vocab;
    m.order = order;
    m.concentration = concentration;
    m.seed = seed;
    m.table.resize(contexts * static_cast<std::size_t>(vocab));
    Rng rng(seed);
    RealVector scores(vocab);
    for (std::size_t c = 0; c < contexts; ++c) {
        for (int v = 0; v < vocab; ++v) {
            scores[v] = rng.next_gaussian() / concentration;
        }
        const RealVector probs = softmax(scores);
        std::copy(probs.begin(), probs.end(), m.table.begin() + c * vocab);
    }
    return m;
}

namespace {

// tempered row in log space so small probabilities survive 1/T exponents
std::vector<double> temper_row(std::span<const double> row, double temperature) {
    std::vector<double> out(row.size());
    double mx = -1e300;
    for (std::size_t v = 0; v < row.size(); ++v) {
        out[v] = row[v] > 0.0 ? std::log(row[v]) / temperature : -1e300;
        mx = std::max(mx, out[v]);
    }
    double sum = 0.0;
    for (double& v : out) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : out) {
        v /= sum;
    }
    return out;
}

int argmax_lowest(std::span<const double> xs) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(xs.size()); ++i) {
        if (xs[i] > xs[best]) {
            best = i;
        }
    }
    return best;
}

} // namespace

std::vector<double> target_policy_dist(const TargetModel& model, std::span<const int> prefix,
                                       double temperature) {
    const auto row = model.row(model.context_index(prefix));
    if (temperature == 0.0) {
        std::vector<double> out(row.size(), 0.0);
        out[argmax_lowest(row)] = 1.0;
        return out;
    }
    if (temperature == 1.0) {
        return {row.begin(), row.end()};
    }
    return temper_row(row, temperature);
}

int target_policy_token(const TargetModel& model, std::span<const int> prefix,
                        double temperature, Rng& rng) {
    const auto row = model.row(model.context_index(prefix));
    if (temperature == 0.0) {
        return argmax_lowest(row);
    }
    std::vector<double> probs;
    std::span<const double> dist = row;
    if (temperature != 1.0) {
        probs = temper_row(row, temperature);
        dist = probs;
    }
    const double u = rng.next_double();
    double acc = 0.0;
    for (std::size_t v = 0; v + 1 < dist.size(); ++v) {
        acc += dist[v];
        if (u < acc) {
            return static_cast<int>(v);
        }
    }
    return static_cast<int>(dist.size()) - 1;
}

DataStream::DataStream(const TargetModel& model, int context_len, int block, int sequence_length,
                       double temperature, std::uint64_t seed, bool with_target_dists)
    : model_(model),
      context_len_(context_len),
      block_(block),
      sequence_length_(sequence_length),
      temperature_(temperature),
      with_target_dists_(with_target_dists),
      rng_(seed) {
    if (context_len < 1 || block < 1) {
        throw std::invalid_argument("data stream: context and block must be >= 1");
    }
    if (sequence_length < context_len + block) {
        throw std::invalid_argument("data stream: sequence length must be >= C + B");
    }
}

void DataStream::refill() {
    // random slicing phase per sequence so block starts cover every depth
    // residue mod B; the sequence is extended by B-1 tokens to keep the
    // example count per sequence at floor((L - C) / B) for any phase
    const int offset = block_ > 1 ? rng_.next_below(block_) : 0;
    const int gen_len = sequence_length_ + offset;
    std::vector<int> seq;
    seq.reserve(gen_len);
    std::vector<double> dists; // per-position policy rows when requested
    if (with_target_dists_) {
        dists.reserve(static_cast<std::size_t>(gen_len) * model_.vocab);
    }
    for (int t = 0; t < gen_len; ++t) {
        if (with_target_dists_) {
            const std::vector<double> d = target_policy_dist(model_, seq, temperature_);
            dists.insert(dists.end(), d.begin(), d.end());
        }
        seq.push_back(target_policy_token(model_, seq, temperature_, rng_));
    }
    for (int t = context_len_ + offset; t + block_ <= gen_len; t += block_) {
        TrainingExample ex;
        ex.context.assign(seq.begin() + (t - context_len_), seq.begin() + t);
        ex.targets.assign(seq.begin() + t, seq.begin() + t + block_);
        if (with_target_dists_) {
            TargetDistBlock db(block_, model_.vocab);
            std::copy(dists.begin() + static_cast<std::size_t>(t) * model_.vocab,
                      dists.begin() + static_cast<std::size_t>(t + block_) * model_.vocab,
                      db.p.begin());
            ex.target_dists = std::move(db);
        }
        buffer_.push_back(std::move(ex));
    }
}

TrainingExample DataStream::next() {
    while (buffer_.empty()) {
        refill();
    }
    TrainingExample ex = std::move(buffer_.front());
    buffer_.pop_front();
    return ex;
}

std::vector<TrainingExample> generate_training_data(const TargetModel& model, int num_sequences,
                                                    int length, int block, int context_len,
                                                    double temperature, std::uint64_t seed,
                                                    bool with_target_dists) {
    DataStream stream(model, context_len, block, length, temperature, seed, with_target_dists);
    const int per_sequence = (length - context_len) / block;
    std::vector<TrainingExample> out;
    out.reserve(static_cast<std::size_t>(num_sequences) * per_sequence);
    for (int i = 0; i < num_sequences * per_sequence; ++i) {
        out.push_back(stream.next());
    }
    return out;
}

DecodeResult decode_speculative(const TargetModel& model, const DraftFn& draft,
                                std::span<const int> prompt, const DecodeConfig& cfg) {
    if (prompt.empty()) {
        throw std::invalid_argument("decode_speculative: prompt must be non-empty");
    }
    if (cfg.block < 1) {
        throw std::invalid_argument("decode_speculative: block must be >= 1");
    }
    Rng rng(cfg.seed);
    DecodeResult res;
    res.tokens.assign(prompt.begin(), prompt.end());
    int emitted_total = 0;
    while (emitted_total < cfg.max_new_tokens) {
        const LogitBlock logits = draft(res.tokens);
        if (logits.block != cfg.block || logits.vocab != model.vocab) {
            throw std::invalid_argument("decode_speculative: drafter block shape mismatch");
        }
        check_finite(logits.a, "draft logits");

        // draft proposal: argmax per row
        std::vector<int> drafted(cfg.block);
        for (int j = 0; j < cfg.block; ++j) {
            drafted[j] = argmax_lowest(logits.row(j));
        }

        // verify left to right against the policy token given the draft-so-far
        // prefix; policy tokens and confidences are computed for all B
        // positions, as a parallel verifier would
        BlockOutcome out;
        out.q.resize(cfg.block);
        std::vector<int> verify_prefix = res.tokens;
        std::vector<int> policy_tokens(cfg.block);
        int accepted = 0;
        bool matching = true;
        for (int j = 0; j < cfg.block; ++j) {
            policy_tokens[j] = target_policy_token(model, verify_prefix, cfg.temperature, rng);
            const auto row = logits.row(j);
            const double mx = *std::max_element(row.begin(), row.end());
            double denom = 0.0;
            for (double v : row) {
                denom += std::exp(v - mx);
            }
            out.q[j] = std::exp(row[policy_tokens[j]] - mx) / denom;
            if (matching && drafted[j] == policy_tokens[j]) {
                ++accepted;
            } else {
                matching = false;
            }
            verify_prefix.push_back(drafted[j]);
        }
        out.surrogate = surrogate_S(out.q);

        // emitted tokens: accepted prefix plus the correction token, or plus
        // one bonus policy token on full acceptance
        std::vector<int> emit(drafted.begin(), drafted.begin() + accepted);
        if (accepted < cfg.block) {
            emit.push_back(policy_tokens[accepted]);
        } else {
            emit.push_back(target_policy_token(model, verify_prefix, cfg.temperature, rng));
        }

        const int budget = cfg.max_new_tokens - emitted_total;
        if (static_cast<int>(emit.size()) > budget) {
            emit.resize(budget);
            out.truncated = true;
        }
        out.accepted = std::min<int>(accepted, static_cast<int>(emit.size()));
        out.emitted = static_cast<int>(emit.size());
        res.tokens.insert(res.tokens.end(), emit.begin(), emit.end());
        emitted_total += out.emitted;
        res.blocks.push_back(std::move(out));
    }
    return res;
}

std::vector<int> decode_autoregressive(const TargetModel& model, std::span<const int> prompt,
                                       const DecodeConfig& cfg) {
    if (prompt.empty()) {
        throw std::invalid_argument("decode_autoregressive: prompt must be non-empty");
    }
    Rng rng(cfg.seed);
    std::vector<int> tokens(prompt.begin(), prompt.end());
    for (int n = 0; n < cfg.max_new_tokens; ++n) {
        tokens.push_back(target_policy_token(model, tokens, cfg.temperature, rng));
    }
    return tokens;
}

MonteCarloEstimate bernoulli_accept_sim(const std::vector<double>& q, long long trials,
                                        std::uint64_t seed) {
    if (trials < 1) {
        throw std::invalid_argument("bernoulli_accept_sim: trials must be >= 1");
    }
    for (double v : q) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("bernoulli_accept_sim: q outside [0, 1]");
        }
    }
    Rng rng(seed);
    double sum = 0.0;
    double sumsq = 0.0;
    for (long long t = 0; t < trials; ++t) {
        int x = 0;
        for (double prob : q) {
            if (!rng.next_bernoulli(prob)) {
                break;
            }
            ++x;
        }
        sum += x;
        sumsq += static_cast<double>(x) * x;
    }
    MonteCarloEstimate est;
    est.trials = trials;
    est.mean = sum / static_cast<double>(trials);
    if (trials > 1) {
        const double var =
            std::max(0.0, (sumsq - sum * est.mean) / static_cast<double>(trials - 1));
        est.std_error = std::sqrt(var / static_cast<double>(trials));
    }
    return est;
}

} // namespace dpace
