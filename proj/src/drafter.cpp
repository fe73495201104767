#include "dpace/drafter.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dpace/rng.hpp"

namespace dpace {

void DrafterConfig::validate() const {
    if (vocab < 2 || context < 1 || embed < 1 || hidden < 1 || block < 1) {
        throw std::invalid_argument("drafter config: dimensions must be positive (vocab >= 2)");
    }
}

std::size_t DrafterParams::w1_off() const {
    return static_cast<std::size_t>(cfg.vocab) * cfg.embed;
}
std::size_t DrafterParams::b1_off() const {
    return w1_off() + static_cast<std::size_t>(cfg.hidden) * cfg.context * cfg.embed;
}
std::size_t DrafterParams::w2_off() const {
    return b1_off() + static_cast<std::size_t>(cfg.hidden);
}
std::size_t DrafterParams::b2_off() const {
    return w2_off() + static_cast<std::size_t>(cfg.hidden) * cfg.hidden;
}
std::size_t DrafterParams::heads_off() const {
    return b2_off() + static_cast<std::size_t>(cfg.hidden);
}
std::size_t DrafterParams::head_b_off() const {
    return heads_off() + static_cast<std::size_t>(cfg.block) * cfg.vocab * cfg.hidden;
}

std::size_t drafter_param_count(const DrafterConfig& cfg) {
    DrafterParams p;
    p.cfg = cfg;
    return p.head_b_off() + static_cast<std::size_t>(cfg.block) * cfg.vocab;
}

DrafterParams drafter_init(const DrafterConfig& cfg) {
    cfg.validate();
    DrafterParams p;
    p.cfg = cfg;
    p.theta.assign(drafter_param_count(cfg), 0.0);
    Rng rng(cfg.seed);

    const double embed_scale = 0.02;
    const double w1_scale = 1.0 / std::sqrt(static_cast<double>(cfg.context) * cfg.embed);
    const double w2_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    const double head_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));

    for (std::size_t i = p.embed_off(); i < p.w1_off(); ++i) {
        p.theta[i] = embed_scale * rng.next_gaussian();
    }
    for (std::size_t i = p.w1_off(); i < p.b1_off(); ++i) {
        p.theta[i] = w1_scale * rng.next_gaussian();
    }
    for (std::size_t i = p.w2_off(); i < p.b2_off(); ++i) {
        p.theta[i] = w2_scale * rng.next_gaussian();
    }
    for (std::size_t i = p.heads_off(); i < p.head_b_off(); ++i) {
        p.theta[i] = head_scale * rng.next_gaussian();
    }
    // biases stay zero
    return p;
}

LogitBlock drafter_forward(const DrafterParams& params, std::span<const int> context,
                           ForwardCache* cache) {
    const DrafterConfig& c = params.cfg;
    if (static_cast<int>(context.size()) != c.context) {
        throw std::invalid_argument("drafter_forward: context length mismatch");
    }
    for (int tok : context) {
        if (tok < 0 || tok >= c.vocab) {
            throw std::invalid_argument("drafter_forward: token id out of range");
        }
    }
    const double* th = params.theta.data();
    const int in_dim = c.context * c.embed;

    std::vector<double> x0(in_dim);
    for (int pos = 0; pos < c.context; ++pos) {
        const double* e = th + params.embed_off() + static_cast<std::size_t>(context[pos]) * c.embed;
        std::copy(e, e + c.embed, x0.begin() + static_cast<std::size_t>(pos) * c.embed);
    }

    std::vector<double> h1(c.hidden);
    const double* w1 = th + params.w1_off();
    const double* b1 = th + params.b1_off();
    for (int i = 0; i < c.hidden; ++i) {
        double acc = b1[i];
        const double* row = w1 + static_cast<std::size_t>(i) * in_dim;
        for (int k = 0; k < in_dim; ++k) {
            acc += row[k] * x0[k];
        }
        h1[i] = std::tanh(acc);
    }

    std::vector<double> h2(c.hidden);
    const double* w2 = th + params.w2_off();
    const double* b2 = th + params.b2_off();
    for (int i = 0; i < c.hidden; ++i) {
        double acc = b2[i];
        const double* row = w2 + static_cast<std::size_t>(i) * c.hidden;
        for (int k = 0; k < c.hidden; ++k) {
            acc += row[k] * h1[k];
        }
        h2[i] = std::tanh(acc);
    }

    LogitBlock logits(c.block, c.vocab);
    const double* heads = th + params.heads_off();
    const double* head_b = th + params.head_b_off();
    for (int j = 0; j < c.block; ++j) {
        auto out = logits.row(j);
        for (int v = 0; v < c.vocab; ++v) {
            const double* row =
                heads + (static_cast<std::size_t>(j) * c.vocab + v) * c.hidden;
            double acc = head_b[static_cast<std::size_t>(j) * c.vocab + v];
            for (int k = 0; k < c.hidden; ++k) {
                acc += row[k] * h2[k];
            }
            out[v] = acc;
        }
    }

    if (cache != nullptr) {
        cache->context.assign(context.begin(), context.end());
        cache->x0 = std::move(x0);
        cache->h1 = std::move(h1);
        cache->h2 = std::move(h2);
    }
    return logits;
}

void drafter_backward_accum(const DrafterParams& params, const ForwardCache& cache,
                            std::span<const double> grad_logits, std::span<double> grad_out) {
    const DrafterConfig& c = params.cfg;
    const std::size_t bv = static_cast<std::size_t>(c.block) * c.vocab;
    if (grad_logits.size() != bv || grad_out.size() != params.size()) {
        throw std::invalid_argument("drafter_backward: shape mismatch");
    }
    if (static_cast<int>(cache.context.size()) != c.context ||
        static_cast<int>(cache.h2.size()) != c.hidden) {
        throw std::invalid_argument("drafter_backward: cache does not match config");
    }
    const double* th = params.theta.data();
    const int in_dim = c.context * c.embed;

    // heads and dL/dh2
    std::vector<double> dh2(c.hidden, 0.0);
    const double* heads = th + params.heads_off();
    double* dheads = grad_out.data() + params.heads_off();
    double* dhead_b = grad_out.data() + params.head_b_off();
    for (std::size_t jv = 0; jv < bv; ++jv) {
        const double g = grad_logits[jv];
        if (g == 0.0) {
            continue;
        }
        const double* row = heads + jv * c.hidden;
        double* drow = dheads + jv * c.hidden;
        for (int k = 0; k < c.hidden; ++k) {
            drow[k] += g * cache.h2[k];
            dh2[k] += g * row[k];
        }
        dhead_b[jv] += g;
    }

    // trunk layer 2
    std::vector<double> da2(c.hidden);
    for (int i = 0; i < c.hidden; ++i) {
        da2[i] = dh2[i] * (1.0 - cache.h2[i] * cache.h2[i]);
    }
    std::vector<double> dh1(c.hidden, 0.0);
    const double* w2 = th + params.w2_off();
    double* dw2 = grad_out.data() + params.w2_off();
    double* db2 = grad_out.data() + params.b2_off();
    for (int i = 0; i < c.hidden; ++i) {
        const double g = da2[i];
        const double* row = w2 + static_cast<std::size_t>(i) * c.hidden;
        double* drow = dw2 + static_cast<std::size_t>(i) * c.hidden;
        for (int k = 0; k < c.hidden; ++k) {
            drow[k] += g * cache.h1[k];
            dh1[k] += g * row[k];
        }
        db2[i] += g;
    }

    // trunk layer 1
    std::vector<double> da1(c.hidden);
    for (int i = 0; i < c.hidden; ++i) {
        da1[i] = dh1[i] * (1.0 - cache.h1[i] * cache.h1[i]);
    }
    std::vector<double> dx0(in_dim, 0.0);
    const double* w1 = th + params.w1_off();
    double* dw1 = grad_out.data() + params.w1_off();
    double* db1 = grad_out.data() + params.b1_off();
    for (int i = 0; i < c.hidden; ++i) {
        const double g = da1[i];
        const double* row = w1 + static_cast<std::size_t>(i) * in_dim;
        double* drow = dw1 + static_cast<std::size_t>(i) * in_dim;
        for (int k = 0; k < in_dim; ++k) {
            drow[k] += g * cache.x0[k];
            dx0[k] += g * row[k];
        }
        db1[i] += g;
    }

    // embeddings
    double* dembed = grad_out.data() + params.embed_off();
    for (int pos = 0; pos < c.context; ++pos) {
        double* drow = dembed + static_cast<std::size_t>(cache.context[pos]) * c.embed;
        for (int e = 0; e < c.embed; ++e) {
            drow[e] += dx0[static_cast<std::size_t>(pos) * c.embed + e];
        }
    }
}

std::vector<double> drafter_backward(const DrafterParams& params, const ForwardCache& cache,
                                     std::span<const double> grad_logits) {
    std::vector<double> grad(params.size(), 0.0);
    drafter_backward_accum(params, cache, grad_logits, grad);
    return grad;
}

DraftFn make_draft_fn(const DrafterParams& params) {
    return [snapshot = params](std::span<const int> prefix) {
        const int ctx_len = snapshot.cfg.context;
        std::vector<int> ctx(ctx_len, 0);
        const std::size_t take = std::min<std::size_t>(prefix.size(), ctx_len);
        std::copy(prefix.end() - take, prefix.end(), ctx.end() - take);
        return drafter_forward(snapshot, ctx);
    };
}

StepMetrics train_step(DrafterParams& params, AdamWState& opt,
                       std::span<const TrainingExample> batch, const LossConfig& loss_cfg,
                       const TrainStepOptions& opts) {
    if (batch.empty()) {
        throw std::invalid_argument("train_step: empty batch");
    }
    if (opts.accumulation < 1 || batch.size() % opts.accumulation != 0) {
        throw std::invalid_argument("train_step: batch size must divide into accumulation steps");
    }
    const int B = params.cfg.block;
    const std::size_t micro = batch.size() / opts.accumulation;

    StepMetrics m;
    m.mean_q.assign(B, 0.0);
    m.mean_weight.assign(B, 0.0);
    std::vector<double> grad(params.size(), 0.0);
    std::vector<double> micro_grad(params.size(), 0.0);
    ForwardCache cache;

    for (int a = 0; a < opts.accumulation; ++a) {
        std::fill(micro_grad.begin(), micro_grad.end(), 0.0);
        for (std::size_t i = 0; i < micro; ++i) {
            const TrainingExample& ex = batch[a * micro + i];
            const LogitBlock logits = drafter_forward(params, ex.context, &cache);
            const TargetDistBlock* dists =
                ex.target_dists.has_value() ? &*ex.target_dists : nullptr;
            const LossResult res = compute_loss(logits, ex.targets, dists, loss_cfg);
            m.loss += res.loss;
            const std::vector<double> q = confidences_from_logits(logits, ex.targets);
            for (int j = 0; j < B; ++j) {
                m.mean_q[j] += q[j];
                m.mean_weight[j] += res.weights[j];
            }
            drafter_backward_accum(params, cache, res.grad, micro_grad);
        }
        for (std::size_t k = 0; k < grad.size(); ++k) {
            grad[k] += micro_grad[k] / static_cast<double>(micro);
        }
    }

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    m.loss *= inv_batch;
    for (int j = 0; j < B; ++j) {
        m.mean_q[j] *= inv_batch;
        m.mean_weight[j] *= inv_batch;
    }
    const double inv_accum = 1.0 / static_cast<double>(opts.accumulation);
    double sq = 0.0;
    for (double& g : grad) {
        g *= inv_accum;
        sq += g * g;
    }
    m.grad_norm = std::sqrt(sq);
    if (opts.clip_norm > 0.0 && m.grad_norm > opts.clip_norm) {
        const double scale = opts.clip_norm / m.grad_norm;
        for (double& g : grad) {
            g *= scale;
        }
    }
    adamw_step(params.theta, grad, opt);
    m.step = opt.step;
    return m;
}

void save_drafter(const DrafterParams& params, const std::string& path) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["config"] = {
        {"vocab", params.cfg.vocab},    {"context", params.cfg.context},
        {"embed", params.cfg.embed},    {"hidden", params.cfg.hidden},
        {"block", params.cfg.block},    {"seed", params.cfg.seed},
    };
    j["params"] = params.theta;
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_drafter: cannot open " + path);
    }
    out << j.dump(2) << "\n";
}

DrafterParams load_drafter(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_drafter: cannot open " + path);
    }
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("version").get<int>() != 1) {
        throw std::runtime_error("load_drafter: unsupported checkpoint version");
    }
    DrafterParams p;
    const auto& c = j.at("config");
    p.cfg.vocab = c.at("vocab").get<int>();
    p.cfg.context = c.at("context").get<int>();
    p.cfg.embed = c.at("embed").get<int>();
    p.cfg.hidden = c.at("hidden").get<int>();
    p.cfg.block = c.at("block").get<int>();
    p.cfg.seed = c.at("seed").get<std::uint64_t>();
    p.cfg.validate();
    p.theta = j.at("params").get<std::vector<double>>();
    if (p.theta.size() != drafter_param_count(p.cfg)) {
        throw std::runtime_error("load_drafter: parameter count does not match config");
    }
    return p;
}

} // namespace dpace
