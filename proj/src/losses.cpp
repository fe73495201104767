#include "dpace/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "dpace/numerics.hpp"
#include "dpace/weights.hpp"

namespace dpace {

namespace {

void check_block(const LogitBlock& logits) {
    if (logits.block < 1 || logits.vocab < 1) {
        throw std::invalid_argument("logit block: B and V must be >= 1");
    }
    check_finite(logits.a, "logit block");
}

void check_targets(const LogitBlock& logits, const TargetTokens& targets) {
    if (static_cast<int>(targets.size()) != logits.block) {
        throw std::invalid_argument("target tokens: length must equal block size");
    }
    for (int z : targets) {
        if (z < 0 || z >= logits.vocab) {
            throw std::invalid_argument("target tokens: id out of range");
        }
    }
}

void check_dists(const LogitBlock& logits, const TargetDistBlock& dists) {
    dists.validate();
    if (dists.block != logits.block || dists.vocab != logits.vocab) {
        throw std::invalid_argument("target dist block: shape mismatch with logits");
    }
}

// log-softmax of every row
std::vector<double> log_softmax_rows(const LogitBlock& logits) {
    std::vector<double> ls = logits.a;
    for (int j = 0; j < logits.block; ++j) {
        log_softmax_inplace({ls.data() + static_cast<std::size_t>(j) * logits.vocab,
                             static_cast<std::size_t>(logits.vocab)});
    }
    return ls;
}

std::vector<double> confidences_from_ls(const std::vector<double>& ls, int vocab,
                                        const TargetTokens& targets) {
    std::vector<double> q(targets.size());
    for (std::size_t j = 0; j < targets.size(); ++j) {
        q[j] = std::exp(ls[j * vocab + targets[j]]);
    }
    return q;
}

// grad row j = w_j * (softmax(row_j) - onehot(z_j)), written into out
void weighted_ce_grad_row(std::span<const double> ls_row, int z, double w, std::span<double> out) {
    for (std::size_t v = 0; v < ls_row.size(); ++v) {
        out[v] = w * std::exp(ls_row[v]);
    }
    out[z] -= w;
}

// shared body of the detached-weight CE family; ls precomputed
LossResult weighted_ce_from_ls(const std::vector<double>& ls, int vocab,
                               const TargetTokens& targets, std::vector<double> w) {
    LossResult r;
    r.grad.assign(ls.size(), 0.0);
    const auto V = static_cast<std::size_t>(vocab);
    for (std::size_t j = 0; j < targets.size(); ++j) {
        std::span<const double> ls_row{ls.data() + j * V, V};
        r.loss += w[j] * -ls_row[targets[j]];
        weighted_ce_grad_row(ls_row, targets[j], w[j], {r.grad.data() + j * V, V});
    }
    r.weights = std::move(w);
    return r;
}

} // namespace

void TargetDistBlock::validate() const {
    if (block < 1 || vocab < 1 || p.size() != static_cast<std::size_t>(block) * vocab) {
        throw std::invalid_argument("target dist block: bad shape");
    }
    for (int j = 0; j < block; ++j) {
        double sum = 0.0;
        for (double v : row(j)) {
            if (!(v >= 0.0)) {
                throw std::invalid_argument("target dist block: negative or NaN entry");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw std::invalid_argument("target dist block: row does not sum to 1");
        }
    }
}

const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::dpace: return "dpace";
        case LossKind::dflash: return "dflash";
        case LossKind::topk_mask: return "topk_mask";
        case LossKind::accept_rate: return "accept_rate";
        case LossKind::cumulative_only: return "cumulative_only";
        case LossKind::continuation_only: return "continuation_only";
        case LossKind::target_prob: return "target_prob";
        case LossKind::dpakl: return "dpakl";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
    for (LossKind k : all_loss_kinds()) {
        if (s == to_string(k)) {
            return k;
        }
    }
    throw std::invalid_argument("unknown loss kind: " + s);
}

const std::vector<LossKind>& all_loss_kinds() {
    static const std::vector<LossKind> kinds = {
        LossKind::dpace,           LossKind::dflash,
        LossKind::topk_mask,       LossKind::accept_rate,
        LossKind::cumulative_only, LossKind::continuation_only,
        LossKind::target_prob,     LossKind::dpakl,
    };
    return kinds;
}

bool loss_needs_target_dists(LossKind k) {
    return k == LossKind::target_prob || k == LossKind::dpakl;
}

void LossConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("loss config: alpha outside [0, 1]");
    }
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("loss config: gamma must be > 0");
    }
    if (top_k < 1) {
        throw std::invalid_argument("loss config: top_k must be >= 1");
    }
}

std::vector<double> confidences_from_logits(const LogitBlock& logits, const TargetTokens& targets) {
    check_block(logits);
    check_targets(logits, targets);
    return confidences_from_ls(log_softmax_rows(logits), logits.vocab, targets);
}

LossResult loss_dpace(const LogitBlock& logits, const TargetTokens& targets, double alpha) {
    check_block(logits);
    check_targets(logits, targets);
    const std::vector<double> ls = log_softmax_rows(logits);
    const std::vector<double> q = confidences_from_ls(ls, logits.vocab, targets);
    return weighted_ce_from_ls(ls, logits.vocab, targets, dpace_weights(q, alpha));
}

LossResult loss_dflash(const LogitBlock& logits, const TargetTokens& targets, double gamma) {
    check_block(logits);
    check_targets(logits, targets);
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("loss_dflash: gamma must be > 0");
    }
    std::vector<double> w(logits.block);
    for (int j = 0; j < logits.block; ++j) {
        w[j] = std::exp(-static_cast<double>(j) / gamma); // rows 0-based: j here is j-1 in 1-based terms
    }
    return weighted_ce_from_ls(log_softmax_rows(logits), logits.vocab, targets, std::move(w));
}

LossResult loss_topk_mask(const LogitBlock& logits, const TargetTokens& targets, int top_k) {
    check_block(logits);
    check_targets(logits, targets);
    if (top_k < 1) {
        throw std::invalid_argument("loss_topk_mask: top_k must be >= 1");
    }
    // z lies inside the top-K iff fewer than K scores strictly exceed score[z];
    // a tie at the K-th score therefore counts as inside
    std::vector<double> mask(logits.block, 1.0);
    for (int j = 1; j < logits.block; ++j) {
        const auto prev = logits.row(j - 1);
        const double zscore = prev[targets[j - 1]];
        int greater = 0;
        for (double v : prev) {
            if (v > zscore) {
                ++greater;
            }
        }
        mask[j] = (greater < top_k) ? mask[j - 1] : 0.0;
    }
    return weighted_ce_from_ls(log_softmax_rows(logits), logits.vocab, targets, std::move(mask));
}

LossResult loss_accept_rate(const LogitBlock& logits, const TargetTokens& targets) {
    check_block(logits);
    check_targets(logits, targets);
    const std::vector<double> ls = log_softmax_rows(logits);
    const std::vector<double> q = confidences_from_ls(ls, logits.vocab, targets);
    // dL/dq_j * q_j = -(prod_{i<=j} q_i) f_j, the unsmoothed alpha=0 weight;
    // built from prefix products only, so q_j = 0 stays harmless
    std::vector<double> w = dpace_weights(q, 0.0);
    LossResult r;
    r.loss = -surrogate_S(q);
    r.grad.assign(logits.a.size(), 0.0);
    const auto V = static_cast<std::size_t>(logits.vocab);
    for (int j = 0; j < logits.block; ++j) {
        weighted_ce_grad_row({ls.data() + j * V, V}, targets[j], w[j],
                             {r.grad.data() + j * V, V});
    }
    r.weights = std::move(w);
    return r;
}

LossResult loss_cumulative_only(const LogitBlock& logits, const TargetTokens& targets, double alpha) {
    check_block(logits);
    check_targets(logits, targets);
    const std::vector<double> ls = log_softmax_rows(logits);
    const std::vector<double> q = confidences_from_ls(ls, logits.vocab, targets);
    return weighted_ce_from_ls(ls, logits.vocab, targets,
                               prefix_products(smooth_confidences(q, alpha)));
}

LossResult loss_continuation_only(const LogitBlock& logits, const TargetTokens& targets, double alpha) {
    check_block(logits);
    check_targets(logits, targets);
    const std::vector<double> ls = log_softmax_rows(logits);
    const std::vector<double> q = confidences_from_ls(ls, logits.vocab, targets);
    return weighted_ce_from_ls(ls, logits.vocab, targets,
                               continuation_values(smooth_confidences(q, alpha)));
}

LossResult loss_target_prob(const LogitBlock& logits, const TargetTokens& targets,
                            const TargetDistBlock& target_dists, double alpha) {
    check_block(logits);
    check_targets(logits, targets);
    check_dists(logits, target_dists);
    std::vector<double> p(logits.block);
    for (int j = 0; j < logits.block; ++j) {
        p[j] = target_dists.row(j)[targets[j]];
    }
    return weighted_ce_from_ls(log_softmax_rows(logits), logits.vocab, targets,
                               dpace_weights(p, alpha));
}

LossResult loss_dpakl(const LogitBlock& logits, const TargetDistBlock& target_dists, double alpha) {
    check_block(logits);
    check_dists(logits, target_dists);
    const std::vector<double> ls = log_softmax_rows(logits);
    const int B = logits.block;
    const int V = logits.vocab;
    std::vector<double> c(B, 0.0); // soft-label cross-entropies
    std::vector<double> ahat(B);   // acceptance proxies exp(-C_j)
    for (int j = 0; j < B; ++j) {
        const auto pr = target_dists.row(j);
        for (int v = 0; v < V; ++v) {
            c[j] -= pr[v] * ls[static_cast<std::size_t>(j) * V + v];
        }
        ahat[j] = std::exp(-c[j]);
    }
    std::vector<double> w = dpace_weights(ahat, alpha);
    LossResult r;
    r.grad.assign(logits.a.size(), 0.0);
    for (int j = 0; j < B; ++j) {
        r.loss += w[j] * c[j];
        const auto pr = target_dists.row(j);
        for (int v = 0; v < V; ++v) {
            const std::size_t idx = static_cast<std::size_t>(j) * V + v;
            r.grad[idx] = w[j] * (std::exp(ls[idx]) - pr[v]);
        }
    }
    r.weights = std::move(w);
    return r;
}

LossResult compute_loss(const LogitBlock& logits, const TargetTokens& targets,
                        const TargetDistBlock* target_dists, const LossConfig& cfg) {
    cfg.validate();
    if (loss_needs_target_dists(cfg.kind) && target_dists == nullptr) {
        throw std::invalid_argument(std::string("loss ") + to_string(cfg.kind) +
                                    " requires target distributions");
    }
    switch (cfg.kind) {
        case LossKind::dpace: return loss_dpace(logits, targets, cfg.alpha);
        case LossKind::dflash: return loss_dflash(logits, targets, cfg.gamma);
        case LossKind::topk_mask: return loss_topk_mask(logits, targets, cfg.top_k);
        case LossKind::accept_rate: return loss_accept_rate(logits, targets);
        case LossKind::cumulative_only: return loss_cumulative_only(logits, targets, cfg.alpha);
        case LossKind::continuation_only: return loss_continuation_only(logits, targets, cfg.alpha);
        case LossKind::target_prob: return loss_target_prob(logits, targets, *target_dists, cfg.alpha);
        case LossKind::dpakl: return loss_dpakl(logits, *target_dists, cfg.alpha);
    }
    throw std::invalid_argument("compute_loss: unknown kind");
}

double gamma_for_block(int block) {
    switch (block) {
        case 16: return 7.0;
        case 10: return 5.0;
        case 8: return 4.0;
        case 12: return 6.0;
        default: break;
    }
    // extrapolation; clamped so the decay stays well defined for tiny blocks
    return std::max(1.0, std::round(static_cast<double>(block) / 2.0 - 1.0));
}

double weighted_ce_value(const LogitBlock& logits, const TargetTokens& targets,
                         std::span<const double> w) {
    check_block(logits);
    check_targets(logits, targets);
    if (w.size() != static_cast<std::size_t>(logits.block)) {
        throw std::invalid_argument("weighted_ce_value: weight length mismatch");
    }
    const std::vector<double> ls = log_softmax_rows(logits);
    double loss = 0.0;
    for (int j = 0; j < logits.block; ++j) {
        loss += w[j] * -ls[static_cast<std::size_t>(j) * logits.vocab + targets[j]];
    }
    return loss;
}

std::vector<double> soft_ce_values(const LogitBlock& logits, const TargetDistBlock& target_dists) {
    check_block(logits);
    check_dists(logits, target_dists);
    const std::vector<double> ls = log_softmax_rows(logits);
    std::vector<double> c(logits.block, 0.0);
    for (int j = 0; j < logits.block; ++j) {
        const auto pr = target_dists.row(j);
        for (int v = 0; v < logits.vocab; ++v) {
            c[j] -= pr[v] * ls[static_cast<std::size_t>(j) * logits.vocab + v];
        }
    }
    return c;
}

double weighted_soft_ce_value(const LogitBlock& logits, const TargetDistBlock& target_dists,
                              std::span<const double> w) {
    const std::vector<double> c = soft_ce_values(logits, target_dists);
    if (w.size() != c.size()) {
        throw std::invalid_argument("weighted_soft_ce_value: weight length mismatch");
    }
    double loss = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
        loss += w[j] * c[j];
    }
    return loss;
}

} // namespace dpace
