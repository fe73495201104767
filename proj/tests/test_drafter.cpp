#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dpace/drafter.hpp"
#include "dpace/numerics.hpp"
#include "dpace/rng.hpp"
#include "oracles.hpp"

using namespace dpace;

namespace {

DrafterConfig tiny_config() {
    DrafterConfig c;
    c.vocab = 5;
    c.context = 2;
    c.embed = 3;
    c.hidden = 4;
    c.block = 2;
    c.seed = 11;
    return c;
}

// hand-built order-1 deterministic cycle 0 -> 1 -> 2 -> 0
TargetModel cycle_model() {
    TargetModel m;
    m.vocab = 3;
    m.order = 1;
    m.concentration = 1.0;
    m.seed = 0;
    m.table.assign(9, 0.0);
    m.table[0 * 3 + 1] = 1.0;
    m.table[1 * 3 + 2] = 1.0;
    m.table[2 * 3 + 0] = 1.0;
    return m;
}

} // namespace

TEST_CASE("init is seed-deterministic") {
    const DrafterConfig c = tiny_config();
    CHECK(drafter_init(c).theta == drafter_init(c).theta);

    DrafterConfig other = c;
    other.seed = 12;
    CHECK(drafter_init(c).theta != drafter_init(other).theta);
    CHECK(drafter_init(c).theta.size() == drafter_param_count(c));
}

TEST_CASE("fresh params give bounded finite logits") {
    DrafterConfig c = tiny_config();
    c.vocab = 32;
    c.hidden = 64;
    c.embed = 8;
    c.context = 4;
    c.block = 8;
    const DrafterParams p = drafter_init(c);
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        std::vector<int> ctx(c.context);
        for (int& x : ctx) {
            x = rng.next_below(c.vocab);
        }
        const LogitBlock lb = drafter_forward(p, ctx);
        for (double v : lb.a) {
            CHECK(std::isfinite(v));
            CHECK(std::abs(v) < 100.0);
        }
    }
}

TEST_CASE("rows depend only on their own head") {
    const DrafterConfig c = tiny_config();
    DrafterParams p = drafter_init(c);
    const std::vector<int> ctx{1, 3};
    const LogitBlock base = drafter_forward(p, ctx);

    // zeroing head 1 zeroes exactly row 1
    DrafterParams zeroed = p;
    const std::size_t head_sz = static_cast<std::size_t>(c.vocab) * c.hidden;
    for (std::size_t i = 0; i < head_sz; ++i) {
        zeroed.theta[zeroed.heads_off() + head_sz + i] = 0.0;
    }
    for (int v = 0; v < c.vocab; ++v) {
        zeroed.theta[zeroed.head_b_off() + c.vocab + v] = 0.0;
    }
    const LogitBlock z = drafter_forward(zeroed, ctx);
    for (int v = 0; v < c.vocab; ++v) {
        CHECK(z.row(1)[v] == 0.0);
        CHECK(z.row(0)[v] == base.row(0)[v]);
    }

    // perturbing head 0 leaves row 1 untouched
    DrafterParams bumped = p;
    bumped.theta[bumped.heads_off() + 2] += 0.37;
    const LogitBlock b = drafter_forward(bumped, ctx);
    bool row0_changed = false;
    for (int v = 0; v < c.vocab; ++v) {
        row0_changed = row0_changed || b.row(0)[v] != base.row(0)[v];
        CHECK(b.row(1)[v] == base.row(1)[v]);
    }
    CHECK(row0_changed);
}

TEST_CASE("forward validates context") {
    const DrafterParams p = drafter_init(tiny_config());
    CHECK_THROWS_AS(drafter_forward(p, std::vector<int>{0}), std::invalid_argument);
    CHECK_THROWS_AS(drafter_forward(p, std::vector<int>{0, 5}), std::invalid_argument);
    CHECK_THROWS_AS(drafter_forward(p, std::vector<int>{-1, 0}), std::invalid_argument);
}

TEST_CASE("backward zero and linearity") {
    const DrafterConfig c = tiny_config();
    const DrafterParams p = drafter_init(c);
    ForwardCache cache;
    drafter_forward(p, std::vector<int>{2, 4}, &cache);
    const std::size_t bv = static_cast<std::size_t>(c.block) * c.vocab;

    for (double g : drafter_backward(p, cache, std::vector<double>(bv, 0.0))) {
        CHECK(g == 0.0);
    }

    Rng rng(17);
    std::vector<double> g1(bv), g2(bv), g12(bv);
    for (std::size_t i = 0; i < bv; ++i) {
        g1[i] = rng.next_gaussian();
        g2[i] = rng.next_gaussian();
        g12[i] = g1[i] + g2[i];
    }
    const auto b1 = drafter_backward(p, cache, g1);
    const auto b2 = drafter_backward(p, cache, g2);
    const auto b12 = drafter_backward(p, cache, g12);
    for (std::size_t i = 0; i < b12.size(); ++i) {
        CHECK(b12[i] == doctest::Approx(b1[i] + b2[i]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(drafter_backward(p, cache, std::vector<double>(bv + 1, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("end-to-end parameter gradients match finite differences") {
    // ~200-parameter configuration
    DrafterConfig c;
    c.vocab = 5;
    c.context = 2;
    c.embed = 3;
    c.hidden = 4;
    c.block = 2;
    c.seed = 23;
    const DrafterParams base = drafter_init(c);
    const std::vector<int> ctx{1, 4};
    const TargetTokens targets{2, 0};
    Rng rng(29);
    TargetDistBlock dists(c.block, c.vocab);
    for (int j = 0; j < c.block; ++j) {
        RealVector s(c.vocab);
        for (double& x : s) {
            x = rng.next_gaussian();
        }
        const RealVector pr = softmax(s);
        std::copy(pr.begin(), pr.end(), dists.row(j).begin());
    }

    for (LossKind kind : {LossKind::dpace, LossKind::dflash, LossKind::accept_rate,
                          LossKind::dpakl}) {
        LossConfig lcfg;
        lcfg.kind = kind;
        lcfg.alpha = 0.5;
        lcfg.gamma = 2.0;

        ForwardCache cache;
        const LogitBlock logits = drafter_forward(base, ctx, &cache);
        const LossResult res = compute_loss(logits, targets, &dists, lcfg);
        const std::vector<double> analytic = drafter_backward(base, cache, res.grad);
        const std::vector<double> w0 = res.weights;

        auto scalar = [&](const RealVector& theta) {
            DrafterParams probe = base;
            probe.theta = theta;
            const LogitBlock lb = drafter_forward(probe, ctx);
            switch (kind) {
                case LossKind::dpace:
                    return weighted_ce_value(lb, targets, w0);
                case LossKind::dpakl:
                    return weighted_soft_ce_value(lb, dists, w0);
                default:
                    return compute_loss(lb, targets, &dists, lcfg).loss;
            }
        };
        const RealVector fd = finite_diff_grad(scalar, base.theta, 1e-5);
        INFO("kind ", to_string(kind));
        CHECK(oracles::max_rel_err(analytic, fd) < 1e-4);
    }
}

TEST_CASE("train_step with zero lr leaves params unchanged but reports metrics") {
    const DrafterConfig c = tiny_config();
    DrafterParams p = drafter_init(c);
    const std::vector<double> before = p.theta;
    AdamWConfig ocfg;
    ocfg.lr = 0.0;
    ocfg.weight_decay = 0.0;
    AdamWState opt(p.size(), ocfg);

    std::vector<TrainingExample> batch(2);
    batch[0].context = {1, 2};
    batch[0].targets = {0, 3};
    batch[1].context = {0, 4};
    batch[1].targets = {2, 2};
    LossConfig lcfg;
    const StepMetrics m = train_step(p, opt, batch, lcfg);
    CHECK(p.theta == before);
    CHECK(m.loss > 0.0);
    CHECK(m.step == 1);
    CHECK(m.mean_q.size() == 2);
    CHECK(m.mean_weight.size() == 2);
    CHECK(m.grad_norm > 0.0);
}

TEST_CASE("train_step is bit-deterministic") {
    auto run = [] {
        const DrafterConfig c = tiny_config();
        DrafterParams p = drafter_init(c);
        AdamWState opt(p.size(), {});
        Rng rng(31);
        LossConfig lcfg;
        std::vector<double> losses;
        for (int s = 0; s < 10; ++s) {
            std::vector<TrainingExample> batch(4);
            for (auto& ex : batch) {
                ex.context = {rng.next_below(5), rng.next_below(5)};
                ex.targets = {rng.next_below(5), rng.next_below(5)};
            }
            losses.push_back(train_step(p, opt, batch, lcfg).loss);
        }
        return std::make_pair(p.theta, losses);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("train_step validates batch shape") {
    DrafterParams p = drafter_init(tiny_config());
    AdamWState opt(p.size(), {});
    LossConfig lcfg;
    std::vector<TrainingExample> batch;
    CHECK_THROWS_AS(train_step(p, opt, batch, lcfg), std::invalid_argument);
    batch.resize(3);
    for (auto& ex : batch) {
        ex.context = {0, 0};
        ex.targets = {0, 0};
    }
    TrainStepOptions opts;
    opts.accumulation = 2; // 3 % 2 != 0
    CHECK_THROWS_AS(train_step(p, opt, batch, lcfg, opts), std::invalid_argument);
}

TEST_CASE("drafter memorizes a deterministic cyclic language") {
    const TargetModel target = cycle_model();
    DrafterConfig c;
    c.vocab = 3;
    c.context = 2;
    c.embed = 4;
    c.hidden = 16;
    c.block = 3;
    c.seed = 5;
    DrafterParams p = drafter_init(c);
    AdamWConfig ocfg;
    ocfg.lr = 3e-3;
    AdamWState opt(p.size(), ocfg);
    DataStream stream(target, c.context, c.block, 17, 0.0, 7, false);
    LossConfig lcfg; // dpace defaults

    double first = 0.0, last = 0.0;
    for (int s = 0; s < 200; ++s) {
        std::vector<TrainingExample> batch(4);
        for (auto& ex : batch) {
            ex = stream.next();
        }
        const double loss = train_step(p, opt, batch, lcfg).loss;
        if (s == 0) {
            first = loss;
        }
        last = loss;
    }
    CHECK(last < 0.2 * first);
    CHECK(last < 0.1);
}

TEST_CASE("accumulation splits reproduce the same update direction") {
    const DrafterConfig c = tiny_config();
    Rng rng(37);
    std::vector<TrainingExample> batch(4);
    for (auto& ex : batch) {
        ex.context = {rng.next_below(5), rng.next_below(5)};
        ex.targets = {rng.next_below(5), rng.next_below(5)};
    }
    LossConfig lcfg;
    auto run = [&](int accum) {
        DrafterParams p = drafter_init(c);
        AdamWState opt(p.size(), {});
        TrainStepOptions opts;
        opts.accumulation = accum;
        train_step(p, opt, batch, lcfg, opts);
        return p.theta;
    };
    const auto flat = run(1);
    const auto split = run(2);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        CHECK(flat[i] == doctest::Approx(split[i]).epsilon(1e-9));
    }
}

TEST_CASE("checkpoint round trip") {
    const DrafterParams p = drafter_init(tiny_config());
    const std::string path =
        (std::filesystem::temp_directory_path() / "dpace_ckpt_test.json").string();
    save_drafter(p, path);
    const DrafterParams q = load_drafter(path);
    CHECK(q.theta == p.theta); // bit identical
    CHECK(q.cfg.vocab == p.cfg.vocab);
    CHECK(q.cfg.seed == p.cfg.seed);
    std::remove(path.c_str());
}

TEST_CASE("make_draft_fn pads short prefixes") {
    const DrafterConfig c = tiny_config();
    const DrafterParams p = drafter_init(c);
    const DraftFn fn = make_draft_fn(p);
    const LogitBlock from_fn = fn(std::vector<int>{4});
    const LogitBlock manual = drafter_forward(p, std::vector<int>{0, 4});
    CHECK(from_fn.a == manual.a);
}
