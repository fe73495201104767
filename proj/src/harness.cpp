#include "dpace/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dpace/csv.hpp"
#include "dpace/numerics.hpp"
#include "dpace/weights.hpp"

namespace fs = std::filesystem;

namespace dpace {

namespace {

constexpr std::uint64_t kInitTag = 0x11;
constexpr std::uint64_t kDataTag = 0x22;
constexpr std::uint64_t kEvalTag = 0x33;

std::string temp_label(double t) {
    return format_double(t);
}

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) {
        acc += (x - m) * (x - m);
    }
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

// prompts are shared across runs and checkpoints of a config: seeded off the
// eval seed and the prompt index only
std::vector<int> make_prompt(const TargetModel& target, const EvalSpec& eval, int prompt_idx) {
    Rng rng(mix_seed(eval.seed, static_cast<std::uint64_t>(prompt_idx)));
    std::vector<int> prompt;
    prompt.reserve(eval.prompt_length);
    for (int i = 0; i < eval.prompt_length; ++i) {
        prompt.push_back(target_policy_token(target, prompt, 1.0, rng));
    }
    return prompt;
}

EvalSummary summarize_blocks(double temperature, std::span<const BlockOutcome> blocks) {
    EvalSummary s;
    s.temperature = temperature;
    std::vector<double> taus, surrs;
    for (const BlockOutcome& b : blocks) {
        if (b.truncated) {
            s.truncated_blocks += 1;
            continue;
        }
        s.blocks += 1;
        s.mean_tau += b.emitted;
        s.mean_accepted += b.accepted;
        s.mean_surrogate += b.surrogate;
        taus.push_back(static_cast<double>(b.emitted));
        surrs.push_back(b.surrogate);
    }
    if (s.blocks > 0) {
        s.mean_tau /= static_cast<double>(s.blocks);
        s.mean_accepted /= static_cast<double>(s.blocks);
        s.mean_surrogate /= static_cast<double>(s.blocks);
    }
    if (taus.size() >= 2) {
        try {
            s.spearman_surrogate_tau = spearman(surrs, taus).rho;
        } catch (const std::domain_error&) {
            // all-equal ranks; leave null
        }
    }
    return s;
}

nlohmann::ordered_json eval_to_json(const EvalSummary& e) {
    nlohmann::ordered_json j;
    j["temperature"] = e.temperature;
    j["mean_tau"] = e.mean_tau;
    j["mean_accepted"] = e.mean_accepted;
    j["mean_surrogate"] = e.mean_surrogate;
    if (e.spearman_surrogate_tau.has_value()) {
        j["spearman_surrogate_tau"] = *e.spearman_surrogate_tau;
    } else {
        j["spearman_surrogate_tau"] = nullptr;
    }
    j["blocks"] = e.blocks;
    j["truncated_blocks"] = e.truncated_blocks;
    return j;
}

EvalSummary eval_from_json(const nlohmann::json& j) {
    EvalSummary e;
    e.temperature = j.at("temperature").get<double>();
    e.mean_tau = j.at("mean_tau").get<double>();
    e.mean_accepted = j.at("mean_accepted").get<double>();
    e.mean_surrogate = j.at("mean_surrogate").get<double>();
    if (!j.at("spearman_surrogate_tau").is_null()) {
        e.spearman_surrogate_tau = j.at("spearman_surrogate_tau").get<double>();
    }
    e.blocks = j.at("blocks").get<std::size_t>();
    e.truncated_blocks = j.at("truncated_blocks").get<std::size_t>();
    return e;
}

} // namespace

nlohmann::ordered_json run_record_to_json(const RunRecord& rec) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["config_hash"] = rec.config_hash;
    j["loss_kind"] = rec.loss_kind;
    j["seed"] = rec.seed;
    j["steps"] = rec.steps;
    j["block"] = rec.block;
    j["checkpoints"] = nlohmann::ordered_json::array();
    for (const CheckpointRecord& c : rec.checkpoints) {
        nlohmann::ordered_json cj;
        cj["step"] = c.step;
        if (c.train_loss.has_value()) {
            cj["train_loss"] = *c.train_loss;
        } else {
            cj["train_loss"] = nullptr;
        }
        cj["evals"] = nlohmann::ordered_json::array();
        for (const EvalSummary& e : c.evals) {
            cj["evals"].push_back(eval_to_json(e));
        }
        j["checkpoints"].push_back(std::move(cj));
    }
    return j;
}

RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord rec;
    rec.config_hash = j.at("config_hash").get<std::string>();
    rec.loss_kind = j.at("loss_kind").get<std::string>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.steps = j.at("steps").get<long long>();
    rec.block = j.at("block").get<int>();
    for (const auto& cj : j.at("checkpoints")) {
        CheckpointRecord c;
        c.step = cj.at("step").get<long long>();
        if (!cj.at("train_loss").is_null()) {
            c.train_loss = cj.at("train_loss").get<double>();
        }
        for (const auto& ej : cj.at("evals")) {
            c.evals.push_back(eval_from_json(ej));
        }
        rec.checkpoints.push_back(std::move(c));
    }
    return rec;
}

std::string blocks_to_csv(const std::string& run_id, std::span<const BlockOutcome> blocks) {
    CsvTable t;
    const int b = blocks.empty() ? 0 : static_cast<int>(blocks[0].q.size());
    t.header = {"run_id", "block_index", "accepted", "emitted", "surrogate"};
    for (int i = 1; i <= b; ++i) {
        t.header.push_back("q_" + std::to_string(i));
    }
    t.header.push_back("truncated");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const BlockOutcome& o = blocks[i];
        std::vector<std::string> row{run_id, std::to_string(i), std::to_string(o.accepted),
                                     std::to_string(o.emitted), format_double(o.surrogate)};
        for (double q : o.q) {
            row.push_back(format_double(q));
        }
        row.push_back(o.truncated ? "1" : "0");
        t.rows.push_back(std::move(row));
    }
    return to_csv(t);
}

std::vector<BlockOutcome> read_blocks_csv(const fs::path& path) {
    const CsvTable t = parse_csv(read_text_file(path.string()));
    const int acc_col = t.column("accepted");
    const int emit_col = t.column("emitted");
    const int surr_col = t.column("surrogate");
    const int trunc_col = t.column("truncated");
    std::vector<int> q_cols;
    for (int i = 1;; ++i) {
        const std::string name = "q_" + std::to_string(i);
        bool found = false;
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            if (t.header[c] == name) {
                q_cols.push_back(static_cast<int>(c));
                found = true;
                break;
            }
        }
        if (!found) {
            break;
        }
    }
    std::vector<BlockOutcome> out;
    for (const auto& row : t.rows) {
        BlockOutcome o;
        o.accepted = static_cast<int>(parse_double(row[acc_col]));
        o.emitted = static_cast<int>(parse_double(row[emit_col]));
        o.surrogate = parse_double(row[surr_col]);
        o.truncated = row[trunc_col] == "1";
        for (int c : q_cols) {
            o.q.push_back(parse_double(row[c]));
        }
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<StepMetrics> read_step_metrics_csv(const fs::path& path) {
    const CsvTable t = parse_csv(read_text_file(path.string()));
    const int step_col = t.column("step");
    const int loss_col = t.column("loss");
    const int gn_col = t.column("grad_norm");
    std::vector<int> q_cols, w_cols;
    for (int i = 1;; ++i) {
        bool found = false;
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            if (t.header[c] == "q_" + std::to_string(i)) {
                q_cols.push_back(static_cast<int>(c));
                found = true;
            } else if (t.header[c] == "w_" + std::to_string(i)) {
                w_cols.push_back(static_cast<int>(c));
                found = true;
            }
        }
        if (!found) {
            break;
        }
    }
    std::vector<StepMetrics> out;
    for (const auto& row : t.rows) {
        StepMetrics m;
        m.step = static_cast<long long>(parse_double(row[step_col]));
        m.loss = parse_double(row[loss_col]);
        m.grad_norm = parse_double(row[gn_col]);
        for (int c : q_cols) {
            m.mean_q.push_back(parse_double(row[c]));
        }
        for (int c : w_cols) {
            m.mean_weight.push_back(parse_double(row[c]));
        }
        out.push_back(std::move(m));
    }
    return out;
}

RunRecord run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& out_dir,
                         const TargetModel* shared_target) {
    cfg.validate();
    fs::create_directories(out_dir / "blocks");

    TargetModel local_target;
    const TargetModel* target = shared_target;
    if (target != nullptr) {
        if (target->vocab != cfg.target.vocab || target->order != cfg.target.order ||
            target->concentration != cfg.target.concentration || target->seed != cfg.target.seed) {
            throw std::invalid_argument("run_experiment: shared target does not match config");
        }
    } else {
        local_target = sample_target_model(cfg.target.vocab, cfg.target.order,
                                           cfg.target.concentration, cfg.target.seed);
        target = &local_target;
    }

    DrafterConfig dc;
    dc.vocab = cfg.target.vocab;
    dc.context = cfg.drafter.context;
    dc.embed = cfg.drafter.embed;
    dc.hidden = cfg.drafter.hidden;
    dc.block = cfg.block;
    dc.seed = mix_seed(cfg.drafter.seed, mix_seed(seed, kInitTag));
    DrafterParams params = drafter_init(dc);

    AdamWConfig ocfg;
    ocfg.lr = cfg.training.lr;
    AdamWState opt(params.size(), ocfg);

    const bool needs_dists = loss_needs_target_dists(cfg.loss.kind);
    DataStream stream(*target, dc.context, dc.block, cfg.training.data.sequence_length,
                      cfg.training.data.temperature,
                      mix_seed(cfg.training.data.seed, mix_seed(seed, kDataTag)), needs_dists);

    TrainStepOptions topts;
    topts.clip_norm = cfg.training.clip_norm;
    topts.accumulation = cfg.training.accumulation;

    RunRecord rec;
    rec.config_hash = config_hash(cfg);
    rec.loss_kind = to_string(cfg.loss.kind);
    rec.seed = seed;
    rec.steps = cfg.training.steps;
    rec.block = cfg.block;

    CsvTable steps_csv;
    steps_csv.header = {"step", "loss", "lr", "grad_norm"};
    for (int i = 1; i <= cfg.block; ++i) {
        steps_csv.header.push_back("q_" + std::to_string(i));
    }
    for (int i = 1; i <= cfg.block; ++i) {
        steps_csv.header.push_back("w_" + std::to_string(i));
    }

    auto run_eval = [&](long long step, std::optional<double> train_loss) {
        CheckpointRecord ck;
        ck.step = step;
        ck.train_loss = train_loss;
        const DraftFn draft = make_draft_fn(params);
        for (std::size_t ti = 0; ti < cfg.eval.temperatures.size(); ++ti) {
            const double temp = cfg.eval.temperatures[ti];
            std::vector<BlockOutcome> blocks;
            for (int p = 0; p < cfg.eval.prompts; ++p) {
                const std::vector<int> prompt = make_prompt(*target, cfg.eval, p);
                DecodeConfig dcfg;
                dcfg.temperature = temp;
                dcfg.block = cfg.block;
                dcfg.max_new_tokens = cfg.eval.max_new_tokens;
                dcfg.seed = mix_seed(mix_seed(cfg.eval.seed, mix_seed(seed, kEvalTag)),
                                     mix_seed(static_cast<std::uint64_t>(step),
                                              (ti << 32) ^ static_cast<std::uint64_t>(p)));
                DecodeResult res = decode_speculative(*target, draft, prompt, dcfg);
                blocks.insert(blocks.end(), res.blocks.begin(), res.blocks.end());
            }
            const std::string run_id = rec.loss_kind + "-s" + std::to_string(seed) + "-step" +
                                       std::to_string(step) + "-T" + temp_label(temp);
            write_text_file((out_dir / "blocks" /
                             ("step" + std::to_string(step) + "_T" + temp_label(temp) + ".csv"))
                                .string(),
                            blocks_to_csv(run_id, blocks));
            ck.evals.push_back(summarize_blocks(temp, blocks));
        }
        rec.checkpoints.push_back(std::move(ck));
    };

    run_eval(0, std::nullopt);

    const long long steps = cfg.training.steps;
    const long long eval_every = std::max<long long>(1, steps / 10);
    double loss_since_eval = 0.0;
    long long steps_since_eval = 0;
    std::vector<TrainingExample> batch(cfg.training.batch);
    for (long long s = 1; s <= steps; ++s) {
        for (int i = 0; i < cfg.training.batch; ++i) {
            batch[i] = stream.next();
        }
        // lr schedule: optional linear warmup then optional cosine decay
        double lr = cfg.training.lr;
        if (cfg.training.warmup_steps > 0 && s <= cfg.training.warmup_steps) {
            lr *= static_cast<double>(s) / static_cast<double>(cfg.training.warmup_steps);
        } else if (cfg.training.cosine_decay && steps > cfg.training.warmup_steps) {
            const double prog = static_cast<double>(s - cfg.training.warmup_steps) /
                                static_cast<double>(steps - cfg.training.warmup_steps);
            lr *= 0.5 * (1.0 + std::cos(3.14159265358979323846 * prog));
        }
        opt.cfg.lr = lr;
        const StepMetrics m = train_step(params, opt, batch, cfg.loss, topts);
        loss_since_eval += m.loss;
        steps_since_eval += 1;

        std::vector<std::string> row{std::to_string(s), format_double(m.loss), format_double(lr),
                                     format_double(m.grad_norm)};
        for (double q : m.mean_q) {
            row.push_back(format_double(q));
        }
        for (double w : m.mean_weight) {
            row.push_back(format_double(w));
        }
        steps_csv.rows.push_back(std::move(row));

        if (s % eval_every == 0 || s == steps) {
            run_eval(s, loss_since_eval / static_cast<double>(steps_since_eval));
            loss_since_eval = 0.0;
            steps_since_eval = 0;
        }
    }

    write_text_file((out_dir / "steps.csv").string(), to_csv(steps_csv));
    save_drafter(params, (out_dir / "drafter.json").string());
    write_text_file((out_dir / "record.json").string(), run_record_to_json(rec).dump(2) + "\n");
    return rec;
}

namespace {

// aggregate final-checkpoint evals across seeds
std::vector<TempAggregate> aggregate_finals(const std::vector<RunRecord>& runs) {
    std::vector<TempAggregate> out;
    if (runs.empty()) {
        return out;
    }
    const std::size_t temps = runs[0].checkpoints.back().evals.size();
    for (std::size_t ti = 0; ti < temps; ++ti) {
        TempAggregate agg;
        agg.temperature = runs[0].checkpoints.back().evals[ti].temperature;
        std::vector<double> taus, accs;
        for (const RunRecord& r : runs) {
            const EvalSummary& e = r.checkpoints.back().evals[ti];
            taus.push_back(e.mean_tau);
            accs.push_back(e.mean_accepted);
        }
        agg.tau_mean = mean_of(taus);
        agg.tau_std = sample_std(taus);
        agg.accepted_mean = mean_of(accs);
        agg.accepted_std = sample_std(accs);
        out.push_back(agg);
    }
    return out;
}

nlohmann::ordered_json aggregate_to_json(const std::vector<TempAggregate>& aggs) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const TempAggregate& a : aggs) {
        arr.push_back({{"temperature", a.temperature},
                       {"tau_mean", a.tau_mean},
                       {"tau_std", a.tau_std},
                       {"accepted_mean", a.accepted_mean},
                       {"accepted_std", a.accepted_std}});
    }
    return arr;
}

void append_aggregate_headers(std::vector<std::string>& header,
                              const std::vector<double>& temps, const std::string& suffix) {
    for (double t : temps) {
        const std::string tag = (suffix.empty() ? "" : "_" + suffix) + "_T" + temp_label(t);
        header.push_back("tau_mean" + tag);
        header.push_back("tau_std" + tag);
        header.push_back("accepted_mean" + tag);
        header.push_back("accepted_std" + tag);
    }
}

void append_aggregate_cells(std::vector<std::string>& row, const std::vector<TempAggregate>& aggs) {
    for (const TempAggregate& a : aggs) {
        row.push_back(format_double(a.tau_mean));
        row.push_back(format_double(a.tau_std));
        row.push_back(format_double(a.accepted_mean));
        row.push_back(format_double(a.accepted_std));
    }
}

} // namespace

CompareReport compare_losses(const ExperimentConfig& base, const std::vector<LossKind>& kinds,
                             const std::vector<std::uint64_t>& seeds, const fs::path& out_dir) {
    if (kinds.empty() || seeds.empty()) {
        throw std::invalid_argument("compare_losses: need at least one kind and one seed");
    }
    const TargetModel target = sample_target_model(base.target.vocab, base.target.order,
                                                   base.target.concentration, base.target.seed);
    CompareReport rep;
    rep.seeds = seeds;
    for (LossKind kind : kinds) {
        ExperimentConfig cfg = base;
        cfg.loss.kind = kind;
        std::vector<RunRecord> runs;
        for (std::uint64_t seed : seeds) {
            const fs::path run_dir =
                out_dir / (std::string("run_") + to_string(kind) + "_s" + std::to_string(seed));
            runs.push_back(run_experiment(cfg, seed, run_dir, &target));
        }
        CompareRow row;
        row.loss_kind = to_string(kind);
        row.by_temp = aggregate_finals(runs);
        rep.rows.push_back(std::move(row));
    }

    CsvTable csv;
    csv.header = {"loss", "n_seeds"};
    append_aggregate_headers(csv.header, base.eval.temperatures, "");
    for (const CompareRow& row : rep.rows) {
        std::vector<std::string> cells{row.loss_kind, std::to_string(seeds.size())};
        append_aggregate_cells(cells, row.by_temp);
        csv.rows.push_back(std::move(cells));
    }
    fs::create_directories(out_dir);
    write_text_file((out_dir / "compare.csv").string(), to_csv(csv));

    nlohmann::ordered_json j;
    j["seeds"] = seeds;
    j["rows"] = nlohmann::ordered_json::array();
    for (const CompareRow& row : rep.rows) {
        j["rows"].push_back({{"loss", row.loss_kind}, {"by_temp", aggregate_to_json(row.by_temp)}});
    }
    write_text_file((out_dir / "compare.json").string(), j.dump(2) + "\n");
    return rep;
}

AlphaSweepReport sweep_alpha(const ExperimentConfig& base, const std::vector<double>& alphas,
                             const std::vector<std::uint64_t>& seeds, const fs::path& out_dir) {
    if (alphas.empty() || seeds.empty()) {
        throw std::invalid_argument("sweep_alpha: need at least one alpha and one seed");
    }
    const TargetModel target = sample_target_model(base.target.vocab, base.target.order,
                                                   base.target.concentration, base.target.seed);
    AlphaSweepReport rep;
    rep.seeds = seeds;
    for (double alpha : alphas) {
        ExperimentConfig cfg = base;
        cfg.loss.kind = LossKind::dpace;
        cfg.loss.alpha = alpha;
        std::vector<RunRecord> runs;
        for (std::uint64_t seed : seeds) {
            const fs::path run_dir = out_dir / ("alpha" + format_double(alpha)) /
                                     ("run_dpace_s" + std::to_string(seed));
            runs.push_back(run_experiment(cfg, seed, run_dir, &target));
        }
        AlphaSweepRow row;
        row.alpha = alpha;
        row.by_temp = aggregate_finals(runs);
        row.stall_flag = !row.by_temp.empty() && row.by_temp.front().tau_mean < 1.2;
        rep.rows.push_back(std::move(row));
    }

    CsvTable csv;
    csv.header = {"alpha", "n_seeds"};
    append_aggregate_headers(csv.header, base.eval.temperatures, "");
    csv.header.push_back("stall_flag");
    for (const AlphaSweepRow& row : rep.rows) {
        std::vector<std::string> cells{format_double(row.alpha), std::to_string(seeds.size())};
        append_aggregate_cells(cells, row.by_temp);
        cells.push_back(row.stall_flag ? "1" : "0");
        csv.rows.push_back(std::move(cells));
    }
    fs::create_directories(out_dir);
    write_text_file((out_dir / "sweep_alpha.csv").string(), to_csv(csv));

    nlohmann::ordered_json j;
    j["seeds"] = seeds;
    j["rows"] = nlohmann::ordered_json::array();
    for (const AlphaSweepRow& row : rep.rows) {
        j["rows"].push_back({{"alpha", row.alpha},
                             {"by_temp", aggregate_to_json(row.by_temp)},
                             {"stall_flag", row.stall_flag}});
    }
    write_text_file((out_dir / "sweep_alpha.json").string(), j.dump(2) + "\n");
    return rep;
}

BlockSweepReport sweep_block(const ExperimentConfig& base, const std::vector<int>& blocks,
                             const std::vector<std::uint64_t>& seeds, const fs::path& out_dir) {
    if (blocks.empty() || seeds.empty()) {
        throw std::invalid_argument("sweep_block: need at least one block size and one seed");
    }
    const TargetModel target = sample_target_model(base.target.vocab, base.target.order,
                                                   base.target.concentration, base.target.seed);
    BlockSweepReport rep;
    rep.seeds = seeds;
    for (int b : blocks) {
        BlockSweepRow row;
        row.block = b;
        row.gamma = gamma_for_block(b);
        for (LossKind kind : {LossKind::dflash, LossKind::dpace}) {
            ExperimentConfig cfg = base;
            cfg.block = b;
            cfg.loss.kind = kind;
            cfg.loss.gamma = row.gamma;
            cfg.training.data.sequence_length =
                std::max(cfg.training.data.sequence_length, cfg.drafter.context + b);
            std::vector<RunRecord> runs;
            for (std::uint64_t seed : seeds) {
                const fs::path run_dir = out_dir / ("B" + std::to_string(b)) /
                                         (std::string("run_") + to_string(kind) + "_s" +
                                          std::to_string(seed));
                runs.push_back(run_experiment(cfg, seed, run_dir, &target));
            }
            if (kind == LossKind::dflash) {
                row.dflash = aggregate_finals(runs);
            } else {
                row.dpace = aggregate_finals(runs);
            }
        }
        for (std::size_t ti = 0; ti < row.dflash.size(); ++ti) {
            row.delta_tau_pct.push_back(100.0 * (row.dpace[ti].tau_mean - row.dflash[ti].tau_mean) /
                                        row.dflash[ti].tau_mean);
            row.delta_accepted_pct.push_back(
                row.dflash[ti].accepted_mean != 0.0
                    ? 100.0 * (row.dpace[ti].accepted_mean - row.dflash[ti].accepted_mean) /
                          row.dflash[ti].accepted_mean
                    : 0.0);
        }
        rep.rows.push_back(std::move(row));
    }

    CsvTable csv;
    csv.header = {"block", "gamma", "n_seeds"};
    append_aggregate_headers(csv.header, base.eval.temperatures, "dflash");
    append_aggregate_headers(csv.header, base.eval.temperatures, "dpace");
    for (double t : base.eval.temperatures) {
        csv.header.push_back("delta_tau_pct_T" + temp_label(t));
    }
    for (const BlockSweepRow& row : rep.rows) {
        std::vector<std::string> cells{std::to_string(row.block), format_double(row.gamma),
                                       std::to_string(seeds.size())};
        append_aggregate_cells(cells, row.dflash);
        append_aggregate_cells(cells, row.dpace);
        for (double d : row.delta_tau_pct) {
            cells.push_back(format_double(d));
        }
        csv.rows.push_back(std::move(cells));
    }
    fs::create_directories(out_dir);
    write_text_file((out_dir / "sweep_block.csv").string(), to_csv(csv));

    nlohmann::ordered_json j;
    j["seeds"] = seeds;
    j["rows"] = nlohmann::ordered_json::array();
    for (const BlockSweepRow& row : rep.rows) {
        j["rows"].push_back({{"block", row.block},
                             {"gamma", row.gamma},
                             {"dflash", aggregate_to_json(row.dflash)},
                             {"dpace", aggregate_to_json(row.dpace)},
                             {"delta_tau_pct", row.delta_tau_pct},
                             {"delta_accepted_pct", row.delta_accepted_pct}});
    }
    write_text_file((out_dir / "sweep_block.json").string(), j.dump(2) + "\n");
    return rep;
}

CorrelateReport correlate_block_files(const std::vector<fs::path>& files) {
    std::vector<BlockOutcome> blocks;
    for (const fs::path& f : files) {
        std::vector<BlockOutcome> part = read_blocks_csv(f);
        blocks.insert(blocks.end(), std::make_move_iterator(part.begin()),
                      std::make_move_iterator(part.end()));
    }
    const StatisticCorrelations c = compare_statistics(blocks);
    CorrelateReport rep;
    rep.sum_q = c.sum_q;
    rep.surrogate = c.surrogate;
    rep.n_blocks = c.sum_q.n;
    return rep;
}

nlohmann::ordered_json correlate_report_to_json(const CorrelateReport& rep) {
    nlohmann::ordered_json j;
    j["n_blocks"] = rep.n_blocks;
    j["spearman"] = {{"sum_q", rep.sum_q.rho}, {"surrogate", rep.surrogate.rho}};
    j["p_value"] = {{"sum_q", rep.sum_q.p_value}, {"surrogate", rep.surrogate.p_value}};
    // published large-scale reference correlations; annotation only, desk-scale
    // numbers are not comparable
    j["reference"] = {{"sum_q", 0.79}, {"surrogate", 0.84}, {"note", "annotation only"}};
    return j;
}

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

TargetDistBlock random_dists(Rng& rng, int b, int v) {
    TargetDistBlock d(b, v);
    RealVector scores(v);
    for (int j = 0; j < b; ++j) {
        for (int i = 0; i < v; ++i) {
            scores[i] = rng.next_gaussian();
        }
        const RealVector probs = softmax(scores);
        std::copy(probs.begin(), probs.end(), d.row(j).begin());
    }
    return d;
}

} // namespace

GradcheckReport run_gradcheck(const std::vector<LossKind>& kinds, int trials, std::uint64_t seed,
                              double corrupt_scale) {
    if (trials < 1) {
        throw std::invalid_argument("run_gradcheck: trials must be >= 1");
    }
    GradcheckReport rep;
    for (LossKind kind : kinds) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(kind)));
        GradcheckReport::PerKind pk;
        pk.kind = to_string(kind);
        pk.trials = trials;
        for (int t = 0; t < trials; ++t) {
            const int B = 1 + rng.next_below(6);
            const int V = 2 + rng.next_below(7);
            LogitBlock logits(B, V);
            for (double& x : logits.a) {
                x = rng.next_uniform(-3.0, 3.0);
            }
            TargetTokens targets(B);
            for (int& z : targets) {
                z = rng.next_below(V);
            }
            LossConfig cfg;
            cfg.kind = kind;
            cfg.alpha = rng.next_double();
            cfg.gamma = rng.next_uniform(0.5, 8.0);
            cfg.top_k = 1 + rng.next_below(V);
            TargetDistBlock dists = random_dists(rng, B, V);

            const LossResult res = compute_loss(logits, targets, &dists, cfg);

            // the scalar being differenced: detached-weight losses hold their
            // weights fixed at the base point, exactly as the loss defines them
            std::function<double(const RealVector&)> f;
            const std::vector<double> w0 = res.weights;
            switch (kind) {
                case LossKind::dpace:
                case LossKind::cumulative_only:
                case LossKind::continuation_only:
                case LossKind::target_prob:
                    f = [&](const RealVector& x) {
                        LogitBlock lb(B, V);
                        lb.a = x;
                        return weighted_ce_value(lb, targets, w0);
                    };
                    break;
                case LossKind::dpakl:
                    f = [&](const RealVector& x) {
                        LogitBlock lb(B, V);
                        lb.a = x;
                        return weighted_soft_ce_value(lb, dists, w0);
                    };
                    break;
                default: // fixed-coefficient and fully-coupled losses: recompute
                    f = [&](const RealVector& x) {
                        LogitBlock lb(B, V);
                        lb.a = x;
                        return compute_loss(lb, targets, &dists, cfg).loss;
                    };
                    break;
            }
            const RealVector fd = finite_diff_grad(f, logits.a, 1e-6);
            for (std::size_t i = 0; i < fd.size(); ++i) {
                pk.max_rel_err = std::max(pk.max_rel_err, rel_err(corrupt_scale * res.grad[i], fd[i]));
            }
        }
        pk.pass = pk.max_rel_err < rep.tolerance;
        rep.kinds.push_back(std::move(pk));
    }
    rep.pass = std::all_of(rep.kinds.begin(), rep.kinds.end(),
                           [](const auto& pk) { return pk.pass; });
    return rep;
}

nlohmann::ordered_json gradcheck_report_to_json(const GradcheckReport& rep) {
    nlohmann::ordered_json j;
    j["h"] = rep.h;
    j["tolerance"] = rep.tolerance;
    j["pass"] = rep.pass;
    j["kinds"] = nlohmann::ordered_json::array();
    for (const auto& pk : rep.kinds) {
        j["kinds"].push_back({{"kind", pk.kind},
                              {"trials", pk.trials},
                              {"max_rel_err", pk.max_rel_err},
                              {"pass", pk.pass}});
    }
    return j;
}

std::vector<BlockOutcome> simulate_bernoulli_blocks(const BernoulliBlocksConfig& cfg) {
    if (cfg.blocks < 1 || cfg.block_size < 1) {
        throw std::invalid_argument("simulate_bernoulli_blocks: counts must be >= 1");
    }
    Rng rng(cfg.seed);
    std::vector<BlockOutcome> out;
    out.reserve(cfg.blocks);
    for (int b = 0; b < cfg.blocks; ++b) {
        BlockOutcome o;
        o.q.resize(cfg.block_size);
        const double base = rng.next_uniform(0.15, 0.95); // heterogeneous profiles
        for (double& q : o.q) {
            q = std::clamp(base + rng.next_uniform(-0.15, 0.15), 0.02, 0.99);
        }
        int x = 0;
        for (double q : o.q) {
            if (!rng.next_bernoulli(q)) {
                break;
            }
            ++x;
        }
        o.accepted = x;
        o.emitted = x + 1;
        o.surrogate = surrogate_S(o.q);
        out.push_back(std::move(o));
    }
    return out;
}

} // namespace dpace
