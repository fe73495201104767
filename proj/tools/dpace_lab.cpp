// dpace-lab: experiment runner for the acceptance-aware drafter losses.
// Subcommands: run, compare, sweep-alpha, sweep-block, correlate, gradcheck,
// simulate-bernoulli. Exit codes: 0 ok, 1 validation error, 2 check failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpace/csv.hpp"
#include "dpace/harness.hpp"
#include "dpace/weights.hpp"

namespace fs = std::filesystem;
using namespace dpace;

namespace {

fs::path default_out_root() {
    if (const char* env = std::getenv("DPACE_LAB_OUT")) {
        return fs::path(env);
    }
    return fs::path("out");
}

std::vector<LossKind> parse_kinds(const std::vector<std::string>& names) {
    std::vector<LossKind> kinds;
    for (const std::string& n : names) {
        kinds.push_back(loss_kind_from_string(n));
    }
    return kinds;
}

void print_aggregates(const std::string& label, const std::vector<TempAggregate>& aggs) {
    std::cout << label;
    for (const TempAggregate& a : aggs) {
        std::cout << "  T=" << format_double(a.temperature) << " tau=" << format_double(a.tau_mean)
                  << "+-" << format_double(a.tau_std);
    }
    std::cout << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"speculative-decoding drafter loss laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string loss_override;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_path, "experiment config JSON");
        if (needs_config) {
            c->required();
        }
        sub->add_option("--out", out_dir, "output directory (default $DPACE_LAB_OUT or ./out)");
    };

    // run
    auto* run_cmd = app.add_subcommand("run", "train and evaluate one configuration");
    add_common(run_cmd, true);
    run_cmd->add_option("--seed", seed, "single run seed (default: every seed in the config)")
        ->each([&](const std::string&) { seed_set = true; });
    run_cmd->add_option("--loss", loss_override, "override the configured loss kind");

    // compare
    auto* cmp_cmd = app.add_subcommand("compare", "train several loss kinds and tabulate final tau");
    add_common(cmp_cmd, true);
    std::vector<std::string> kind_names;
    cmp_cmd->add_option("--losses", kind_names, "loss kinds (default: dpace,dflash)")
        ->delimiter(',');
    cmp_cmd->add_option("--seeds", seeds, "run seeds (default: config seeds)")->delimiter(',');

    // sweep-alpha
    auto* alpha_cmd = app.add_subcommand("sweep-alpha", "dpace smoothing sweep");
    add_common(alpha_cmd, true);
    std::vector<double> alphas{0.0, 0.3, 0.5, 0.7, 0.9};
    alpha_cmd->add_option("--alphas", alphas, "alpha grid")->delimiter(',');
    alpha_cmd->add_option("--seeds", seeds, "run seeds (default: config seeds)")->delimiter(',');

    // sweep-block
    auto* block_cmd = app.add_subcommand("sweep-block", "block-size sensitivity sweep");
    add_common(block_cmd, true);
    std::vector<int> block_sizes{8, 12, 16};
    block_cmd->add_option("--blocks", block_sizes, "block sizes")->delimiter(',');
    block_cmd->add_option("--seeds", seeds, "run seeds (default: config seeds)")->delimiter(',');

    // correlate
    auto* corr_cmd = app.add_subcommand("correlate", "confidence-statistic vs tau correlations");
    std::vector<std::string> block_files;
    std::string blocks_dir;
    corr_cmd->add_option("--blocks", block_files, "block outcome CSV files")->delimiter(',');
    corr_cmd->add_option("--dir", blocks_dir, "directory scanned recursively for block CSVs");
    corr_cmd->add_option("--out", out_dir, "output directory");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    int trials = 100;
    std::uint64_t grad_seed = 12345;
    double corrupt = 1.0;
    std::vector<std::string> grad_kind_names;
    grad_cmd->add_option("--trials", trials, "instances per loss kind");
    grad_cmd->add_option("--seed", grad_seed, "instance seed");
    grad_cmd->add_option("--losses", grad_kind_names, "loss kinds (default: all)")->delimiter(',');
    grad_cmd->add_option("--corrupt", corrupt, "scale analytic gradients (self-test hook)");
    grad_cmd->add_option("--out", out_dir, "output directory");

    // simulate-bernoulli
    auto* sim_cmd = app.add_subcommand("simulate-bernoulli", "independent-acceptance simulation");
    int sim_blocks = 1000;
    int sim_block_size = 8;
    std::uint64_t sim_seed = 0;
    long long sim_trials = 100000;
    std::vector<double> sim_q;
    sim_cmd->add_option("--blocks", sim_blocks, "number of random blocks to simulate");
    sim_cmd->add_option("--block-size", sim_block_size, "positions per block");
    sim_cmd->add_option("--seed", sim_seed, "simulation seed");
    sim_cmd->add_option("--q", sim_q, "single confidence profile: report mean accepted length")
        ->delimiter(',');
    sim_cmd->add_option("--trials", sim_trials, "trials for the single-profile estimate");
    sim_cmd->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path out = out_dir.empty() ? default_out_root() : fs::path(out_dir);

        if (run_cmd->parsed()) {
            ExperimentConfig cfg = load_config(config_path);
            if (!loss_override.empty()) {
                cfg.loss.kind = loss_kind_from_string(loss_override);
            }
            std::vector<std::uint64_t> run_seeds =
                seed_set ? std::vector<std::uint64_t>{seed} : cfg.seeds;
            for (std::uint64_t s : run_seeds) {
                const fs::path run_dir = out / (std::string("run_") + to_string(cfg.loss.kind) +
                                                "_s" + std::to_string(s));
                const RunRecord rec = run_experiment(cfg, s, run_dir);
                const EvalSummary& e = rec.checkpoints.back().evals.front();
                std::cout << "seed " << s << ": final mean tau " << format_double(e.mean_tau)
                          << " at T=" << format_double(e.temperature) << " -> " << run_dir.string()
                          << "\n";
            }
            return 0;
        }

        if (cmp_cmd->parsed()) {
            const ExperimentConfig cfg = load_config(config_path);
            std::vector<LossKind> kinds = kind_names.empty()
                                              ? std::vector<LossKind>{LossKind::dpace, LossKind::dflash}
                                              : parse_kinds(kind_names);
            const auto& use_seeds = seeds.empty() ? cfg.seeds : seeds;
            const CompareReport rep = compare_losses(cfg, kinds, use_seeds, out);
            for (const CompareRow& row : rep.rows) {
                print_aggregates(row.loss_kind, row.by_temp);
            }
            return 0;
        }

        if (alpha_cmd->parsed()) {
            const ExperimentConfig cfg = load_config(config_path);
            const auto& use_seeds = seeds.empty() ? cfg.seeds : seeds;
            const AlphaSweepReport rep = sweep_alpha(cfg, alphas, use_seeds, out);
            for (const AlphaSweepRow& row : rep.rows) {
                print_aggregates("alpha=" + format_double(row.alpha) +
                                     (row.stall_flag ? " [stall]" : ""),
                                 row.by_temp);
            }
            return 0;
        }

        if (block_cmd->parsed()) {
            const ExperimentConfig cfg = load_config(config_path);
            const auto& use_seeds = seeds.empty() ? cfg.seeds : seeds;
            const BlockSweepReport rep = sweep_block(cfg, block_sizes, use_seeds, out);
            for (const BlockSweepRow& row : rep.rows) {
                std::cout << "B=" << row.block << " gamma=" << format_double(row.gamma);
                for (std::size_t ti = 0; ti < row.delta_tau_pct.size(); ++ti) {
                    std::cout << "  dtau%=" << format_double(row.delta_tau_pct[ti]);
                }
                std::cout << "\n";
            }
            return 0;
        }

        if (corr_cmd->parsed()) {
            std::vector<fs::path> files;
            for (const std::string& f : block_files) {
                files.emplace_back(f);
            }
            if (!blocks_dir.empty()) {
                for (const auto& entry : fs::recursive_directory_iterator(blocks_dir)) {
                    if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
                        entry.path().filename().string().rfind("step", 0) == 0) {
                        files.push_back(entry.path());
                    }
                }
                std::sort(files.begin(), files.end());
            }
            if (files.empty()) {
                std::cerr << "correlate: no block CSV files given\n";
                return 1;
            }
            const CorrelateReport rep = correlate_block_files(files);
            const auto j = correlate_report_to_json(rep);
            std::cout << j.dump(2) << "\n";
            fs::create_directories(out);
            write_text_file((out / "correlate.json").string(), j.dump(2) + "\n");
            return 0;
        }

        if (grad_cmd->parsed()) {
            const std::vector<LossKind> kinds =
                grad_kind_names.empty() ? all_loss_kinds() : parse_kinds(grad_kind_names);
            const GradcheckReport rep = run_gradcheck(kinds, trials, grad_seed, corrupt);
            for (const auto& pk : rep.kinds) {
                std::cout << (pk.pass ? "PASS " : "FAIL ") << pk.kind
                          << " max_rel_err=" << format_double(pk.max_rel_err) << "\n";
            }
            fs::create_directories(out);
            write_text_file((out / "gradcheck.json").string(),
                            gradcheck_report_to_json(rep).dump(2) + "\n");
            return rep.pass ? 0 : 2;
        }

        if (sim_cmd->parsed()) {
            if (!sim_q.empty()) {
                const MonteCarloEstimate est = bernoulli_accept_sim(sim_q, sim_trials, sim_seed);
                std::cout << "mean accepted " << format_double(est.mean) << " +- "
                          << format_double(est.std_error) << " (exact surrogate "
                          << format_double(surrogate_S(sim_q)) << ")\n";
                return 0;
            }
            BernoulliBlocksConfig bc;
            bc.blocks = sim_blocks;
            bc.block_size = sim_block_size;
            bc.seed = sim_seed;
            const std::vector<BlockOutcome> blocks = simulate_bernoulli_blocks(bc);
            fs::create_directories(out);
            const fs::path file = out / "bernoulli_blocks.csv";
            write_text_file(file.string(),
                            blocks_to_csv("bernoulli-s" + std::to_string(sim_seed), blocks));
            const CorrelateReport rep = correlate_block_files({file});
            std::cout << correlate_report_to_json(rep).dump(2) << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 1;
    } catch (const std::length_error& e) {
        std::cerr << "capacity error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
