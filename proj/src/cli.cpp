#include "stirk/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stirk/baselines.hpp"
#include "stirk/config.hpp"
#include "stirk/dynamics.hpp"
#include "stirk/errors.hpp"
#include "stirk/experiments.hpp"
#include "stirk/io.hpp"
#include "stirk/iterative.hpp"
#include "stirk/koopman.hpp"
#include "stirk/lifting.hpp"
#include "stirk/mpc.hpp"
#include "stirk/training.hpp"
#include "stirk/util.hpp"

namespace fs = std::filesystem;

namespace stirk {

namespace {

struct CommandArgs {
    std::string config_path;
    std::string out_override;
    int workers = 1;
    bool force = false;
};

Protocol protocol_with_overrides(const ExperimentConfig& cfg) {
    Protocol proto = protocol_for(cfg.task);
    if (cfg.steps_override) proto.steps = *cfg.steps_override;
    if (cfg.trajectories_override) {
        proto.train_trajectories = *cfg.trajectories_override;
        if (proto.val_trajectories >= proto.train_trajectories)
            proto.val_trajectories = std::max(0, proto.train_trajectories - 1);
    }
    return proto;
}

// Per-cell child-seed streams: each (noise, seed) cell derives its own seeds
// from the master so parallel and serial runs agree.
std::uint64_t cell_train_seed(std::uint64_t master, int noise_index, int seed_index) {
    return Rng(master).child(7000 + 100 * static_cast<std::uint64_t>(noise_index) +
                             static_cast<std::uint64_t>(seed_index)).state();
}

Rng cell_dict_rng(std::uint64_t master, int noise_index, int seed_index) {
    return Rng(master).child(8000 + 100 * static_cast<std::uint64_t>(noise_index) +
                             static_cast<std::uint64_t>(seed_index));
}

Dictionary make_dictionary(const ExperimentConfig& cfg, const Protocol& proto, const Cell& cell,
                           int noise_index) {
    if (cfg.dict_kind == "polyflow")
        return Dictionary::polyflow(proto.system, cfg.train.polyflow_order);
    if (cfg.dict_kind == "rbf") {
        Rng rng = cell_dict_rng(cfg.seed, noise_index, cell.seed_index);
        return rbf_from_data(cell.train, cfg.rbf_centers, rng);
    }
    return Dictionary::identity(proto.system.n);
}

std::string cell_dir(int noise_index, int seed_index) {
    return "noise_" + std::to_string(noise_index) + "/seed_" + std::to_string(seed_index);
}

void cmd_generate(const ExperimentConfig& cfg, const fs::path& out, int workers) {
    const Protocol proto = protocol_with_overrides(cfg);
    const std::string hash = experiment_config_hash(cfg);

    const int cells = static_cast<int>(cfg.noise_indices.size() * cfg.seed_indices.size());
    parallel_for(cells, workers, [&](int i) {
        const int ni = cfg.noise_indices[static_cast<std::size_t>(i) / cfg.seed_indices.size()];
        const int si = cfg.seed_indices[static_cast<std::size_t>(i) % cfg.seed_indices.size()];
        const Cell cell = build_cell(proto, noise_levels()[static_cast<std::size_t>(ni)], si,
                                     cfg.seed);
        const fs::path dir = out / cell_dir(ni, si);
        fs::create_directories(dir);
        for (std::size_t k = 0; k < cell.train.size(); ++k)
            write_trajectory(cell.train[k], proto.system,
                             (dir / ("traj_" + std::to_string(k) + ".csv")).string(), hash);
    });

    // Shared clean test set, written once.
    const Cell cell = build_cell(proto, 0.0, cfg.seed_indices.front(), cfg.seed);
    const fs::path test_dir = out / "test";
    fs::create_directories(test_dir);
    for (std::size_t t = 0; t < cell.test.size(); ++t)
        write_trajectory(cell.test[t], proto.system,
                         (test_dir / ("traj_" + std::to_string(t) + ".csv")).string(), hash);
}

void cmd_train(const ExperimentConfig& cfg, const fs::path& out, int workers) {
    const Protocol proto = protocol_with_overrides(cfg);
    const std::string hash = experiment_config_hash(cfg);

    const int n_noise = static_cast<int>(cfg.noise_indices.size());
    const int n_seeds = static_cast<int>(cfg.seed_indices.size());
    struct CellSummary {
        int ni = 0, si = 0;
        double train_error = 0.0, test_error = 0.0, wall_time_s = 0.0;
        bool aborted = false;
    };
    std::vector<CellSummary> summaries(static_cast<std::size_t>(n_noise * n_seeds));

    parallel_for(n_noise * n_seeds, workers, [&](int i) {
        const int ni = cfg.noise_indices[static_cast<std::size_t>(i / n_seeds)];
        const int si = cfg.seed_indices[static_cast<std::size_t>(i % n_seeds)];
        const Cell cell = build_cell(proto, noise_levels()[static_cast<std::size_t>(ni)], si,
                                     cfg.seed);
        TrainConfig tc = cfg.train;
        tc.seed = cell_train_seed(cfg.seed, ni, si);
        const Dictionary dict = make_dictionary(cfg, proto, cell, ni);
        TrainedCell trained = train_cell(proto, cell, tc, dict);
        trained.model.provenance.config_hash = hash;

        const fs::path dir = out / cell_dir(ni, si);
        fs::create_directories(dir);
        save_model(trained.model, (dir / "model.json").string());
        write_history_csv(trained.history, (dir / "history.csv").string(), hash, cfg.seed);
        summaries[static_cast<std::size_t>(i)] = {ni, si, trained.train_error,
                                                  trained.test_error, trained.wall_time_s,
                                                  trained.history.aborted};
    });

    std::ofstream sum(out / "summary.csv");
    if (!sum) throw Error("cannot open summary.csv for writing");
    sum << "# config_hash=" << hash << " seed=" << cfg.seed << "\n";
    sum << "noise_index,noise,seed_index,train_error,test_error,wall_time_s,aborted\n";
    for (const auto& s : summaries)
        sum << s.ni << ',' << format_double(noise_levels()[static_cast<std::size_t>(s.ni)])
            << ',' << s.si << ',' << format_double(s.train_error) << ','
            << format_double(s.test_error) << ',' << format_double(s.wall_time_s) << ','
            << (s.aborted ? 1 : 0) << '\n';
}

// Zero input effect: DMD ignores u, so its rollout needs an all-zero B of
// the data's input width.
KoopmanModel pad_input_matrix(KoopmanModel model, int m) {
    if (model.B.cols() == 0 && m > 0) model.B = Mat::Zero(model.A.rows(), m);
    return model;
}

void cmd_evaluate(const ExperimentConfig& cfg, const fs::path& out, int workers) {
    const Protocol proto = protocol_with_overrides(cfg);
    const std::string hash = experiment_config_hash(cfg);
    const double dt = proto.system.dt;

    const int n_noise = static_cast<int>(cfg.noise_indices.size());
    const int n_seeds = static_cast<int>(cfg.seed_indices.size());
    const int n_methods = static_cast<int>(cfg.eval_methods.size());

    std::vector<std::vector<ResultRow>> per_cell(static_cast<std::size_t>(n_noise * n_seeds));
    parallel_for(n_noise * n_seeds, workers, [&](int i) {
        const int ni = cfg.noise_indices[static_cast<std::size_t>(i / n_seeds)];
        const int si = cfg.seed_indices[static_cast<std::size_t>(i % n_seeds)];
        const double sigma = noise_levels()[static_cast<std::size_t>(ni)];
        const Cell cell = build_cell(proto, sigma, si, cfg.seed);
        auto& rows = per_cell[static_cast<std::size_t>(i)];

        auto push = [&](const std::string& method, const std::string& dictionary,
                        const KoopmanModel& model) {
            // fits use the noisy recordings, errors the clean ground truth
            const double tr = evaluate_baseline(model, cell.clean).mean;
            const double te = evaluate_baseline(model, cell.test).mean;
            rows.push_back({method, dictionary, sigma, si, "train", tr});
            rows.push_back({method, dictionary, sigma, si, "test", te});
        };

        for (const std::string& method : cfg.eval_methods) {
            if (method == "edmd-polyflow") {
                const Dictionary dict =
                    Dictionary::polyflow(proto.system, cfg.train.polyflow_order);
                const auto fit = edmd_fit(build_snapshot_pairs(cell.train, dict));
                push(method, "polyflow", baseline_model(fit, dict, dt));
            } else if (method == "edmd-rbf") {
                Rng rng = cell_dict_rng(cfg.seed, ni, si);
                const Dictionary dict = rbf_from_data(cell.train, cfg.rbf_centers, rng);
                const auto fit = edmd_fit(build_snapshot_pairs(cell.train, dict));
                push(method, "rbf", baseline_model(fit, dict, dt));
            } else if (method == "dmd") {
                const Dictionary dict = Dictionary::identity(proto.system.n);
                const auto fit = dmd_fit(build_snapshot_pairs(cell.train, dict));
                push(method, "state",
                     pad_input_matrix(baseline_model(fit, dict, dt), proto.system.m));
            } else {
                // Trained models are read from a previous `train` run.
                const fs::path model_path =
                    fs::path(cfg.models_dir) / cell_dir(ni, si) / "model.json";
                if (cfg.models_dir.empty() || !fs::exists(model_path))
                    throw Error("evaluate: missing model file " + model_path.string() +
                                " for method " + method);
                push(method, "polyflow", load_model(model_path.string()));
            }
        }
    });

    std::vector<ResultRow> rows;
    for (const auto& cell_rows : per_cell)
        rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
    write_results_csv(rows, (out / "results.csv").string(), hash, cfg.seed);

    // Seed-averaged summary, one row per (method, noise, split).
    std::ofstream sum(out / "summary.csv");
    if (!sum) throw Error("cannot open summary.csv for writing");
    sum << "# config_hash=" << hash << " seed=" << cfg.seed << "\n";
    sum << "method,noise,split,mean_normalized_error,seeds\n";
    for (int mi = 0; mi < n_methods; ++mi)
        for (int nz = 0; nz < n_noise; ++nz)
            for (const std::string split : {"train", "test"}) {
                const std::string& method = cfg.eval_methods[static_cast<std::size_t>(mi)];
                const double sigma =
                    noise_levels()[static_cast<std::size_t>(
                        cfg.noise_indices[static_cast<std::size_t>(nz)])];
                double total = 0.0;
                int count = 0;
                for (const auto& r : rows)
                    if (r.method == method && r.noise == sigma && r.split == split) {
                        total += r.normalized_error;
                        ++count;
                    }
                sum << method << ',' << format_double(sigma) << ',' << split << ','
                    << format_double(count > 0 ? total / count : 0.0) << ',' << count << '\n';
            }
}

void cmd_mpc(const ExperimentConfig& cfg, const fs::path& out, int workers) {
    if (cfg.mpc_model.empty()) throw ConfigError("mpc.model", "is required for the mpc command");
    const Protocol proto = protocol_with_overrides(cfg);
    const std::string hash = experiment_config_hash(cfg);
    const KoopmanModel model = load_model(cfg.mpc_model);

    MPCProblem problem;
    problem.A = model.A;
    problem.B = model.B;
    problem.C = model.C;
    problem.N_p = cfg.mpc_horizon;
    problem.Q = Mat::Identity(proto.system.n, proto.system.n);
    problem.Q_N = problem.Q;
    problem.R_w = Mat::Zero(proto.system.m, proto.system.m);
    problem.u_min = Vec::Constant(proto.system.m, cfg.mpc_u_min);
    problem.u_max = Vec::Constant(proto.system.m, cfg.mpc_u_max);

    Rng ic_rng = Rng(cfg.seed).child(3000);
    const std::vector<Vec> ics = sample_initial_conditions(cfg.task, cfg.mpc_ics, ic_rng);

    const fs::path ep_dir = out / "episodes";
    fs::create_directories(ep_dir);
    std::vector<ClosedLoopResult> results(ics.size());
    parallel_for(static_cast<int>(ics.size()), workers, [&](int k) {
        results[static_cast<std::size_t>(k)] = closed_loop(
            proto.system, model, problem, ics[static_cast<std::size_t>(k)], cfg.mpc_steps, Mat());
        write_episode_csv(results[static_cast<std::size_t>(k)],
                          (ep_dir / ("ep_" + std::to_string(k) + ".csv")).string(), hash,
                          cfg.seed);
    });

    nlohmann::json episodes = nlohmann::json::array();
    double cost_sum = 0.0;
    int failures = 0;
    for (std::size_t k = 0; k < results.size(); ++k) {
        const auto& r = results[k];
        const Mat& states = r.trajectory.states;
        const bool stabilized = !r.diverged && states.cols() >= 2 &&
                                std::abs(states(states.rows() - 1, 1)) < 0.1;
        if (!stabilized) ++failures;
        cost_sum += r.realized_cost;
        episodes.push_back({{"episode", k},
                            {"cost", r.realized_cost},
                            {"diverged", r.diverged},
                            {"stabilized", stabilized},
                            {"qp_cap_warnings", r.cap_warnings}});
    }
    nlohmann::json doc{{"schema_version", 1},
                       {"config_hash", hash},
                       {"seed", cfg.seed},
                       {"model", cfg.mpc_model},
                       {"horizon", cfg.mpc_horizon},
                       {"episodes", episodes},
                       {"mean_cost", results.empty() ? 0.0 : cost_sum / results.size()},
                       {"failure_count", failures}};
    std::ofstream sum(out / "mpc_summary.json");
    if (!sum) throw Error("cannot open mpc_summary.json for writing");
    sum << doc.dump(2) << '\n';
}

void cmd_iterate(const ExperimentConfig& cfg, const fs::path& out, int) {
    const Protocol proto = protocol_with_overrides(cfg);
    const std::string hash = experiment_config_hash(cfg);
    const Cell cell =
        build_cell(proto, noise_levels()[static_cast<std::size_t>(cfg.noise_indices.front())],
                   cfg.seed_indices.front(), cfg.seed);

    IterateConfig it;
    it.train = cfg.train;
    it.train.seed = cell_train_seed(cfg.seed, cfg.noise_indices.front(),
                                    cfg.seed_indices.front());
    it.mpc = default_cartpole_mpc();
    it.mpc.Q = Mat::Identity(proto.system.n, proto.system.n);
    it.mpc.Q_N = it.mpc.Q;
    it.mpc.R_w = Mat::Zero(proto.system.m, proto.system.m);
    it.mpc.N_p = cfg.mpc_horizon;
    it.seen = TaskSpec{"seen", cfg.mpc_u_min, cfg.mpc_u_max};
    it.collection.episode_steps = cfg.mpc_steps;
    it.collection.noise_sigma = cfg.collect_noise_sigma;
    it.collection.cost_filter = cfg.cost_filter;
    it.rounds = cfg.rounds;
    it.collect_ics = cfg.collect_ics;
    it.eval_ics = cfg.eval_ics;
    it.val_fraction = cfg.val_fraction;
    it.ic_task = cfg.task;
    it.seed = cfg.seed;

    const std::vector<IterationRound> rounds = iterate(it, proto.system, cell.train);

    write_round_summary(rounds, (out / "rounds.json").string(), hash, cfg.seed);
    write_round_costs_csv(rounds, (out / "round_costs.csv").string(), hash, cfg.seed);
    for (const auto& r : rounds) {
        const fs::path dir = out / ("round_" + std::to_string(r.round));
        fs::create_directories(dir);
        KoopmanModel model = r.model;
        model.provenance.config_hash = hash;
        save_model(model, (dir / "model.json").string());
        for (std::size_t k = 0; k < r.collected.size(); ++k)
            write_trajectory(r.collected[k], proto.system,
                             (dir / ("collected_" + std::to_string(k) + ".csv")).string(),
                             hash);
    }
}

void cmd_ablation(const ExperimentConfig& cfg, const fs::path& out, int workers) {
    const Protocol proto = protocol_with_overrides(cfg);
    const std::string hash = experiment_config_hash(cfg);

    std::vector<int> indices = cfg.noise_indices;
    if (!cfg.noise_indices_set) indices = {0, 8, 9};
    std::vector<double> levels;
    levels.reserve(indices.size());
    for (int ni : indices) levels.push_back(noise_levels()[static_cast<std::size_t>(ni)]);

    const std::vector<AblationRow> rows =
        run_ablation(proto, cfg.train, levels, cfg.seed_indices.front(), cfg.seed, workers);
    write_ablation_csv(rows, (out / "ablation.csv").string(), hash, cfg.seed);
}

using CommandFn = std::function<void(const ExperimentConfig&, const fs::path&, int)>;

// Ties every run directory back to the exact config and seed that produced it.
void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["schema_version"] = cfg.schema_version;
    j["command"] = command;
    j["task"] = cfg.task;
    j["config_hash"] = experiment_config_hash(cfg);
    j["seed"] = cfg.seed;
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << '\n';
}

// All output lands in a staging directory that replaces the target only on
// success, so aborted runs leave nothing partial behind.
void run_command(const std::string& name, const CommandArgs& args, const CommandFn& body) {
    const ExperimentConfig cfg = load_experiment_config(args.config_path);
    const fs::path out(args.out_override.empty() ? cfg.out : args.out_override);
    if (fs::exists(out) && !args.force)
        throw Error("output directory " + out.string() + " exists (use --force to replace it)");

    fs::path staging = out;
    staging += ".staging";
    std::error_code ec;
    fs::remove_all(staging, ec);
    fs::create_directories(staging);
    try {
        write_manifest(staging, name, cfg);
        body(cfg, staging, args.workers);
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
    fs::remove_all(out, ec);
    fs::rename(staging, out);
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"stirk: Koopman operator learning and predictive control experiments"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands{
        {"generate", "Simulate and write the configured trajectory dataset"},
        {"train", "Train one model per (noise, seed) cell"},
        {"evaluate", "Normalized prediction errors for the configured methods"},
        {"mpc", "Closed-loop episodes under the condensed controller"},
        {"iterate", "Closed-loop data augmentation rounds"},
        {"ablation", "Parameterization/schedule/optimizer/roll-out grid"},
    };

    std::map<std::string, CommandArgs> cmd_args;
    for (const auto& [name, desc] : commands) {
        CLI::App* sub = app.add_subcommand(name, desc);
        CommandArgs& a = cmd_args[name];
        sub->add_option("--config", a.config_path, "Experiment config JSON")->required();
        sub->add_option("--out", a.out_override, "Output directory (overrides the config)");
        sub->add_option("--workers", a.workers, "Parallel worker threads");
        sub->add_flag("--force", a.force, "Replace an existing output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::map<std::string, CommandFn> dispatch{
        {"generate", cmd_generate}, {"train", cmd_train},     {"evaluate", cmd_evaluate},
        {"mpc", cmd_mpc},           {"iterate", cmd_iterate}, {"ablation", cmd_ablation},
    };

    try {
        for (const auto& [name, fn] : dispatch)
            if (app.got_subcommand(name)) {
                run_command(name, cmd_args.at(name), fn);
                return 0;
            }
        std::cerr << "error: no command given\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace stirk
