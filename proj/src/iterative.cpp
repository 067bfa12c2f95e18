#include "stirk/iterative.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "stirk/errors.hpp"
#include "stirk/rng.hpp"
#include "stirk/util.hpp"

namespace stirk {

namespace {

MPCProblem with_task_bounds(const MPCProblem& base, const TaskSpec& task, int m) {
    MPCProblem p = base;
    p.u_min = Vec::Constant(m, task.u_min);
    p.u_max = Vec::Constant(m, task.u_max);
    return p;
}

// Failure: divergence, or the second state component (the pole angle for the
// CartPole task) outside 0.1 rad at the final step.
bool episode_failed(const ClosedLoopResult& result) {
    if (result.diverged) return true;
    const Mat& states = result.trajectory.states;
    if (states.cols() >= 2)
        return std::abs(states(states.rows() - 1, 1)) >= 0.1;
    return false;
}

}  // namespace

CollectionResult collect_closed_loop(const KoopmanModel& model, const SystemSpec& plant,
                                     const MPCProblem& mpc, const std::vector<Vec>& ics,
                                     const TaskSpec& task, const CollectionConfig& collection,
                                     int round) {
    const MPCProblem task_mpc = with_task_bounds(mpc, task, plant.m);
    Rng base_rng(collection.seed);
    CollectionResult out;
    out.trajectories.reserve(ics.size());
    out.outcomes.reserve(ics.size());
    for (std::size_t i = 0; i < ics.size(); ++i) {
        ClosedLoopResult res =
            closed_loop(plant, model, task_mpc, ics[i], collection.episode_steps, Mat());
        EpisodeOutcome outcome{res.realized_cost, episode_failed(res)};
        out.outcomes.push_back(outcome);
        if (collection.cost_filter && !(res.realized_cost > *collection.cost_filter)) continue;

        Trajectory traj = res.trajectory;
        if (collection.noise_sigma > 0.0 && traj.steps() > 0) {
            const std::uint64_t child_seed = base_rng.child(static_cast<std::uint64_t>(i)).state();
            traj = add_noise(traj, NoiseSpec{collection.noise_sigma, child_seed});
        }
        traj.provenance = TrajectoryProvenance{round, static_cast<int>(i), task.name};
        out.trajectories.push_back(std::move(traj));
    }
    return out;
}

std::pair<KoopmanModel, TrainHistory> augment_and_retrain(
    const std::vector<Trajectory>& base, const std::vector<Trajectory>& collected,
    const TrainConfig& config, const Dictionary& dict, double dt, double val_fraction) {
    if (base.empty()) throw InvalidStateError("augment_and_retrain: empty base dataset");

    // Validation trajectories come from the tail of the base set so the split
    // stays fixed while the training pool grows across rounds.
    std::size_t n_val = 0;
    if (val_fraction > 0.0)
        n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(val_fraction * base.size())));
    if (n_val >= base.size()) n_val = base.size() - 1;

    std::vector<Trajectory> train_set(base.begin(), base.end() - static_cast<long>(n_val));
    train_set.insert(train_set.end(), collected.begin(), collected.end());
    std::vector<Trajectory> val_set(base.end() - static_cast<long>(n_val), base.end());

    TrainInput input{make_windows(train_set, config.R_max),
                     make_windows(val_set, config.R_max), dict, dt};
    return train(config, input);
}

std::vector<IterationRound> iterate(const IterateConfig& config, const SystemSpec& plant,
                                    const std::vector<Trajectory>& base) {
    if (config.rounds < 1) throw ConfigError("rounds", "must be >= 1");
    Rng master(config.seed);
    Rng eval_rng = master.child(1);
    const std::vector<Vec> eval_ics =
        sample_initial_conditions(config.ic_task, config.eval_ics, eval_rng);

    const Dictionary dict = Dictionary::polyflow(plant, config.train.polyflow_order);
    const MPCProblem seen_mpc = with_task_bounds(config.mpc, config.seen, plant.m);
    const MPCProblem unseen_mpc = with_task_bounds(config.mpc, config.unseen, plant.m);

    auto evaluate = [&](const KoopmanModel& model, const MPCProblem& mpc,
                        std::vector<double>& costs, int* failures) {
        double sum = 0.0;
        for (const Vec& ic : eval_ics) {
            const ClosedLoopResult res =
                closed_loop(plant, model, mpc, ic, config.collection.episode_steps, Mat());
            costs.push_back(res.realized_cost);
            sum += res.realized_cost;
            if (failures != nullptr && episode_failed(res)) ++(*failures);
        }
        return eval_ics.empty() ? 0.0 : sum / static_cast<double>(eval_ics.size());
    };

    std::vector<IterationRound> rounds;
    std::vector<Trajectory> all_collected;
    for (int r = 0; r < config.rounds; ++r) {
        IterationRound round;
        round.round = r;

        if (r > 0) {
            CollectionConfig coll = config.collection;
            coll.seed = master.child(100 + static_cast<std::uint64_t>(r)).state();
            Rng ic_rng = master.child(200 + static_cast<std::uint64_t>(r));
            const std::vector<Vec> collect_ics =
                sample_initial_conditions(config.ic_task, config.collect_ics, ic_rng);
            CollectionResult collection = collect_closed_loop(
                rounds.back().model, plant, config.mpc, collect_ics, config.seen, coll, r);
            round.collected = collection.trajectories;
            all_collected.insert(all_collected.end(), collection.trajectories.begin(),
                                 collection.trajectories.end());
        }

        TrainConfig train_cfg = config.train;
        if (r > 0) train_cfg.seed = master.child(300 + static_cast<std::uint64_t>(r)).state();
        auto [model, history] =
            augment_and_retrain(base, all_collected, train_cfg, dict, plant.dt,
                                config.val_fraction);
        round.model = std::move(model);

        std::size_t n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(config.val_fraction * base.size())));
        if (config.val_fraction <= 0.0) n_val = 0;
        if (n_val >= base.size()) n_val = base.size() - 1;
        std::vector<Trajectory> train_set(base.begin(), base.end() - static_cast<long>(n_val));
        train_set.insert(train_set.end(), all_collected.begin(), all_collected.end());
        round.n_windows =
            static_cast<int>(make_windows(train_set, config.train.R_max).windows.size());

        round.mean_cost_seen =
            evaluate(round.model, seen_mpc, round.costs_seen, &round.failure_count);
        round.mean_cost_unseen = evaluate(round.model, unseen_mpc, round.costs_unseen, nullptr);
        rounds.push_back(std::move(round));
    }
    return rounds;
}

void write_round_summary(const std::vector<IterationRound>& rounds, const std::string& path,
                         const std::string& config_hash, std::uint64_t seed) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rounds) {
        arr.push_back({{"round", r.round},
                       {"n_windows", r.n_windows},
                       {"mean_cost_seen", r.mean_cost_seen},
                       {"mean_cost_unseen", r.mean_cost_unseen},
                       {"failure_count", r.failure_count}});
    }
    nlohmann::json doc{{"schema_version", 1},
                       {"config_hash", config_hash},
                       {"seed", seed},
                       {"rounds", arr}};
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw Error("write failed for " + path);
}

void write_round_costs_csv(const std::vector<IterationRound>& rounds, const std::string& path,
                           const std::string& config_hash, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "# config_hash=" << config_hash << " seed=" << seed << "\n";
    out << "round,task,episode,cost\n";
    for (const auto& r : rounds) {
        for (std::size_t i = 0; i < r.costs_seen.size(); ++i)
            out << r.round << ",seen," << i << ',' << format_double(r.costs_seen[i]) << '\n';
        for (std::size_t i = 0; i < r.costs_unseen.size(); ++i)
            out << r.round << ",unseen," << i << ',' << format_double(r.costs_unseen[i]) << '\n';
    }
    if (!out) throw Error("write failed for " + path);
}

}  // namespace stirk
