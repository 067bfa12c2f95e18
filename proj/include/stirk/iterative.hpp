#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stirk/dynamics.hpp"
#include "stirk/koopman.hpp"
#include "stirk/mpc.hpp"
#include "stirk/training.hpp"

namespace stirk {

struct TaskSpec {
    std::string name;    // provenance label
    double u_min = 0.0;
    double u_max = 0.0;
};

struct CollectionConfig {
    int episode_steps = 200;
    double noise_sigma = 0.1;    // measurement noise applied to stored states
    std::uint64_t seed = 0;
    std::optional<double> cost_filter;  // keep only episodes costing above this
};

struct EpisodeOutcome {
    double cost = 0.0;
    bool failed = false;   // diverged or terminal |x2| >= 0.1 rad
};

struct CollectionResult {
    std::vector<Trajectory> trajectories;
    std::vector<EpisodeOutcome> outcomes;
};

// Closed loop from each initial condition under the task's input bounds; the
// stored trajectories get the same measurement-noise injection as training
// data while the controller always sees the true state.
CollectionResult collect_closed_loop(const KoopmanModel& model, const SystemSpec& plant,
                                     const MPCProblem& mpc, const std::vector<Vec>& ics,
                                     const TaskSpec& task, const CollectionConfig& collection,
                                     int round);

// Union dataset, rebuilt windows, fresh training run with the given config
// (callers pass a new seed per round).
std::pair<KoopmanModel, TrainHistory> augment_and_retrain(
    const std::vector<Trajectory>& base, const std::vector<Trajectory>& collected,
    const TrainConfig& config, const Dictionary& dict, double dt, double val_fraction);

struct IterationRound {
    int round = 0;
    KoopmanModel model;
    std::vector<Trajectory> collected;
    int n_windows = 0;
    double mean_cost_seen = 0.0;
    double mean_cost_unseen = 0.0;
    int failure_count = 0;   // over the seen-task evaluation episodes
    std::vector<double> costs_seen;
    std::vector<double> costs_unseen;
};

struct IterateConfig {
    TrainConfig train;
    MPCProblem mpc;                 // weights/horizon; bounds come from the tasks
    TaskSpec seen{"seen", -20.0, 20.0};
    TaskSpec unseen{"unseen", -10.0, 10.0};
    CollectionConfig collection;
    int rounds = 3;                 // round 0 is the base model
    int collect_ics = 20;
    int eval_ics = 20;
    double val_fraction = 0.1;
    std::string ic_task = "cartpole";
    std::uint64_t seed = 0;
};

// Round 0 trains on the base data; each later round collects closed-loop
// trajectories on the seen task, augments, retrains, and re-evaluates both
// tasks on evaluation initial conditions held fixed across rounds.
std::vector<IterationRound> iterate(const IterateConfig& config, const SystemSpec& plant,
                                    const std::vector<Trajectory>& base);

void write_round_summary(const std::vector<IterationRound>& rounds, const std::string& path,
                         const std::string& config_hash, std::uint64_t seed);
void write_round_costs_csv(const std::vector<IterationRound>& rounds, const std::string& path,
                           const std::string& config_hash, std::uint64_t seed);

}  // namespace stirk
