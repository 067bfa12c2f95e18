#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stirk/baselines.hpp"
#include "stirk/dynamics.hpp"
#include "stirk/mpc.hpp"
#include "stirk/training.hpp"

namespace stirk {

// Data-collection protocol for one task. Counts and noise defaults follow the
// benchmark setups; vdp-single sweeps all ten noise levels while cartpole is
// collected at a single level.
struct Protocol {
    std::string task;
    SystemSpec system;
    int steps = 0;
    int train_trajectories = 0;
    int val_trajectories = 0;   // reserved from the tail of the training set
    int test_trajectories = 10;
    double default_noise = 0.1;
};

Protocol protocol_for(const std::string& task);

// One (noise level, seed replicate) cell: recorded noisy training set, the
// clean originals, and the shared clean test set.
struct Cell {
    std::vector<Trajectory> train;
    std::vector<Trajectory> clean;
    std::vector<Trajectory> test;
    double noise_sigma = 0.0;
    int seed_index = 0;
};

Cell build_cell(const Protocol& proto, double noise_sigma, int seed_index,
                std::uint64_t master_seed);

struct TrainedCell {
    KoopmanModel model;
    TrainHistory history;
    double train_error = 0.0;   // rollout vs the recorded training trajectories
    double test_error = 0.0;    // rollout vs the clean test trajectories
    double wall_time_s = 0.0;
};

TrainedCell train_cell(const Protocol& proto, const Cell& cell, const TrainConfig& config);
TrainedCell train_cell(const Protocol& proto, const Cell& cell, const TrainConfig& config,
                       const Dictionary& dict);

struct BaselineCellResult {
    double train_error = 0.0;
    double test_error = 0.0;
    int rank = 0;
};

BaselineCellResult baseline_cell(const Cell& cell, const Dictionary& dict, double dt);

TrainConfig default_vdp_train_config();
TrainConfig default_cartpole_train_config();
MPCProblem default_cartpole_mpc();

struct ResultRow {
    std::string method;
    std::string dictionary;
    double noise = 0.0;
    int seed = 0;
    std::string split;
    double normalized_error = 0.0;
};

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path,
                       const std::string& config_hash, std::uint64_t seed);

struct AblationRow {
    Parameterization parameterization = Parameterization::dissipative;
    LrSchedule lr_schedule = LrSchedule::cyclic;
    bool lbfgs_tail = true;
    bool progressive_rollout = true;
    double noise = 0.0;
    double train_error = 0.0;
    double test_error = 0.0;
    double wall_time_s = 0.0;
};

// 2x2x2x2 grid over parameterization, LR schedule, optimizer tail and
// roll-out schedule, one row per combination and noise level.
std::vector<AblationRow> run_ablation(const Protocol& proto, const TrainConfig& base,
                                      const std::vector<double>& noise_levels, int seed_index,
                                      std::uint64_t master_seed, int workers);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path,
                        const std::string& config_hash, std::uint64_t seed);

// Runs fn(0..count-1) across workers; each index is independent so parallel
// and serial execution produce identical results.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

// Bit-exact fingerprints for determinism checks.
std::string fingerprint(const Mat& m);
std::string fingerprint(double v);

}  // namespace stirk
