#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stirk/iterative.hpp"
#include "stirk/mpc.hpp"
#include "stirk/training.hpp"

namespace stirk {

// Declarative experiment description. Everything except the task name has a
// per-task default so configs stay small; noise levels are referenced by
// index into the ten-level ladder rather than by value.
struct ExperimentConfig {
    int schema_version = 1;
    std::string task;
    std::uint64_t seed = 0;
    std::string out = "out";

    std::vector<int> noise_indices;
    bool noise_indices_set = false;   // explicit in the file vs task default
    std::vector<int> seed_indices;
    std::optional<int> steps_override;
    std::optional<int> trajectories_override;

    std::string dict_kind = "polyflow";
    int rbf_centers = 100;

    TrainConfig train;

    // mpc
    int mpc_horizon = 20;
    double mpc_u_min = -20.0;
    double mpc_u_max = 20.0;
    int mpc_steps = 200;
    int mpc_ics = 20;
    std::string mpc_model;

    // iterate
    int rounds = 3;
    int collect_ics = 20;
    int eval_ics = 20;
    double collect_noise_sigma = 0.1;
    double val_fraction = 0.1;
    std::optional<double> cost_filter;

    std::vector<std::string> eval_methods{"edmd-polyflow", "edmd-rbf", "dmd"};
    std::string models_dir;

    std::string raw_dump;  // canonical JSON for hashing
};

// Parses and validates; throws ConfigError with a dotted field path on any
// invalid entry and ParseError on malformed JSON. STIRK_SEED in the
// environment overrides the master seed.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

std::string experiment_config_hash(const ExperimentConfig& config);

}  // namespace stirk
