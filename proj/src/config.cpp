#include "stirk/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "stirk/errors.hpp"
#include "stirk/experiments.hpp"
#include "stirk/util.hpp"

namespace stirk {

namespace {

const std::vector<std::string> kTasks{"vdp-single", "vdp-multi", "cartpole"};

void require_object(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "must be an object");
}

template <typename T>
T field_as(const nlohmann::json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(path, "has the wrong type");
    }
}

std::vector<int> index_list(const nlohmann::json& j, const std::string& path, int max_value) {
    if (!j.is_array()) throw ConfigError(path, "must be an array of indices");
    std::vector<int> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const int v = field_as<int>(j[i], path + "[" + std::to_string(i) + "]");
        if (v < 0 || v > max_value)
            throw ConfigError(path + "[" + std::to_string(i) + "]",
                              "must be in [0, " + std::to_string(max_value) + "]");
        out.push_back(v);
    }
    return out;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    require_object(j, "(root)");
    ExperimentConfig cfg;

    if (!j.contains("task")) throw ConfigError("task", "is required");
    cfg.task = field_as<std::string>(j.at("task"), "task");
    bool known = false;
    for (const auto& t : kTasks) known = known || t == cfg.task;
    if (!known) throw ConfigError("task", "unknown task '" + cfg.task + "'");

    const int version = j.value("schema_version", 1);
    if (version != 1) throw ConfigError("schema_version", "unsupported version");
    cfg.schema_version = version;

    if (j.contains("seed")) cfg.seed = field_as<std::uint64_t>(j.at("seed"), "seed");
    if (j.contains("out")) cfg.out = field_as<std::string>(j.at("out"), "out");

    const bool is_vdp = cfg.task != "cartpole";
    cfg.noise_indices = is_vdp ? std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}
                               : std::vector<int>{9};
    cfg.seed_indices = is_vdp ? std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}
                              : std::vector<int>{0};
    cfg.train = cfg.task == "cartpole" ? default_cartpole_train_config()
                                       : default_vdp_train_config();

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        require_object(d, "dataset");
        if (d.contains("noise_indices")) {
            cfg.noise_indices = index_list(d.at("noise_indices"), "dataset.noise_indices", 9);
            cfg.noise_indices_set = true;
        }
        if (d.contains("seed_indices"))
            cfg.seed_indices = index_list(d.at("seed_indices"), "dataset.seed_indices", 1000000);
        if (d.contains("steps")) {
            cfg.steps_override = field_as<int>(d.at("steps"), "dataset.steps");
            if (*cfg.steps_override < 2) throw ConfigError("dataset.steps", "must be >= 2");
        }
        if (d.contains("trajectories")) {
            cfg.trajectories_override =
                field_as<int>(d.at("trajectories"), "dataset.trajectories");
            if (*cfg.trajectories_override < 1)
                throw ConfigError("dataset.trajectories", "must be >= 1");
        }
    }
    if (cfg.noise_indices.empty()) throw ConfigError("dataset.noise_indices", "must be non-empty");
    if (cfg.seed_indices.empty()) throw ConfigError("dataset.seed_indices", "must be non-empty");

    if (j.contains("dictionary")) {
        const auto& d = j.at("dictionary");
        require_object(d, "dictionary");
        if (d.contains("kind")) {
            cfg.dict_kind = field_as<std::string>(d.at("kind"), "dictionary.kind");
            if (cfg.dict_kind != "polyflow" && cfg.dict_kind != "rbf" &&
                cfg.dict_kind != "identity")
                throw ConfigError("dictionary.kind", "unknown kind '" + cfg.dict_kind + "'");
        }
        if (d.contains("order"))
            cfg.train.polyflow_order = field_as<int>(d.at("order"), "dictionary.order");
        if (d.contains("rbf_centers")) {
            cfg.rbf_centers = field_as<int>(d.at("rbf_centers"), "dictionary.rbf_centers");
            if (cfg.rbf_centers < 1) throw ConfigError("dictionary.rbf_centers", "must be >= 1");
        }
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        require_object(t, "train");
        try {
            nlohmann::json merged = train_config_to_json(cfg.train);
            merged.update(t);
            cfg.train = train_config_from_json(merged);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("train.") + e.field, e.what());
        } catch (const ParseError& e) {
            throw ConfigError("train", e.what());
        }
        if (cfg.train.epochs < 0) throw ConfigError("train.epochs", "must be >= 0");
        if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
        if (cfg.train.R_max < 1) throw ConfigError("train.R_max", "must be >= 1");
        if (cfg.train.polyflow_order < 1)
            throw ConfigError("train.polyflow_order", "must be >= 1");
    }

    if (j.contains("mpc")) {
        const auto& m = j.at("mpc");
        require_object(m, "mpc");
        if (m.contains("horizon")) cfg.mpc_horizon = field_as<int>(m.at("horizon"), "mpc.horizon");
        if (cfg.mpc_horizon < 1) throw ConfigError("mpc.horizon", "must be >= 1");
        if (m.contains("u_min")) cfg.mpc_u_min = field_as<double>(m.at("u_min"), "mpc.u_min");
        if (m.contains("u_max")) cfg.mpc_u_max = field_as<double>(m.at("u_max"), "mpc.u_max");
        if (cfg.mpc_u_min > cfg.mpc_u_max) throw ConfigError("mpc.u_min", "exceeds mpc.u_max");
        if (m.contains("steps")) cfg.mpc_steps = field_as<int>(m.at("steps"), "mpc.steps");
        if (cfg.mpc_steps < 1) throw ConfigError("mpc.steps", "must be >= 1");
        if (m.contains("ics")) cfg.mpc_ics = field_as<int>(m.at("ics"), "mpc.ics");
        if (cfg.mpc_ics < 1) throw ConfigError("mpc.ics", "must be >= 1");
        if (m.contains("model")) cfg.mpc_model = field_as<std::string>(m.at("model"), "mpc.model");
        if (m.contains("z_min") || m.contains("z_max"))
            throw ConfigError("mpc.z_min", "lifted-state bounds are not supported");
    }

    if (j.contains("iterate")) {
        const auto& it = j.at("iterate");
        require_object(it, "iterate");
        if (it.contains("rounds")) cfg.rounds = field_as<int>(it.at("rounds"), "iterate.rounds");
        if (cfg.rounds < 1) throw ConfigError("iterate.rounds", "must be >= 1");
        if (it.contains("collect_ics"))
            cfg.collect_ics = field_as<int>(it.at("collect_ics"), "iterate.collect_ics");
        if (cfg.collect_ics < 1) throw ConfigError("iterate.collect_ics", "must be >= 1");
        if (it.contains("eval_ics"))
            cfg.eval_ics = field_as<int>(it.at("eval_ics"), "iterate.eval_ics");
        if (cfg.eval_ics < 1) throw ConfigError("iterate.eval_ics", "must be >= 1");
        if (it.contains("noise_sigma"))
            cfg.collect_noise_sigma =
                field_as<double>(it.at("noise_sigma"), "iterate.noise_sigma");
        if (cfg.collect_noise_sigma < 0.0)
            throw ConfigError("iterate.noise_sigma", "must be >= 0");
        if (it.contains("val_fraction"))
            cfg.val_fraction = field_as<double>(it.at("val_fraction"), "iterate.val_fraction");
        if (cfg.val_fraction < 0.0 || cfg.val_fraction >= 1.0)
            throw ConfigError("iterate.val_fraction", "must be in [0, 1)");
        if (it.contains("cost_filter"))
            cfg.cost_filter = field_as<double>(it.at("cost_filter"), "iterate.cost_filter");
    }

    if (j.contains("evaluate")) {
        const auto& e = j.at("evaluate");
        require_object(e, "evaluate");
        if (e.contains("methods")) {
            if (!e.at("methods").is_array())
                throw ConfigError("evaluate.methods", "must be an array");
            cfg.eval_methods.clear();
            for (std::size_t i = 0; i < e.at("methods").size(); ++i) {
                const std::string m = field_as<std::string>(
                    e.at("methods")[i], "evaluate.methods[" + std::to_string(i) + "]");
                if (m != "edmd-polyflow" && m != "edmd-rbf" && m != "dmd" &&
                    m != "dissipative-polyflow" && m != "standard-polyflow")
                    throw ConfigError("evaluate.methods[" + std::to_string(i) + "]",
                                      "unknown method '" + m + "'");
                cfg.eval_methods.push_back(m);
            }
        }
        if (e.contains("models_dir"))
            cfg.models_dir = field_as<std::string>(e.at("models_dir"), "evaluate.models_dir");
    }

    cfg.raw_dump = j.dump();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("(file)", "cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    ExperimentConfig cfg = experiment_config_from_json(j);
    if (const char* env = std::getenv("STIRK_SEED")) {
        std::uint64_t value = 0;
        const char* last = env + std::string(env).size();
        auto res = std::from_chars(env, last, value);
        if (res.ec != std::errc() || res.ptr != last)
            throw ConfigError("STIRK_SEED", "must be an unsigned integer");
        cfg.seed = value;
    }
    return cfg;
}

std::string experiment_config_hash(const ExperimentConfig& config) {
    return fnv1a64_hex(config.raw_dump + "|seed=" + std::to_string(config.seed));
}

}  // namespace stirk
