#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stirk/baselines.hpp"
#include "stirk/dynamics.hpp"
#include "stirk/errors.hpp"
#include "stirk/koopman.hpp"
#include "stirk/lifting.hpp"
#include "stirk/mpc.hpp"
#include "stirk/training.hpp"

namespace py = pybind11;
using namespace stirk;

namespace {

Trajectory make_trajectory(const Mat& states, const Mat& inputs, double dt) {
    if (states.rows() != inputs.rows() + 1)
        throw DimensionError("states must have exactly one more row than inputs");
    Trajectory t;
    t.states = states;
    t.inputs = inputs;
    t.dt = dt;
    return t;
}

std::pair<KoopmanModel, std::vector<EpochRecord>> train_py(
    const TrainConfig& config, const SystemSpec& system,
    const std::vector<Trajectory>& trajectories) {
    TrainInput input{make_windows(trajectories, config.R_max),
                     WindowSet{{}, config.R_max, 0},
                     Dictionary::polyflow(system, config.polyflow_order), system.dt};
    auto [model, history] = train(config, input);
    return {std::move(model), std::move(history.records)};
}

KoopmanModel fit_edmd_py(const std::vector<Trajectory>& trajectories, const Dictionary& dict,
                         double dt) {
    const LeastSquaresFit fit = edmd_fit(build_snapshot_pairs(trajectories, dict));
    return baseline_model(fit, dict, dt);
}

py::dict closed_loop_py(const SystemSpec& plant, const KoopmanModel& model, const Vec& x0,
                        int steps, int horizon, double u_min, double u_max) {
    MPCProblem problem;
    problem.A = model.A;
    problem.B = model.B;
    problem.C = model.C;
    problem.N_p = horizon;
    problem.Q = Mat::Identity(plant.n, plant.n);
    problem.Q_N = problem.Q;
    problem.R_w = Mat::Zero(plant.m, plant.m);
    problem.u_min = Vec::Constant(plant.m, u_min);
    problem.u_max = Vec::Constant(plant.m, u_max);
    const ClosedLoopResult res = closed_loop(plant, model, problem, x0, steps, Mat());

    py::dict out;
    out["states"] = res.trajectory.states;
    out["inputs"] = res.trajectory.inputs;
    out["cost"] = res.realized_cost;
    out["diverged"] = res.diverged;
    return out;
}

}  // namespace

PYBIND11_MODULE(_stirk, m) {
    m.doc() = "Koopman-operator learning core";

    py::register_exception<Error>(m, "StirkError");

    py::class_<SystemSpec>(m, "SystemSpec")
        .def_readonly("name", &SystemSpec::name)
        .def_readonly("n", &SystemSpec::n)
        .def_readonly("m", &SystemSpec::m)
        .def_readonly("dt", &SystemSpec::dt);

    py::class_<Trajectory>(m, "Trajectory")
        .def(py::init(&make_trajectory), py::arg("states"), py::arg("inputs"), py::arg("dt"))
        .def_readonly("states", &Trajectory::states)
        .def_readonly("inputs", &Trajectory::inputs)
        .def_readonly("dt", &Trajectory::dt)
        .def_readonly("noise_sigma", &Trajectory::noise_sigma)
        .def_property_readonly("steps", &Trajectory::steps);

    py::class_<Dictionary>(m, "Dictionary")
        .def_static("polyflow", &Dictionary::polyflow, py::arg("system"), py::arg("order"))
        .def_static("identity", &Dictionary::identity, py::arg("n"))
        .def("lift", &Dictionary::lift, py::arg("x"))
        .def("output_matrix", &Dictionary::output_matrix)
        .def_property_readonly("lifted_dim", &Dictionary::lifted_dim)
        .def_property_readonly("state_dim", &Dictionary::state_dim);

    py::class_<KoopmanModel>(m, "KoopmanModel")
        .def_readonly("A", &KoopmanModel::A)
        .def_readonly("B", &KoopmanModel::B)
        .def_readonly("C", &KoopmanModel::C)
        .def_readonly("dt", &KoopmanModel::dt)
        .def_property_readonly("lifted_dim", &KoopmanModel::lifted_dim)
        .def_property_readonly("state_dim", &KoopmanModel::state_dim);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("base_lr", &TrainConfig::base_lr)
        .def_readwrite("max_lr", &TrainConfig::max_lr)
        .def_readwrite("lr_cycle_half_period", &TrainConfig::lr_cycle_half_period)
        .def_readwrite("curriculum_period", &TrainConfig::curriculum_period)
        .def_readwrite("R_max", &TrainConfig::R_max)
        .def_readwrite("optimizer_switch_epoch", &TrainConfig::optimizer_switch_epoch)
        .def_readwrite("lbfgs_memory", &TrainConfig::lbfgs_memory)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("polyflow_order", &TrainConfig::polyflow_order);

    py::class_<EpochRecord>(m, "EpochRecord")
        .def_readonly("epoch", &EpochRecord::epoch)
        .def_readonly("R", &EpochRecord::R)
        .def_readonly("lr", &EpochRecord::lr)
        .def_readonly("train_loss", &EpochRecord::train_loss)
        .def_readonly("val_loss", &EpochRecord::val_loss)
        .def_readonly("spectral_radius", &EpochRecord::spectral_radius);

    m.def("make_vdp", &make_vdp, py::arg("mu") = 1.0, py::arg("dt") = 0.1);
    m.def("make_cartpole", &make_cartpole, py::arg("m_c") = 1.0, py::arg("m_p") = 0.1,
          py::arg("l") = 0.5, py::arg("g") = 9.81, py::arg("dt") = 0.05);
    m.def("simulate", &simulate, py::arg("system"), py::arg("x0"), py::arg("inputs"));
    m.def(
        "add_noise",
        [](const Trajectory& t, double sigma, std::uint64_t seed) {
            return add_noise(t, NoiseSpec{sigma, seed});
        },
        py::arg("trajectory"), py::arg("sigma"), py::arg("seed"));
    m.def("noise_levels", &noise_levels);
    m.def(
        "decaying_sine_inputs",
        [](std::uint64_t seed, int steps, double dt) {
            Rng rng(seed);
            return decaying_sine_inputs(rng, steps, dt);
        },
        py::arg("seed"), py::arg("steps"), py::arg("dt"));
    m.def(
        "sample_initial_conditions",
        [](const std::string& task, int count, std::uint64_t seed) {
            Rng rng(seed);
            return sample_initial_conditions(task, count, rng);
        },
        py::arg("task"), py::arg("count"), py::arg("seed"));

    m.def("train", &train_py, py::arg("config"), py::arg("system"), py::arg("trajectories"));
    m.def("fit_edmd", &fit_edmd_py, py::arg("trajectories"), py::arg("dictionary"),
          py::arg("dt"));
    m.def(
        "rollout_predict",
        [](const KoopmanModel& model, const Vec& x0, const Mat& inputs, int R) {
            return rollout_predict(model, x0, inputs, R).states;
        },
        py::arg("model"), py::arg("x0"), py::arg("inputs"), py::arg("R"));
    m.def("normalized_error", &normalized_error, py::arg("predicted"), py::arg("reference"));
    m.def("mse_per_timestep", &mse_per_timestep, py::arg("predicted"), py::arg("reference"));
    m.def("spectral_radius", &spectral_radius, py::arg("A"));
    m.def("closed_loop", &closed_loop_py, py::arg("plant"), py::arg("model"), py::arg("x0"),
          py::arg("steps"), py::arg("horizon") = 20, py::arg("u_min") = -20.0,
          py::arg("u_max") = 20.0);
    m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
    m.def("load_model", &load_model, py::arg("path"));
}
