#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stirk/baselines.hpp"
#include "stirk/dynamics.hpp"
#include "stirk/experiments.hpp"
#include "stirk/io.hpp"
#include "stirk/iterative.hpp"
#include "stirk/koopman.hpp"
#include "stirk/lifting.hpp"
#include "stirk/mpc.hpp"
#include "stirk/rng.hpp"
#include "stirk/training.hpp"

using namespace stirk;

namespace fs = std::filesystem;

namespace {

// Trajectories that follow x+ = A x + B u exactly, so with the identity
// dictionary the lifted recursion has a zero-loss solution at (A, B).
std::vector<Trajectory> linear_trajectories(const Mat& A, const Mat& B, int count, int steps,
                                            Rng& rng) {
    std::vector<Trajectory> out;
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    for (int k = 0; k < count; ++k) {
        Trajectory traj;
        traj.dt = 0.1;
        traj.states = Mat(steps + 1, n);
        traj.inputs = rng.normal_matrix(steps, m);
        Vec x = rng.normal_vector(n);
        traj.states.row(0) = x.transpose();
        for (int t = 0; t < steps; ++t) {
            x = A * x + B * traj.inputs.row(t).transpose();
            traj.states.row(t + 1) = x.transpose();
        }
        out.push_back(std::move(traj));
    }
    return out;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("stirk_integration_" + std::to_string(Rng(13).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

KoopmanModel exact_discrete_model(const SystemSpec& sys) {
    const int n = sys.n;
    const int m = sys.m;
    Mat Ad(n, n), Bd(n, m);
    for (int j = 0; j < n; ++j) Ad.col(j) = rk4_step(sys, Vec::Unit(n, j), Vec::Zero(m));
    for (int j = 0; j < m; ++j) Bd.col(j) = rk4_step(sys, Vec::Zero(n), Vec::Unit(m, j));
    KoopmanModel model;
    model.A = Ad;
    model.B = Bd;
    model.C = Mat::Identity(n, n);
    model.dictionary = Dictionary::identity(n);
    model.dt = sys.dt;
    return model;
}

double mean_of(const std::vector<int>& v) {
    double s = 0.0;
    for (int x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("training recovers an exact linear lifted system") {
    Rng rng(91);
    Mat A = rng.normal_matrix(3, 3);
    A *= 0.7 / spectral_radius(A);
    const Mat B = rng.normal_matrix(3, 1);
    const std::vector<Trajectory> trajs = linear_trajectories(A, B, 25, 12, rng);

    TrainConfig config;
    config.parameterization = Parameterization::standard;
    config.epochs = 900;
    config.optimizer_switch_epoch = 600;
    config.R_max = 8;
    config.batch_size = 1000;
    config.base_lr = 0.01;
    config.max_lr = 0.05;
    config.curriculum_period = 150;
    config.seed = 7;

    TrainInput input{make_windows(trajs, config.R_max), WindowSet{{}, config.R_max, 0},
                     Dictionary::identity(3), 0.1};
    const auto [model, history] = train(config, input);

    CHECK_FALSE(history.aborted);
    CHECK((model.A - A).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((model.B - B).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("vdp single-trajectory benchmark cell") {
    const Protocol proto = protocol_for("vdp-single");
    const double sigma = noise_levels()[8];  // 0.0599
    const Cell cell = build_cell(proto, sigma, 0, 2025);

    TrainConfig config = default_vdp_train_config();
    config.seed = 41;
    const TrainedCell trained = train_cell(proto, cell, config);

    CHECK_FALSE(trained.history.aborted);
    CHECK(trained.train_error <= 0.10);
    CHECK(spectral_radius(trained.model.A) < 1.0);
    CHECK(trained.history.records.size() == static_cast<std::size_t>(config.epochs));

    // The trained predictor should also beat the eDMD fit on the same
    // dictionary at this noise level.
    const BaselineCellResult base =
        baseline_cell(cell, Dictionary::polyflow(proto.system, config.polyflow_order),
                      proto.system.dt);
    CHECK(trained.train_error < base.train_error);
}

TEST_CASE("warm starting never raises the average iteration count") {
    SystemSpec sys;
    sys.name = "double-integrator";
    sys.n = 2;
    sys.m = 1;
    sys.dt = 0.05;
    sys.field = [](const Vec& x, const Vec& u) { return Vec{{x(1), u(0)}}; };

    const KoopmanModel model = exact_discrete_model(sys);
    MPCProblem problem;
    problem.A = model.A;
    problem.B = model.B;
    problem.C = model.C;
    problem.N_p = 20;
    problem.Q = Mat::Identity(2, 2);
    problem.Q_N = Mat::Identity(2, 2);
    problem.R_w = 0.01 * Mat::Identity(1, 1);
    problem.u_min = Vec::Constant(1, -1.0);
    problem.u_max = Vec::Constant(1, 1.0);

    Rng rng(55);
    int episodes_with_savings = 0;
    for (int ep = 0; ep < 20; ++ep) {
        const Vec x0 = 2.0 * rng.normal_vector(2);
        const ClosedLoopResult warm = closed_loop(sys, model, problem, x0, 40, Mat(), true);
        const ClosedLoopResult cold = closed_loop(sys, model, problem, x0, 40, Mat(), false);
        const double mean_warm = mean_of(warm.qp_iterations);
        const double mean_cold = mean_of(cold.qp_iterations);
        CHECK(mean_warm <= mean_cold);
        if (mean_warm < mean_cold) ++episodes_with_savings;
        // identical closed loops up to solver path: both must stabilize
        CHECK_FALSE(warm.diverged);
        CHECK_FALSE(cold.diverged);
    }
    CHECK(episodes_with_savings > 0);
}

TEST_CASE("closed-loop augmentation rounds") {
    const SystemSpec plant = make_cartpole();
    Protocol proto = protocol_for("cartpole");
    proto.steps = 40;
    proto.train_trajectories = 4;
    proto.val_trajectories = 0;
    const Cell cell = build_cell(proto, 0.05, 0, 99);

    IterateConfig config;
    config.train = default_cartpole_train_config();
    config.train.epochs = 30;
    config.train.optimizer_switch_epoch = 30;
    config.train.R_max = 8;
    config.train.polyflow_order = 2;
    config.train.seed = 3;
    config.mpc = default_cartpole_mpc();
    config.mpc.N_p = 10;
    config.collection.episode_steps = 30;
    config.collection.noise_sigma = 0.05;
    config.collection.seed = 12;
    config.rounds = 2;
    config.collect_ics = 2;
    config.eval_ics = 2;
    config.val_fraction = 0.2;
    config.seed = 5;

    const std::vector<IterationRound> rounds = iterate(config, plant, cell.train);
    REQUIRE(rounds.size() == 2);
    CHECK(rounds[0].round == 0);
    CHECK(rounds[1].round == 1);
    CHECK(rounds[0].collected.empty());
    CHECK(rounds[1].collected.size() <= 2);
    CHECK(rounds[1].n_windows >= rounds[0].n_windows);
    for (const Trajectory& traj : rounds[1].collected) {
        REQUIRE(traj.provenance.has_value());
        CHECK(traj.provenance->round == 1);
        CHECK(traj.provenance->task == "seen");
    }
    for (const IterationRound& r : rounds) {
        CHECK(r.costs_seen.size() == 2);
        CHECK(r.costs_unseen.size() == 2);
        for (double c : r.costs_seen) CHECK(std::isfinite(c));
    }

    TempDir tmp;
    write_round_summary(rounds, (tmp.path / "rounds.json").string(), "cafe", 5);
    write_round_costs_csv(rounds, (tmp.path / "costs.csv").string(), "cafe", 5);

    std::ifstream js(tmp.path / "rounds.json");
    nlohmann::json doc = nlohmann::json::parse(js);
    REQUIRE(doc.at("rounds").size() == 2);
    for (const auto& r : doc.at("rounds")) {
        CHECK(r.contains("round"));
        CHECK(r.contains("n_windows"));
        CHECK(r.contains("mean_cost_seen"));
        CHECK(r.contains("mean_cost_unseen"));
        CHECK(r.contains("failure_count"));
    }

    std::ifstream cs(tmp.path / "costs.csv");
    std::string line;
    std::getline(cs, line);
    CHECK(line.find("config_hash=cafe") != std::string::npos);

    // provenance survives the disk round trip
    const fs::path tpath = tmp.path / "collected.csv";
    write_trajectory(rounds[1].collected.front(), plant, tpath.string(), "cafe");
    const TrajectoryFile back = read_trajectory(tpath.string());
    REQUIRE(back.trajectory.provenance.has_value());
    CHECK(back.trajectory.provenance->round == 1);
}

TEST_CASE("worker count does not change results") {
    const Protocol proto = protocol_for("vdp-single");
    TrainConfig config = default_vdp_train_config();
    config.epochs = 60;
    config.optimizer_switch_epoch = 40;
    config.R_max = 8;

    const std::vector<int> noise_idx{0, 9};
    const std::vector<int> seed_idx{0, 1};
    auto run_with = [&](int workers) {
        std::vector<std::string> prints(4);
        parallel_for(4, workers, [&](int i) {
            const int ni = noise_idx[static_cast<std::size_t>(i / 2)];
            const int si = seed_idx[static_cast<std::size_t>(i % 2)];
            const Cell cell =
                build_cell(proto, noise_levels()[static_cast<std::size_t>(ni)], si, 7);
            TrainConfig tc = config;
            tc.seed = 1000 + static_cast<std::uint64_t>(i);
            const TrainedCell trained = train_cell(proto, cell, tc);
            prints[static_cast<std::size_t>(i)] =
                fingerprint(trained.model.A) + fingerprint(trained.model.B) +
                fingerprint(trained.train_error);
        });
        return prints;
    };

    const auto serial = run_with(1);
    const auto parallel = run_with(3);
    CHECK(serial == parallel);
}
