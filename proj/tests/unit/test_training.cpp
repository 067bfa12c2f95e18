#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stirk/dynamics.hpp"
#include "stirk/errors.hpp"
#include "stirk/rng.hpp"
#include "stirk/training.hpp"

using namespace stirk;

namespace {

// Windows drawn from a known linear lifted system z+ = A z + B u, identity
// dictionary, so the roll-out objective has a known zero at (A*, B*).
WindowSet linear_windows(const Mat& A, const Mat& B, int count, int len, Rng& rng) {
    std::vector<Trajectory> trajs;
    const Eigen::Index n = A.rows();
    const Eigen::Index m = B.cols();
    for (int k = 0; k < count; ++k) {
        Trajectory t;
        t.states = Mat(len + 1, n);
        t.inputs = rng.normal_matrix(len, m);
        t.dt = 0.1;
        Vec z = rng.normal_vector(n);
        t.states.row(0) = z.transpose();
        for (int r = 0; r < len; ++r) {
            z = A * z + B * t.inputs.row(r).transpose();
            t.states.row(r + 1) = z.transpose();
        }
        trajs.push_back(std::move(t));
    }
    return make_windows(trajs, len);
}

double max_rel_grad_err(const Vec& analytic, const Vec& numeric) {
    double worst = 0.0;
    const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-8);
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double denom = std::max(std::abs(numeric[i]), 1e-3 * scale);
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("rollout loss basics") {
    Rng rng(101);
    const Dictionary dict = Dictionary::identity(3);
    Mat A = rng.normal_matrix(3, 3);
    A *= 0.8 / spectral_radius(A);
    const Mat B = rng.normal_matrix(3, 1);
    WindowSet ws = linear_windows(A, B, 4, 6, rng);

    SUBCASE("the generating parameters have zero loss") {
        StandardParams p;
        p.A = A;
        p.B = B;
        CHECK(rollout_loss(p, ws, 6, dict) < 1e-24);
    }

    SUBCASE("zero parameters reduce to the mean lifted target norm") {
        StandardParams p;
        p.A = Mat::Zero(3, 3);
        p.B = Mat::Zero(3, 1);
        const int R = 3;
        double want = 0.0;
        for (const RolloutWindow& w : ws.windows)
            for (int r = 1; r <= R; ++r) want += w.states.row(r).squaredNorm();
        want /= static_cast<double>(ws.windows.size() * R);
        CHECK(rollout_loss(p, ws, R, dict) == doctest::Approx(want).epsilon(1e-12));
    }

    SUBCASE("R=1 equals the averaged one-step residual") {
        StandardParams p;
        p.A = rng.normal_matrix(3, 3) * 0.3;
        p.B = rng.normal_matrix(3, 1);
        double want = 0.0;
        for (const RolloutWindow& w : ws.windows) {
            const Vec pred = p.A * w.states.row(0).transpose() + p.B * w.inputs.row(0).transpose();
            want += (w.states.row(1).transpose() - pred).squaredNorm();
        }
        want /= static_cast<double>(ws.windows.size());
        CHECK(rollout_loss(p, ws, 1, dict) == doctest::Approx(want).epsilon(1e-12));
    }

    SUBCASE("horizon beyond the window length is rejected") {
        StandardParams p;
        p.A = A;
        p.B = B;
        CHECK_THROWS_AS((void)rollout_loss(p, ws, 7, dict), Error);
    }
}

TEST_CASE("analytic gradients") {
    SUBCASE("zero residual gives zero gradient") {
        Rng rng(103);
        const Dictionary dict = Dictionary::identity(2);
        Mat A = rng.normal_matrix(2, 2);
        A *= 0.7 / spectral_radius(A);
        const Mat B = rng.normal_matrix(2, 1);
        WindowSet ws = linear_windows(A, B, 3, 5, rng);
        StandardParams p;
        p.A = A;
        p.B = B;
        const auto g = std::get<StandardGrad>(loss_gradient(p, ws, 5, dict));
        CHECK(g.A.cwiseAbs().maxCoeff() < 1e-12);
        CHECK(g.B.cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("one-step input gradient matches the closed form") {
        Rng rng(107);
        const Dictionary dict = Dictionary::identity(2);
        Mat Astar = rng.normal_matrix(2, 2) * 0.4;
        const Mat Bstar = rng.normal_matrix(2, 1);
        WindowSet ws = linear_windows(Astar, Bstar, 5, 4, rng);
        StandardParams p;
        p.A = rng.normal_matrix(2, 2) * 0.3;
        p.B = rng.normal_matrix(2, 1);
        // d/dB mean |z_1 - (A z_0 + B u_0)|^2 = -(2/W) sum e_1 u_0'.
        Mat want = Mat::Zero(2, 1);
        for (const RolloutWindow& w : ws.windows) {
            const Vec pred = p.A * w.states.row(0).transpose() + p.B * w.inputs.row(0).transpose();
            const Vec e = w.states.row(1).transpose() - pred;
            want -= 2.0 * e * w.inputs.row(0);
        }
        want /= static_cast<double>(ws.windows.size());
        const auto g = std::get<StandardGrad>(loss_gradient(p, ws, 1, dict));
        CHECK((g.B - want).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("gradients match central finite differences") {
    // Mirrors the small-scale probe used for sign-off: lifted dimension 6,
    // horizon 5, both parameterizations, three seeds.
    const int n_phi = 6;
    const int m = 2;
    const int R = 5;
    const double h = 1e-6;

    for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
        CAPTURE(seed);
        Rng rng(seed);
        const Dictionary dict = Dictionary::identity(n_phi);
        Mat Atrue = rng.normal_matrix(n_phi, n_phi);
        Atrue *= 0.85 / spectral_radius(Atrue);
        const Mat Btrue = rng.normal_matrix(n_phi, m);
        WindowSet ws = linear_windows(Atrue, Btrue, 6, R, rng);

        SUBCASE("dissipative") {
            Rng prng = rng.child(1);
            const DissipativeParams p0 = DissipativeParams::init(n_phi, m, 0.1, prng);

            auto flatten = [&](const DissipativeParams& p) {
                Vec v(2 * n_phi * n_phi + n_phi + n_phi * m);
                Eigen::Index at = 0;
                for (Eigen::Index j = 0; j < n_phi; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) v[at++] = p.Q_raw(i, j);
                for (Eigen::Index i = 0; i < n_phi; ++i) v[at++] = p.theta_d[i];
                for (Eigen::Index j = 0; j < n_phi; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) v[at++] = p.P(i, j);
                for (Eigen::Index j = 0; j < m; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) v[at++] = p.B(i, j);
                return v;
            };
            auto unflatten = [&](const Vec& v) {
                DissipativeParams p = p0;
                Eigen::Index at = 0;
                for (Eigen::Index j = 0; j < n_phi; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) p.Q_raw(i, j) = v[at++];
                for (Eigen::Index i = 0; i < n_phi; ++i) p.theta_d[i] = v[at++];
                for (Eigen::Index j = 0; j < n_phi; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) p.P(i, j) = v[at++];
                for (Eigen::Index j = 0; j < m; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) p.B(i, j) = v[at++];
                return p;
            };

            const auto g = std::get<DissipativeGrad>(loss_gradient(p0, ws, R, dict));
            const Vec ga = flatten([&] {
                DissipativeParams tmp = p0;
                tmp.Q_raw = g.Q_raw;
                tmp.theta_d = g.theta_d;
                tmp.P = g.P;
                tmp.B = g.B;
                return tmp;
            }());

            const Vec x0 = flatten(p0);
            Vec gn(x0.size());
            for (Eigen::Index i = 0; i < x0.size(); ++i) {
                Vec xp = x0, xm = x0;
                xp[i] += h;
                xm[i] -= h;
                gn[i] = (rollout_loss(unflatten(xp), ws, R, dict) -
                         rollout_loss(unflatten(xm), ws, R, dict)) /
                        (2.0 * h);
            }
            CHECK(max_rel_grad_err(ga, gn) < 1e-5);
        }

        SUBCASE("standard") {
            Rng prng = rng.child(2);
            const StandardParams p0 = StandardParams::init(n_phi, m, 0.1, prng);

            auto flatten = [&](const Mat& A, const Mat& B) {
                Vec v(n_phi * n_phi + n_phi * m);
                Eigen::Index at = 0;
                for (Eigen::Index j = 0; j < n_phi; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) v[at++] = A(i, j);
                for (Eigen::Index j = 0; j < m; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) v[at++] = B(i, j);
                return v;
            };
            auto unflatten = [&](const Vec& v) {
                StandardParams p = p0;
                Eigen::Index at = 0;
                for (Eigen::Index j = 0; j < n_phi; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) p.A(i, j) = v[at++];
                for (Eigen::Index j = 0; j < m; ++j)
                    for (Eigen::Index i = 0; i < n_phi; ++i) p.B(i, j) = v[at++];
                return p;
            };

            const auto g = std::get<StandardGrad>(loss_gradient(p0, ws, R, dict));
            const Vec ga = flatten(g.A, g.B);
            const Vec x0 = flatten(p0.A, p0.B);
            Vec gn(x0.size());
            for (Eigen::Index i = 0; i < x0.size(); ++i) {
                Vec xp = x0, xm = x0;
                xp[i] += h;
                xm[i] -= h;
                gn[i] = (rollout_loss(unflatten(xp), ws, R, dict) -
                         rollout_loss(unflatten(xm), ws, R, dict)) /
                        (2.0 * h);
            }
            CHECK(max_rel_grad_err(ga, gn) < 1e-5);
        }
    }
}

TEST_CASE("learning rate schedule") {
    TrainConfig cfg;
    cfg.base_lr = 0.01;
    cfg.max_lr = 0.1;
    cfg.lr_cycle_half_period = 500;
    cfg.lr_schedule = LrSchedule::cyclic;

    CHECK(cyclic_lr(0, cfg) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(cyclic_lr(500, cfg) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(cyclic_lr(1000, cfg) == doctest::Approx(0.01).epsilon(1e-12));
    // Second cycle peaks at base + (max-base)/2.
    CHECK(cyclic_lr(1500, cfg) == doctest::Approx(0.055).epsilon(1e-12));
    CHECK(cyclic_lr(2000, cfg) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(cyclic_lr(2500, cfg) == doctest::Approx(0.0325).epsilon(1e-12));

    SUBCASE("constant schedule pins the base rate") {
        cfg.lr_schedule = LrSchedule::constant;
        for (int e : {0, 250, 500, 5000}) CHECK(cyclic_lr(e, cfg) == 0.01);
    }
}

TEST_CASE("rollout curriculum") {
    TrainConfig cfg;
    cfg.curriculum_period = 200;
    cfg.R_max = 90;
    cfg.progressive_rollout = true;

    CHECK(curriculum_R(0, cfg) == 1);
    CHECK(curriculum_R(199, cfg) == 1);
    CHECK(curriculum_R(200, cfg) == 2);
    CHECK(curriculum_R(399, cfg) == 2);
    CHECK(curriculum_R(400, cfg) == 4);
    CHECK(curriculum_R(10000, cfg) == 90);

    int prev = 0;
    for (int e = 0; e < 3000; ++e) {
        const int r = curriculum_R(e, cfg);
        CHECK(r >= prev);
        prev = r;
    }

    SUBCASE("disabled curriculum trains at the cap from the start") {
        cfg.progressive_rollout = false;
        CHECK(curriculum_R(0, cfg) == 90);
    }
}

TEST_CASE("train smoke") {
    Rng rng(211);
    const Dictionary dict = Dictionary::identity(3);
    Mat A = rng.normal_matrix(3, 3);
    A *= 0.8 / spectral_radius(A);
    const Mat B = rng.normal_matrix(3, 1);

    TrainInput data;
    data.dictionary = dict;
    data.dt = 0.1;
    data.train_windows = linear_windows(A, B, 30, 10, rng);
    data.dt = 0.1;

    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 16;
    cfg.R_max = 10;
    cfg.curriculum_period = 10;
    cfg.optimizer_switch_epoch = 40;
    cfg.seed = 5;

    SUBCASE("zero epochs returns the freshly initialized model") {
        TrainConfig c0 = cfg;
        c0.epochs = 0;
        const auto [model, hist] = train(c0, data);
        CHECK(hist.records.empty());
        CHECK(model.A.rows() == 3);
        CHECK(spectral_radius(model.A) < 1.0);
    }

    SUBCASE("loss decreases and the radius stays inside the disk") {
        const auto [model, hist] = train(cfg, data);
        REQUIRE(hist.records.size() == 40);
        CHECK(hist.records.back().train_loss < hist.records.front().train_loss);
        for (const EpochRecord& r : hist.records) {
            CHECK(r.spectral_radius < 1.0);
            CHECK(std::isfinite(r.train_loss));
        }
        CHECK_FALSE(hist.aborted);
    }

    SUBCASE("training is bitwise deterministic") {
        const auto [m1, h1] = train(cfg, data);
        const auto [m2, h2] = train(cfg, data);
        CHECK(m1.A == m2.A);
        CHECK(m1.B == m2.B);
        REQUIRE(h1.records.size() == h2.records.size());
        for (std::size_t i = 0; i < h1.records.size(); ++i)
            CHECK(h1.records[i].train_loss == h2.records[i].train_loss);
    }

    SUBCASE("standard parameterization trains too") {
        TrainConfig cs = cfg;
        cs.parameterization = Parameterization::standard;
        const auto [model, hist] = train(cs, data);
        CHECK(hist.records.back().train_loss < hist.records.front().train_loss);
    }
}

TEST_CASE("train config serialization") {
    TrainConfig cfg;
    cfg.epochs = 321;
    cfg.batch_size = 77;
    cfg.base_lr = 0.002;
    cfg.max_lr = 0.02;
    cfg.R_max = 12;
    cfg.seed = 99;
    cfg.parameterization = Parameterization::standard;
    cfg.lr_schedule = LrSchedule::constant;
    cfg.progressive_rollout = false;
    cfg.freeze_P = true;

    const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
    CHECK(back.epochs == 321);
    CHECK(back.batch_size == 77);
    CHECK(back.base_lr == 0.002);
    CHECK(back.max_lr == 0.02);
    CHECK(back.R_max == 12);
    CHECK(back.seed == 99);
    CHECK(back.parameterization == Parameterization::standard);
    CHECK(back.lr_schedule == LrSchedule::constant);
    CHECK_FALSE(back.progressive_rollout);
    CHECK(back.freeze_P);

    SUBCASE("unknown enum text is rejected") {
        auto j = train_config_to_json(cfg);
        j["parameterization"] = "bogus";
        CHECK_THROWS_AS((void)train_config_from_json(j), ConfigError);
    }
}

TEST_CASE("history csv layout") {
    TrainHistory hist;
    EpochRecord r;
    r.epoch = 0;
    r.R = 1;
    r.lr = 0.01;
    r.train_loss = 0.5;
    r.val_loss = 0.6;
    r.spectral_radius = 0.97;
    r.wall_time_s = 0.125;
    hist.records.push_back(r);
    r.epoch = 1;
    r.train_loss = 0.25;
    hist.records.push_back(r);

    namespace fs = std::filesystem;
    const fs::path p = fs::temp_directory_path() / "stirk_history_test.csv";
    write_history_csv(hist, p.string(), "feedf00d", 17);

    std::ifstream in(p);
    std::string meta;
    std::getline(in, meta);
    CHECK(meta == "# config_hash=feedf00d seed=17");
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,R,lr,train_loss,val_loss,spectral_radius,wall_time_s");
    std::string line1;
    std::getline(in, line1);
    CHECK(line1.substr(0, 2) == "0,");
    CHECK(line1.find("0.5") != std::string::npos);
    int rows = 1;
    std::string rest;
    while (std::getline(in, rest))
        if (!rest.empty()) ++rows;
    CHECK(rows == 2);
    fs::remove(p);
}
