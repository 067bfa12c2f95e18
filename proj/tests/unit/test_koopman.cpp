#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "stirk/errors.hpp"
#include "stirk/koopman.hpp"
#include "stirk/lifting.hpp"
#include "stirk/rng.hpp"

using namespace stirk;

namespace {

// theta such that softplus(theta) + 1e-6 == 1, i.e. d_i == -1.
double theta_for_unit_decay() {
    return std::log(std::expm1(1.0 - 1e-6));
}

double rel_err(const Mat& got, const Mat& want) {
    const double denom = std::max(want.norm(), 1e-300);
    return (got - want).norm() / denom;
}

}  // namespace

TEST_CASE("continuous assembly") {
    SUBCASE("zero skew part with unit decay gives -I") {
        DissipativeParams p;
        p.Q_raw = Mat::Zero(3, 3);
        p.theta_d = Vec::Constant(3, theta_for_unit_decay());
        p.P = Mat::Identity(3, 3);
        p.B = Mat::Zero(3, 1);
        p.dt = 0.1;
        const Mat At = assemble_continuous(p);
        CHECK(rel_err(At, -Mat::Identity(3, 3)) < 1e-12);
    }

    SUBCASE("diagonal equals the decay vector and the symmetric part is diagonal") {
        Rng rng(11);
        DissipativeParams p;
        p.Q_raw = rng.normal_matrix(5, 5);
        p.theta_d = rng.normal_vector(5);
        p.P = Mat::Identity(5, 5);
        p.B = Mat::Zero(5, 1);
        p.dt = 0.1;
        const Vec d = diagonal_decay(p.theta_d);
        const Mat At = assemble_continuous(p);
        CHECK((At.diagonal() - d).cwiseAbs().maxCoeff() < 1e-15);
        const Mat sym = At + At.transpose();
        CHECK(rel_err(sym, Mat(2.0 * d.asDiagonal())) < 1e-14);
        for (int i = 0; i < 5; ++i) CHECK(d[i] < 0.0);
    }

    SUBCASE("eigenvalue real parts are bounded by the slowest decay") {
        Rng rng(13);
        for (int t = 0; t < 20; ++t) {
            DissipativeParams p;
            p.Q_raw = rng.normal_matrix(6, 6);
            p.theta_d = rng.normal_vector(6);
            p.P = Mat::Identity(6, 6);
            p.B = Mat::Zero(6, 1);
            p.dt = 0.1;
            const Mat At = assemble_continuous(p);
            const double dmax = diagonal_decay(p.theta_d).maxCoeff();
            Eigen::EigenSolver<Mat> es(At);
            CHECK(es.eigenvalues().real().maxCoeff() <= dmax + 1e-10);
        }
    }
}

TEST_CASE("matrix exponential") {
    SUBCASE("exp(0) = I") {
        CHECK(matrix_exp(Mat::Zero(4, 4)) == Mat::Identity(4, 4));
    }

    SUBCASE("diagonal matrices exponentiate entrywise") {
        Vec a(3);
        a << -1.0, 0.5, 2.0;
        const Mat E = matrix_exp(Mat(a.asDiagonal()));
        for (int i = 0; i < 3; ++i)
            CHECK(E(i, i) == doctest::Approx(std::exp(a[i])).epsilon(1e-14));
        CHECK((E - Mat(E.diagonal().asDiagonal())).norm() == 0.0);
    }

    SUBCASE("symmetric case matches the eigendecomposition") {
        Rng rng(29);
        for (int t = 0; t < 25; ++t) {
            const Mat G = rng.normal_matrix(8, 8);
            const Mat S = 0.5 * (G + G.transpose());
            Eigen::SelfAdjointEigenSolver<Mat> es(S);
            const Mat want = es.eigenvectors() *
                             es.eigenvalues().array().exp().matrix().asDiagonal() *
                             es.eigenvectors().transpose();
            CHECK(rel_err(matrix_exp(S), want) < 1e-10);
        }
    }

    SUBCASE("exp(M) exp(-M) = I") {
        Rng rng(31);
        for (int t = 0; t < 25; ++t) {
            Mat M = rng.normal_matrix(6, 6);
            if (M.norm() > 5.0) M *= 5.0 / M.norm();
            CHECK(rel_err(matrix_exp(M) * matrix_exp(-M), Mat::Identity(6, 6)) < 1e-10);
        }
    }
}

TEST_CASE("exponential directional derivative") {
    Rng rng(37);

    SUBCASE("zero base point is linear in the direction") {
        const Mat E = rng.normal_matrix(4, 4);
        CHECK(rel_err(matrix_exp_directional(Mat::Zero(4, 4), E), E) < 1e-12);
    }

    SUBCASE("zero direction gives zero") {
        const Mat M = rng.normal_matrix(4, 4);
        CHECK(matrix_exp_directional(M, Mat::Zero(4, 4)).norm() == 0.0);
    }

    SUBCASE("matches central finite differences") {
        for (int t = 0; t < 10; ++t) {
            Mat M = rng.normal_matrix(4, 4);
            if (M.norm() > 3.0) M *= 3.0 / M.norm();
            const Mat E = rng.normal_matrix(4, 4);
            const double h = 1e-6;
            const Mat fd = (matrix_exp(M + h * E) - matrix_exp(M - h * E)) / (2.0 * h);
            CHECK(rel_err(matrix_exp_directional(M, E), fd) < 1e-6);
        }
    }
}

TEST_CASE("discrete operator") {
    SUBCASE("pure decay gives a scaled identity") {
        DissipativeParams p;
        p.Q_raw = Mat::Zero(3, 3);
        p.theta_d = Vec::Constant(3, theta_for_unit_decay());
        p.P = Mat::Identity(3, 3);
        p.B = Mat::Zero(3, 1);
        p.dt = 0.1;
        const auto [Ahat, A] = discrete_operator(p);
        CHECK(rel_err(A, std::exp(-0.1) * Mat::Identity(3, 3)) < 1e-13);
        CHECK(spectral_radius(A) == doctest::Approx(std::exp(-0.1)).epsilon(1e-12));
        CHECK(Ahat == A);
    }

    SUBCASE("vanishing decay pushes the radius toward one from below") {
        Rng rng(41);
        DissipativeParams p;
        p.Q_raw = rng.normal_matrix(4, 4);
        // softplus(-40) ~ 4e-18, so d ~ -1e-6.
        p.theta_d = Vec::Constant(4, -40.0);
        p.P = Mat::Identity(4, 4);
        p.B = Mat::Zero(4, 1);
        p.dt = 0.1;
        const auto [Ahat, A] = discrete_operator(p);
        const double rho = spectral_radius(A);
        CHECK(rho < 1.0);
        CHECK(rho > 1.0 - 1e-5);
    }

    SUBCASE("similarity transform preserves the spectral bound") {
        Rng rng(43);
        for (int t = 0; t < 30; ++t) {
            const DissipativeParams p = DissipativeParams::init(6, 2, 0.1, rng);
            const auto [Ahat, A] = discrete_operator(p);
            const double bound = std::exp(diagonal_decay(p.theta_d).maxCoeff() * p.dt);
            CHECK(spectral_radius(A) <= bound + 1e-10);
            CHECK(spectral_radius(A) < 1.0);
        }
    }

    SUBCASE("singular P raises a conditioning error") {
        DissipativeParams p;
        p.Q_raw = Mat::Zero(3, 3);
        p.theta_d = Vec::Constant(3, 0.0);
        p.P = Mat::Zero(3, 3);
        p.P(0, 0) = 1.0;
        p.B = Mat::Zero(3, 1);
        p.dt = 0.1;
        CHECK_THROWS_AS((void)discrete_operator(p), ConditioningError);
    }

    SUBCASE("nearly singular P raises with the condition estimate attached") {
        Mat P = Mat::Identity(3, 3);
        P(2, 2) = 1e-15;
        DissipativeParams p;
        p.Q_raw = Mat::Zero(3, 3);
        p.theta_d = Vec::Constant(3, 0.0);
        p.P = P;
        p.B = Mat::Zero(3, 1);
        p.dt = 0.1;
        try {
            (void)discrete_operator(p);
            FAIL("expected ConditioningError");
        } catch (const ConditioningError& e) {
            CHECK(e.condition_estimate > 1e12);
        }
    }
}

TEST_CASE("spectral radius") {
    SUBCASE("diagonal") {
        Mat A = Mat::Zero(2, 2);
        A(0, 0) = 0.5;
        A(1, 1) = -0.9;
        CHECK(spectral_radius(A) == doctest::Approx(0.9).epsilon(1e-14));
    }

    SUBCASE("rotation has radius one") {
        Mat R(2, 2);
        const double a = 0.7;
        R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
        CHECK(spectral_radius(R) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("random matrices agree with a repeated-squaring oracle") {
        // rho(A) = lim ||A^k||^(1/k); thirty squarings put k = 2^30 where the
        // polynomial bias of the norm is far below the tolerance.
        Rng rng(47);
        for (int t = 0; t < 10; ++t) {
            const Mat A = rng.normal_matrix(8, 8);
            Mat Ak = A;
            double s = 0.0;
            for (int j = 0; j < 30; ++j) {
                const double n = Ak.norm();
                s += std::log(n);
                Ak /= n;
                Ak = Ak * Ak;
                s *= 2.0;
            }
            const double k = std::ldexp(1.0, 30);
            const double oracle = std::exp((s + std::log(Ak.norm())) / k);
            CHECK(spectral_radius(A) == doctest::Approx(oracle).epsilon(1e-6));
        }
    }
}

TEST_CASE("lifted rollout") {
    const SystemSpec sys = make_vdp();
    const Dictionary dict = Dictionary::polyflow(sys, 2);
    Rng rng(53);

    auto make_model = [&](const Mat& A, const Mat& B) {
        KoopmanModel m;
        m.A = A;
        m.B = B;
        m.C = dict.output_matrix();
        m.dictionary = dict;
        m.dt = sys.dt;
        return m;
    };

    SUBCASE("identity dynamics hold the lifted state") {
        const KoopmanModel m = make_model(Mat::Identity(4, 4), Mat::Zero(4, 1));
        const Vec x0 = rng.normal_vector(2);
        const Mat inputs = rng.normal_matrix(10, 1);
        const RolloutResult r = rollout_predict(m, x0, inputs, 10);
        REQUIRE(r.lifted.rows() == 10);
        const Vec z0 = dict.lift(x0);
        for (int k = 0; k < 10; ++k)
            CHECK(r.lifted.row(k).transpose() == z0);
    }

    SUBCASE("zero A exposes the input map") {
        Mat B = rng.normal_matrix(4, 1);
        const KoopmanModel m = make_model(Mat::Zero(4, 4), B);
        const Mat inputs = rng.normal_matrix(6, 1);
        const RolloutResult r = rollout_predict(m, rng.normal_vector(2), inputs, 6);
        for (int k = 0; k < 6; ++k)
            CHECK(rel_err(r.lifted.row(k).transpose(), B * inputs.row(k).transpose()) < 1e-15);
    }

    SUBCASE("matches the closed-form linear response") {
        Mat A = rng.normal_matrix(4, 4);
        A *= 0.9 / spectral_radius(A);
        const Mat B = rng.normal_matrix(4, 1);
        const KoopmanModel m = make_model(A, B);
        const Vec x0 = rng.normal_vector(2);
        const int R = 20;
        const Mat inputs = rng.normal_matrix(R, 1);
        const RolloutResult r = rollout_predict(m, x0, inputs, R);
        Vec z = dict.lift(x0);
        for (int k = 0; k < R; ++k) {
            z = A * z + B * inputs.row(k).transpose();
            CHECK(rel_err(r.lifted.row(k).transpose(), z) < 1e-10);
            CHECK(rel_err(r.states.row(k).transpose(), m.C * z) < 1e-10);
        }
    }

    SUBCASE("too few inputs for the horizon is a dimension error") {
        const KoopmanModel m = make_model(Mat::Identity(4, 4), Mat::Zero(4, 1));
        CHECK_THROWS_AS(
            (void)rollout_predict(m, rng.normal_vector(2), Mat::Zero(3, 1), 5),
            DimensionError);
    }
}

TEST_CASE("model serialization") {
    const SystemSpec sys = make_vdp();
    const Dictionary dict = Dictionary::polyflow(sys, 3);
    Rng rng(59);

    KoopmanModel m;
    m.A = rng.normal_matrix(6, 6);
    m.B = rng.normal_matrix(6, 1);
    m.C = dict.output_matrix();
    m.dictionary = dict;
    m.dt = sys.dt;
    m.provenance.config_hash = "deadbeef";
    m.provenance.seed = 1234;

    SUBCASE("round trip is bitwise exact") {
        const KoopmanModel back = deserialize_model(serialize_model(m));
        CHECK(back.A == m.A);
        CHECK(back.B == m.B);
        CHECK(back.C == m.C);
        CHECK(back.dt == m.dt);
        CHECK(back.provenance.config_hash == "deadbeef");
        CHECK(back.provenance.seed == 1234);
        const Vec x = rng.normal_vector(2);
        CHECK(back.dictionary.lift(x) == dict.lift(x));
    }

    SUBCASE("file round trip") {
        namespace fs = std::filesystem;
        const fs::path p = fs::temp_directory_path() / "stirk_model_roundtrip.json";
        save_model(m, p.string());
        const KoopmanModel back = load_model(p.string());
        CHECK(back.A == m.A);
        CHECK(back.B == m.B);
        fs::remove(p);
    }

    SUBCASE("lifted dimension inconsistent with the dictionary is rejected") {
        auto j = serialize_model(m);
        j["N_phi"] = 4;
        CHECK_THROWS_AS((void)deserialize_model(j), DimensionError);
    }

    SUBCASE("matrix payload of the wrong length is rejected") {
        auto j = serialize_model(m);
        j["A"] = std::vector<double>{1.0, 2.0, 3.0};
        CHECK_THROWS_AS((void)deserialize_model(j), DimensionError);
    }

    SUBCASE("truncated file is a parse error") {
        namespace fs = std::filesystem;
        const fs::path p = fs::temp_directory_path() / "stirk_model_truncated.json";
        {
            std::ofstream out(p);
            out << serialize_model(m).dump().substr(0, 40);
        }
        CHECK_THROWS_AS((void)load_model(p.string()), ParseError);
        fs::remove(p);
    }

    SUBCASE("missing file is a parse error") {
        CHECK_THROWS_AS((void)load_model("/nonexistent/stirk/model.json"), ParseError);
    }
}
