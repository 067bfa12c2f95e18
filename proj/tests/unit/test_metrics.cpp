#include <doctest.h>

#include <cmath>

#include "stirk/errors.hpp"
#include "stirk/rng.hpp"
#include "stirk/training.hpp"
#include "stirk/util.hpp"

using namespace stirk;

TEST_CASE("normalized error identities") {
    Rng rng(301);
    const Mat X = rng.normal_matrix(20, 3);

    CHECK(normalized_error(X, X) == 0.0);
    CHECK(normalized_error(Mat::Zero(20, 3), X) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(normalized_error(2.0 * X, X) == doctest::Approx(1.0).epsilon(1e-15));

    SUBCASE("scale invariance of the reference") {
        const Mat Y = rng.normal_matrix(20, 3);
        const double e = normalized_error(Y, X);
        CHECK(normalized_error(3.0 * Y, 3.0 * X) == doctest::Approx(e).epsilon(1e-12));
    }

    SUBCASE("a zero reference has no normalized error") {
        CHECK_THROWS_AS((void)normalized_error(X, Mat::Zero(20, 3)), UndefinedMetricError);
    }

    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS((void)normalized_error(X, Mat::Zero(5, 3)), DimensionError);
    }
}

TEST_CASE("per-timestep mse") {
    Rng rng(307);

    SUBCASE("identical inputs give zeros") {
        const Mat X = rng.normal_matrix(12, 4);
        CHECK(mse_per_timestep(X, X).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("constant offset squares through") {
        const Mat X = rng.normal_matrix(9, 4);
        const Mat Y = X.array() + 0.5;
        const Vec mse = mse_per_timestep(Y, X);
        REQUIRE(mse.size() == 9);
        for (int t = 0; t < 9; ++t) CHECK(mse[t] == doctest::Approx(0.25).epsilon(1e-14));
    }

    SUBCASE("matches the naive double loop") {
        const Mat X = rng.normal_matrix(30, 5);
        const Mat Y = rng.normal_matrix(30, 5);
        const Vec mse = mse_per_timestep(Y, X);
        for (int t = 0; t < 30; ++t) {
            double want = 0.0;
            for (int i = 0; i < 5; ++i) {
                const double d = Y(t, i) - X(t, i);
                want += d * d;
            }
            want /= 5.0;
            CHECK(std::abs(mse[t] - want) < 1e-12);
        }
    }
}

TEST_CASE("double formatting round-trips") {
    Rng rng(311);
    for (int t = 0; t < 200; ++t) {
        const double x = rng.normal() * std::pow(10.0, rng.uniform(-12.0, 12.0));
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("fnv1a hashing") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") != fnv1a64("b"));
    CHECK(fnv1a64_hex("abc") == fnv1a64_hex("abc"));
    CHECK(fnv1a64_hex("abc").size() == 16);
}
