#pragma once

#include <vector>

#include "stirk/koopman.hpp"
#include "stirk/lifting.hpp"
#include "stirk/types.hpp"

namespace stirk {

// One-step regression data: rows are consecutive in-trajectory pairs.
struct SnapshotPairs {
    Mat Z;    // K x N_phi lifted states
    Mat Zp;   // K x N_phi lifted successors
    Mat U;    // K x m inputs (zero columns for autonomous data)
};

SnapshotPairs build_snapshot_pairs(const std::vector<Trajectory>& trajectories,
                                   const Dictionary& dict);

struct LeastSquaresFit {
    Mat A;
    Mat B;
    int rank = 0;          // retained singular values
    Vec singular_values;   // of the stacked regressor
};

// Minimizes sum |z+ - A z - B u|^2 over (A, B) via SVD of the stacked
// regressor [z; u]; singular values below 1e-10 * sigma_max are truncated and
// the min-Frobenius-norm solution is returned when rank-deficient.
LeastSquaresFit edmd_fit(const SnapshotPairs& pairs);

// edmd_fit with the input block absent; bit-identical on the same data.
LeastSquaresFit dmd_fit(const SnapshotPairs& pairs);

KoopmanModel baseline_model(const LeastSquaresFit& fit, const Dictionary& dict, double dt);

struct BaselineEvaluation {
    std::vector<double> per_trajectory;  // NaN where prediction blew up
    double mean = 0.0;                   // NaN propagates
};

// Rollout from each trajectory's initial state over its full horizon,
// normalized error per trajectory; non-finite predictions record NaN.
BaselineEvaluation evaluate_baseline(const KoopmanModel& model,
                                     const std::vector<Trajectory>& test);

}  // namespace stirk
