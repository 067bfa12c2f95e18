#include "stirk/baselines.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "stirk/errors.hpp"
#include "stirk/training.hpp"

namespace stirk {

SnapshotPairs build_snapshot_pairs(const std::vector<Trajectory>& trajectories,
                                   const Dictionary& dict) {
    long total = 0;
    for (const auto& t : trajectories) total += t.steps();
    if (total == 0) throw InvalidStateError("no snapshot pairs in dataset");

    const int n_phi = dict.lifted_dim();
    const int m = trajectories.front().input_dim();
    SnapshotPairs pairs;
    pairs.Z.resize(total, n_phi);
    pairs.Zp.resize(total, n_phi);
    pairs.U.resize(total, m);
    long at = 0;
    for (const auto& t : trajectories) {
        const Mat lifted = dict.lift_states(t.states).transpose();  // (T+1) x N_phi
        const long T = t.steps();
        pairs.Z.middleRows(at, T) = lifted.topRows(T);
        pairs.Zp.middleRows(at, T) = lifted.bottomRows(T);
        if (m > 0) pairs.U.middleRows(at, T) = t.inputs;
        at += T;
    }
    return pairs;
}

LeastSquaresFit edmd_fit(const SnapshotPairs& pairs) {
    const long K = pairs.Z.rows();
    if (K < 1) throw InvalidStateError("edmd_fit: empty snapshot set");
    const long n_phi = pairs.Z.cols();
    const long m = pairs.U.cols();

    Mat G(K, n_phi + m);
    G.leftCols(n_phi) = pairs.Z;
    if (m > 0) G.rightCols(m) = pairs.U;

    Eigen::BDCSVD<Mat> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& sigma = svd.singularValues();
    const double cutoff = sigma.size() > 0 ? 1e-10 * sigma[0] : 0.0;
    int rank = 0;
    while (rank < sigma.size() && sigma[rank] > cutoff) ++rank;

    // Min-norm solution X = V * S^+ * U^T * Zp, so [A B] = X^T.
    const Mat Ut_Zp = svd.matrixU().leftCols(rank).transpose() * pairs.Zp;
    const Mat X = svd.matrixV().leftCols(rank) *
                  sigma.head(rank).cwiseInverse().asDiagonal() * Ut_Zp;

    LeastSquaresFit fit;
    fit.A = X.topRows(n_phi).transpose();
    fit.B = m > 0 ? Mat(X.bottomRows(m).transpose()) : Mat(n_phi, 0);
    fit.rank = rank;
    fit.singular_values = sigma;
    return fit;
}

LeastSquaresFit dmd_fit(const SnapshotPairs& pairs) {
    SnapshotPairs autonomous;
    autonomous.Z = pairs.Z;
    autonomous.Zp = pairs.Zp;
    autonomous.U = Mat(pairs.Z.rows(), 0);
    return edmd_fit(autonomous);
}

KoopmanModel baseline_model(const LeastSquaresFit& fit, const Dictionary& dict, double dt) {
    KoopmanModel model;
    model.A = fit.A;
    model.B = fit.B;
    model.C = dict.output_matrix();
    model.dictionary = dict;
    model.dt = dt;
    return model;
}

BaselineEvaluation evaluate_baseline(const KoopmanModel& model,
                                     const std::vector<Trajectory>& test) {
    BaselineEvaluation eval;
    eval.per_trajectory.reserve(test.size());
    double sum = 0.0;
    for (const auto& traj : test) {
        const long T = traj.steps();
        double err = std::numeric_limits<double>::quiet_NaN();
        try {
            const RolloutResult pred =
                rollout_predict(model, traj.states.row(0).transpose(), traj.inputs,
                                static_cast<int>(T));
            if (pred.states.allFinite())
                err = normalized_error(pred.states, traj.states.bottomRows(T));
        } catch (const DivergenceError&) {
        }
        eval.per_trajectory.push_back(err);
        sum += err;
    }
    eval.mean = test.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : sum / static_cast<double>(test.size());
    return eval;
}

}  // namespace stirk
