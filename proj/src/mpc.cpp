#include "stirk/mpc.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Eigenvalues>

#include "stirk/errors.hpp"
#include "stirk/util.hpp"

namespace stirk {

namespace {

void check_weights(const MPCProblem& p, int n, int m) {
    if (p.N_p < 1) throw InvalidStateError("mpc: N_p must be >= 1");
    if (p.Q.rows() != n || p.Q.cols() != n || p.Q_N.rows() != n || p.Q_N.cols() != n)
        throw DimensionError("mpc: Q/Q_N must be n x n");
    if (p.R_w.rows() != m || p.R_w.cols() != m)
        throw DimensionError("mpc: R_w must be m x m");
    if (p.u_min.size() != m || p.u_max.size() != m)
        throw DimensionError("mpc: input bounds must have length m");
    auto sym = [](const Mat& W) {
        return (W - W.transpose()).cwiseAbs().maxCoeff() <=
               1e-12 * (1.0 + W.cwiseAbs().maxCoeff());
    };
    if (!sym(p.Q) || !sym(p.Q_N) || !sym(p.R_w))
        throw InvalidStateError("mpc: weights must be symmetric");
    for (int i = 0; i < m; ++i)
        if (p.u_min[i] > p.u_max[i]) throw InvalidStateError("mpc: u_min > u_max");
    for (const Vec* zb : {&p.z_min, &p.z_max})
        for (long i = 0; i < zb->size(); ++i)
            if (std::isfinite((*zb)[i]))
                throw UnsupportedConstraintError("lifted-state bounds are not supported");
}

// r_k for k = 1..N_p from a window that may be short or empty.
Vec reference_row(const Mat& reference, int k, int n) {
    if (reference.rows() == 0) return Vec::Zero(n);
    const long row = std::min<long>(k - 1, reference.rows() - 1);
    return reference.row(row).transpose();
}

struct Blocks {
    Mat S;    // (N_p*n_phi) x (N_p*m)
    Mat M;    // (N_p*n_phi) x n_phi
    Mat Qbar; // n_phi x (N_p*n_phi), k-th block C'Q_k C
};

Blocks build_blocks(const Mat& A, const Mat& B, const Mat& C, const Mat& Q, const Mat& Q_N,
                    int N_p) {
    const int n_phi = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    Blocks bl;
    bl.S = Mat::Zero(static_cast<long>(N_p) * n_phi, static_cast<long>(N_p) * m);
    bl.M.resize(static_cast<long>(N_p) * n_phi, n_phi);
    bl.Qbar.resize(n_phi, static_cast<long>(N_p) * n_phi);

    std::vector<Mat> powB(static_cast<std::size_t>(N_p));  // A^p B
    powB[0] = B;
    for (int p = 1; p < N_p; ++p) powB[static_cast<std::size_t>(p)] = A * powB[p - 1];

    Mat Ak = A;
    for (int k = 1; k <= N_p; ++k) {
        bl.M.middleRows(static_cast<long>(k - 1) * n_phi, n_phi) = Ak;
        if (k < N_p) Ak = A * Ak;
        for (int j = 0; j < k; ++j)
            bl.S.block(static_cast<long>(k - 1) * n_phi, static_cast<long>(j) * m, n_phi, m) =
                powB[static_cast<std::size_t>(k - 1 - j)];
        const Mat& Qk = (k == N_p) ? Q_N : Q;
        bl.Qbar.middleCols(static_cast<long>(k - 1) * n_phi, n_phi) =
            C.transpose() * Qk * C;
    }
    return bl;
}

}  // namespace

CondensedQP condense(const MPCProblem& problem, const Vec& z0) {
    const int n_phi = static_cast<int>(problem.A.rows());
    const int m = static_cast<int>(problem.B.cols());
    const int n = static_cast<int>(problem.C.rows());
    check_weights(problem, n, m);
    if (z0.size() != n_phi) throw DimensionError("condense: z0 length mismatch");

    const int N_p = problem.N_p;
    const Blocks bl = build_blocks(problem.A, problem.B, problem.C, problem.Q, problem.Q_N, N_p);

    Mat QS(static_cast<long>(N_p) * n_phi, static_cast<long>(N_p) * m);
    for (int k = 0; k < N_p; ++k)
        QS.middleRows(static_cast<long>(k) * n_phi, n_phi) =
            bl.Qbar.middleCols(static_cast<long>(k) * n_phi, n_phi) *
            bl.S.middleRows(static_cast<long>(k) * n_phi, n_phi);

    CondensedQP qp;
    qp.H = 2.0 * (bl.S.transpose() * QS);
    for (int k = 0; k < N_p; ++k)
        qp.H.block(static_cast<long>(k) * m, static_cast<long>(k) * m, m, m) += 2.0 * problem.R_w;
    qp.H = ((qp.H + qp.H.transpose()) * 0.5).eval();

    const Vec omega = bl.M * z0;
    Vec Qomega(omega.size());
    Vec v(omega.size());
    double rQr = 0.0;
    for (int k = 1; k <= N_p; ++k) {
        const Mat& Qk_lift = bl.Qbar.middleCols(static_cast<long>(k - 1) * n_phi, n_phi);
        const auto wk = omega.segment(static_cast<long>(k - 1) * n_phi, n_phi);
        Qomega.segment(static_cast<long>(k - 1) * n_phi, n_phi) = Qk_lift * wk;
        const Vec rk = reference_row(problem.reference, k, n);
        const Mat& Qk = (k == N_p) ? problem.Q_N : problem.Q;
        const Vec Qr = Qk * rk;
        v.segment(static_cast<long>(k - 1) * n_phi, n_phi) = problem.C.transpose() * Qr;
        rQr += rk.dot(Qr);
    }
    qp.g = 2.0 * (bl.S.transpose() * (Qomega - v));
    qp.c0 = omega.dot(Qomega) - 2.0 * v.dot(omega) + rQr;

    qp.lb.resize(static_cast<long>(N_p) * m);
    qp.ub.resize(static_cast<long>(N_p) * m);
    for (int k = 0; k < N_p; ++k) {
        qp.lb.segment(static_cast<long>(k) * m, m) = problem.u_min;
        qp.ub.segment(static_cast<long>(k) * m, m) = problem.u_max;
    }
    return qp;
}

QPSolution solve_box_qp(const CondensedQP& qp, const Vec* warm_start) {
    const long dim = qp.g.size();
    if (qp.H.rows() != dim || qp.H.cols() != dim || qp.lb.size() != dim || qp.ub.size() != dim)
        throw DimensionError("solve_box_qp: inconsistent dimensions");

    auto proj = [&](const Vec& x) { return x.cwiseMax(qp.lb).cwiseMin(qp.ub); };

    if (dim == 0) return QPSolution{Vec(0), 0, 0.0, 0.0, false};

    Eigen::SelfAdjointEigenSolver<Mat> es(qp.H, Eigen::EigenvaluesOnly);
    const double L = std::max(es.eigenvalues().maxCoeff(), 1e-12);

    QPSolution sol;
    Vec x = warm_start != nullptr ? proj(*warm_start) : proj(Vec::Zero(dim));
    Vec y = x;
    double t = 1.0;

    Vec grad = qp.H * x + qp.g;
    Vec pg = x - proj(x - grad);
    sol.pg_norm = pg.norm();
    constexpr int kMaxIter = 10000;
    int iter = 0;
    while (sol.pg_norm >= 1e-8 && iter < kMaxIter) {
        ++iter;
        const Vec grad_y = qp.H * y + qp.g;
        Vec x_new = proj(y - grad_y / L);
        if ((y - x_new).dot(x_new - x) > 0.0) {
            t = 1.0;
            y = x_new;
        } else {
            const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = x_new + ((t - 1.0) / t_new) * (x_new - x);
            t = t_new;
        }
        x = std::move(x_new);
        grad = qp.H * x + qp.g;
        pg = x - proj(x - grad);
        sol.pg_norm = pg.norm();
    }
    sol.iterations = iter;
    sol.hit_iteration_cap = iter >= kMaxIter && sol.pg_norm >= 1e-8;

    double kkt = 0.0;
    for (long i = 0; i < dim; ++i) {
        double viol;
        if (x[i] <= qp.lb[i])
            viol = std::max(0.0, -grad[i]);
        else if (x[i] >= qp.ub[i])
            viol = std::max(0.0, grad[i]);
        else
            viol = std::abs(grad[i]);
        kkt = std::max(kkt, viol);
    }
    sol.kkt_residual = kkt;
    sol.U = std::move(x);
    return sol;
}

CondensedController::CondensedController(const KoopmanModel& model, const MPCProblem& problem)
    : model_(model), problem_(problem) {
    problem_.A = model.A;
    problem_.B = model.B;
    problem_.C = model.C;
    const int n_phi = model.lifted_dim();
    m_ = model.input_dim();
    check_weights(problem_, model.state_dim(), m_);

    const Blocks bl =
        build_blocks(problem_.A, problem_.B, problem_.C, problem_.Q, problem_.Q_N, problem_.N_p);
    S_ = bl.S;
    M_ = bl.M;
    Qbar_blocks_ = bl.Qbar;

    Mat QS(S_.rows(), S_.cols());
    for (int k = 0; k < problem_.N_p; ++k)
        QS.middleRows(static_cast<long>(k) * n_phi, n_phi) =
            Qbar_blocks_.middleCols(static_cast<long>(k) * n_phi, n_phi) *
            S_.middleRows(static_cast<long>(k) * n_phi, n_phi);
    SQ_ = QS.transpose();  // S' Qbar, with Qbar symmetric blockwise

    H_ = 2.0 * (SQ_ * S_);
    for (int k = 0; k < problem_.N_p; ++k)
        H_.block(static_cast<long>(k) * m_, static_cast<long>(k) * m_, m_, m_) +=
            2.0 * problem_.R_w;
    H_ = ((H_ + H_.transpose()) * 0.5).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(H_, Eigen::EigenvaluesOnly);
    hessian_L_ = std::max(es.eigenvalues().maxCoeff(), 1e-12);

    lb_.resize(static_cast<long>(problem_.N_p) * m_);
    ub_.resize(static_cast<long>(problem_.N_p) * m_);
    for (int k = 0; k < problem_.N_p; ++k) {
        lb_.segment(static_cast<long>(k) * m_, m_) = problem_.u_min;
        ub_.segment(static_cast<long>(k) * m_, m_) = problem_.u_max;
    }
}

CondensedQP CondensedController::qp(const Vec& z0, const Mat& reference_window) const {
    const int n_phi = model_.lifted_dim();
    const int n = model_.state_dim();
    const Vec omega = M_ * z0;
    Vec Qomega(omega.size());
    Vec v(omega.size());
    double rQr = 0.0;
    for (int k = 1; k <= problem_.N_p; ++k) {
        const auto Qk_lift = Qbar_blocks_.middleCols(static_cast<long>(k - 1) * n_phi, n_phi);
        Qomega.segment(static_cast<long>(k - 1) * n_phi, n_phi) =
            Qk_lift * omega.segment(static_cast<long>(k - 1) * n_phi, n_phi);
        const Vec rk = reference_row(reference_window, k, n);
        const Mat& Qk = (k == problem_.N_p) ? problem_.Q_N : problem_.Q;
        const Vec Qr = Qk * rk;
        v.segment(static_cast<long>(k - 1) * n_phi, n_phi) = problem_.C.transpose() * Qr;
        rQr += rk.dot(Qr);
    }
    CondensedQP qp;
    qp.H = H_;
    qp.g = 2.0 * (S_.transpose() * (Qomega - v));
    qp.c0 = omega.dot(Qomega) - 2.0 * v.dot(omega) + rQr;
    qp.lb = lb_;
    qp.ub = ub_;
    return qp;
}

CondensedController::StepResult CondensedController::step(const Vec& x,
                                                          const Mat& reference_window,
                                                          const Vec* warm_start) const {
    const Vec z0 = model_.dictionary.lift(x);
    const CondensedQP q = qp(z0, reference_window);
    const QPSolution sol = solve_box_qp(q, warm_start);
    StepResult out;
    out.u0 = sol.U.head(m_);
    out.U = sol.U;
    out.iterations = sol.iterations;
    out.kkt_residual = sol.kkt_residual;
    out.hit_iteration_cap = sol.hit_iteration_cap;
    return out;
}

ClosedLoopResult closed_loop(const SystemSpec& plant, const KoopmanModel& model,
                             const MPCProblem& problem, const Vec& x0, int steps,
                             const Mat& reference, bool warm_start) {
    if (steps < 1) throw InvalidStateError("closed_loop: steps must be >= 1");
    if (x0.size() != plant.n) throw DimensionError("closed_loop: x0 length mismatch");
    const CondensedController controller(model, problem);
    const int n = plant.n;
    const int m = plant.m;
    const int N_p = problem.N_p;

    // r_t for any absolute step, holding the last row past the end.
    auto ref_at = [&](int t) -> Vec {
        if (reference.rows() == 0) return Vec::Zero(n);
        return reference.row(std::min<long>(t, reference.rows() - 1)).transpose();
    };
    auto window_at = [&](int t) {
        Mat win(N_p, n);
        for (int k = 1; k <= N_p; ++k) win.row(k - 1) = ref_at(t + k).transpose();
        return win;
    };

    ClosedLoopResult result;
    result.trajectory.states.resize(steps + 1, n);
    result.trajectory.inputs.resize(steps, m);
    result.trajectory.dt = plant.dt;
    result.trajectory.states.row(0) = x0.transpose();

    Vec x = x0;
    Vec prev_U;
    int done = 0;
    for (int t = 0; t < steps; ++t) {
        Vec warm;
        const Vec* warm_ptr = nullptr;
        if (warm_start && prev_U.size() > 0) {
            warm.resize(prev_U.size());
            warm.head(prev_U.size() - m) = prev_U.tail(prev_U.size() - m);
            warm.tail(m) = prev_U.tail(m);
            warm_ptr = &warm;
        }
        CondensedController::StepResult sr;
        try {
            sr = controller.step(x, window_at(t), warm_ptr);
        } catch (const DivergenceError&) {
            result.diverged = true;
            break;
        }
        prev_U = sr.U;
        if (sr.hit_iteration_cap) ++result.cap_warnings;

        const Vec e = ref_at(t) - x;
        const double stage = e.dot(problem.Q * e) + sr.u0.dot(problem.R_w * sr.u0);
        result.stage_costs.push_back(stage);
        result.realized_cost += stage;
        result.qp_iterations.push_back(sr.iterations);
        result.qp_residuals.push_back(sr.kkt_residual);
        result.trajectory.inputs.row(t) = sr.u0.transpose();

        try {
            x = rk4_step(plant, x, sr.u0);
        } catch (const DivergenceError&) {
            result.diverged = true;
            break;
        }
        if (!x.allFinite()) {
            result.diverged = true;
            break;
        }
        result.trajectory.states.row(t + 1) = x.transpose();
        done = t + 1;
    }

    if (result.diverged) {
        result.trajectory.states.conservativeResize(done + 1, n);
        result.trajectory.inputs.conservativeResize(done, m);
    } else {
        const Vec e_final = ref_at(steps) - x;
        result.realized_cost += e_final.dot(problem.Q_N * e_final);
    }
    return result;
}

void write_episode_csv(const ClosedLoopResult& result, const std::string& path,
                       const std::string& config_hash, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "# config_hash=" << config_hash << " seed=" << seed << '\n';
    const long n = result.trajectory.states.cols();
    const long m = result.trajectory.inputs.cols();
    out << "step";
    for (long i = 1; i <= n; ++i) out << ",x" << i;
    for (long i = 1; i <= m; ++i) out << ",u" << i;
    out << ",stage_cost,qp_iters,qp_residual\n";
    const long T = result.trajectory.inputs.rows();
    for (long t = 0; t <= T; ++t) {
        out << t;
        for (long i = 0; i < n; ++i)
            out << ',' << format_double(result.trajectory.states(t, i));
        if (t < T) {
            for (long i = 0; i < m; ++i)
                out << ',' << format_double(result.trajectory.inputs(t, i));
            out << ',' << format_double(result.stage_costs[static_cast<std::size_t>(t)]) << ','
                << result.qp_iterations[static_cast<std::size_t>(t)] << ','
                << format_double(result.qp_residuals[static_cast<std::size_t>(t)]);
        } else {
            for (long i = 0; i < m + 3; ++i) out << ',';
        }
        out << '\n';
    }
    if (!out) throw Error("write failed for " + path);
}

}  // namespace stirk
