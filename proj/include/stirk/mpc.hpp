#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stirk/dynamics.hpp"
#include "stirk/koopman.hpp"
#include "stirk/types.hpp"

namespace stirk {

struct MPCProblem {
    Mat A;
    Mat B;
    Mat C;
    int N_p = 20;
    Mat Q;        // n x n stage output-error weight
    Mat Q_N;      // n x n terminal weight
    Mat R_w;      // m x m input weight
    Vec u_min;
    Vec u_max;
    Mat reference;  // up to N_p rows of n; short references hold the last row,
                    // empty means the origin
    Vec z_min;      // lifted-state bounds are rejected if any entry is finite
    Vec z_max;
};

struct CondensedQP {
    Mat H;      // (N_p*m)^2, symmetric PSD
    Vec g;
    Vec lb;
    Vec ub;
    double c0 = 0.0;
};

// Eliminates the lifted states through z_k = A^k z0 + sum A^(k-1-j) B u_j.
// The resulting J(U) = 1/2 U'HU + g'U + c0 equals the explicit stage-cost sum
// with errors e_k = r_k - C z_k weighted by Q for k < N_p and Q_N at k = N_p.
CondensedQP condense(const MPCProblem& problem, const Vec& z0);

struct QPSolution {
    Vec U;
    int iterations = 0;
    double pg_norm = 0.0;
    double kkt_residual = 0.0;
    bool hit_iteration_cap = false;
};

// Projected accelerated gradient descent with adaptive restart; stops when the
// projected-gradient norm drops below 1e-8 or after 10,000 iterations.
QPSolution solve_box_qp(const CondensedQP& qp, const Vec* warm_start = nullptr);

// Precomputed condensation blocks for one (model, weights) pair so the
// per-step work is a few small matrix-vector products.
class CondensedController {
  public:
    CondensedController(const KoopmanModel& model, const MPCProblem& problem);

    CondensedQP qp(const Vec& z0, const Mat& reference_window) const;

    struct StepResult {
        Vec u0;
        Vec U;
        int iterations = 0;
        double kkt_residual = 0.0;
        bool hit_iteration_cap = false;
    };

    // Lifts the measured state, condenses, solves, returns the first input.
    StepResult step(const Vec& x, const Mat& reference_window,
                    const Vec* warm_start = nullptr) const;

    int horizon() const { return problem_.N_p; }
    int input_dim() const { return m_; }
    const MPCProblem& problem() const { return problem_; }

  private:
    KoopmanModel model_;
    MPCProblem problem_;
    int m_ = 0;
    Mat S_;       // (N_p*N_phi) x (N_p*m) block prediction matrix
    Mat M_;       // (N_p*N_phi) x N_phi free-response stack
    Mat SQ_;      // S' Qbar
    Mat H_;
    Vec lb_, ub_;
    double hessian_L_ = 0.0;
    Mat Qbar_blocks_;  // N_phi x (N_p*N_phi), k-th block C'Q_k C
};

struct ClosedLoopResult {
    Trajectory trajectory;
    double realized_cost = 0.0;      // stage costs plus terminal error term
    std::vector<int> qp_iterations;
    std::vector<double> qp_residuals;
    std::vector<double> stage_costs;
    int cap_warnings = 0;
    bool diverged = false;
};

// Receding horizon on the true plant: measure, solve, apply only the first
// input. References past the given matrix are held at its last row.
ClosedLoopResult closed_loop(const SystemSpec& plant, const KoopmanModel& model,
                             const MPCProblem& problem, const Vec& x0, int steps,
                             const Mat& reference, bool warm_start = true);

void write_episode_csv(const ClosedLoopResult& result, const std::string& path,
                       const std::string& config_hash, std::uint64_t seed);

}  // namespace stirk
