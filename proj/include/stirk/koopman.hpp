#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <json.hpp>

#include "stirk/lifting.hpp"
#include "stirk/rng.hpp"
#include "stirk/types.hpp"

namespace stirk {

// Learnable parameters of the dissipative (guaranteed-stable) operator.
// The continuous generator is Q - Q^T + diag(d) with d_i = -softplus(theta_d_i) - 1e-6,
// so every eigenvalue has strictly negative real part no matter what the
// optimizer does to the raw parameters.
struct DissipativeParams {
    Mat Q_raw;     // N_phi x N_phi
    Vec theta_d;   // N_phi raw diagonal parameters
    Mat P;         // N_phi x N_phi coordinate transform
    Mat B;         // N_phi x m
    double dt = 0.0;

    int lifted_dim() const { return static_cast<int>(Q_raw.rows()); }
    int input_dim() const { return static_cast<int>(B.cols()); }

    [[nodiscard]] static DissipativeParams init(int n_phi, int m, double dt, Rng& rng);
};

// Unconstrained lifted system; no stability guarantee.
struct StandardParams {
    Mat A;   // N_phi x N_phi
    Mat B;   // N_phi x m

    int lifted_dim() const { return static_cast<int>(A.rows()); }
    int input_dim() const { return static_cast<int>(B.cols()); }

    // Initialized from a dissipative draw so training starts from a stable
    // discrete matrix.
    [[nodiscard]] static StandardParams init(int n_phi, int m, double dt, Rng& rng);
};

// Diagonal decay d from the raw parameters; every entry is < -1e-6.
Vec diagonal_decay(const Vec& theta_d);

// Continuous generator Q - Q^T + diag(d).
Mat assemble_continuous(const DissipativeParams& params);

// exp(M) via scaling-and-squaring with a degree-13 Pade approximant.
Mat matrix_exp(const Mat& M);

// Frechet derivative L(M, E) = d/ds exp(M + sE) at s = 0, computed as the
// top-right block of exp([[M, E], [0, M]]).
Mat matrix_exp_directional(const Mat& M, const Mat& E);

// (A_hat, A) with A_hat = exp(generator * dt) and A = P A_hat P^{-1}.
// P is applied through an LU solve; throws ConditioningError when the
// condition estimate of P exceeds 1e12.
std::pair<Mat, Mat> discrete_operator(const DissipativeParams& params);

double spectral_radius(const Mat& A);

struct ModelProvenance {
    std::string config_hash;
    std::uint64_t seed = 0;
};

// Lifted linear predictor (A, B, C) plus the dictionary that produced it.
struct KoopmanModel {
    Mat A;
    Mat B;
    Mat C;
    Dictionary dictionary;
    double dt = 0.0;
    ModelProvenance provenance;

    int state_dim() const { return static_cast<int>(C.rows()); }
    int lifted_dim() const { return static_cast<int>(A.rows()); }
    int input_dim() const { return static_cast<int>(B.cols()); }
};

struct RolloutResult {
    Mat lifted;   // R x N_phi, rows are z_hat_1..R
    Mat states;   // R x n, rows are x_hat_1..R
};

// z_0 = Phi(x0); z_{k+1} = A z_k + B u_k; x_hat_k = C z_k.
RolloutResult rollout_predict(const KoopmanModel& model, const Vec& x0, const Mat& inputs, int R);

inline constexpr int kModelSchemaVersion = 1;

nlohmann::json serialize_model(const KoopmanModel& model);
KoopmanModel deserialize_model(const nlohmann::json& j);
void save_model(const KoopmanModel& model, const std::string& path);
KoopmanModel load_model(const std::string& path);

}  // namespace stirk
