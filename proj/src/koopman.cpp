#include "stirk/koopman.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <json.hpp>

#include "stirk/errors.hpp"

namespace stirk {

namespace {

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::vector<double> to_row_major(const Mat& m) {
    std::vector<double> flat(static_cast<size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            flat[static_cast<size_t>(r) * m.cols() + c] = m(r, c);
    return flat;
}

Mat from_row_major(const std::vector<double>& flat, Eigen::Index rows, Eigen::Index cols,
                   const char* what) {
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
        throw DimensionError(std::string(what) + ": array length does not match declared shape");
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<size_t>(r) * cols + c];
    return m;
}

}  // namespace

DissipativeParams DissipativeParams::init(int n_phi, int m, double dt, Rng& rng) {
    DissipativeParams p;
    p.Q_raw = 0.01 * rng.normal_matrix(n_phi, n_phi);
    p.theta_d = Vec::Zero(n_phi);
    p.P = Mat::Identity(n_phi, n_phi) + 0.01 * rng.normal_matrix(n_phi, n_phi);
    p.B = 0.01 * rng.normal_matrix(n_phi, m);
    p.dt = dt;
    return p;
}

StandardParams StandardParams::init(int n_phi, int m, double dt, Rng& rng) {
    const DissipativeParams seed = DissipativeParams::init(n_phi, m, dt, rng);
    StandardParams p;
    p.A = discrete_operator(seed).second;
    p.B = 0.01 * rng.normal_matrix(n_phi, m);
    return p;
}

Vec diagonal_decay(const Vec& theta_d) {
    Vec d(theta_d.size());
    for (Eigen::Index i = 0; i < theta_d.size(); ++i) d[i] = -softplus(theta_d[i]) - 1e-6;
    return d;
}

Mat assemble_continuous(const DissipativeParams& params) {
    Mat gen = params.Q_raw - params.Q_raw.transpose();
    gen.diagonal() = diagonal_decay(params.theta_d);
    return gen;
}

Mat matrix_exp(const Mat& M) {
    if (M.rows() != M.cols()) throw DimensionError("matrix_exp expects a square matrix");
    if (!M.allFinite()) throw InvalidStateError("matrix_exp input contains non-finite entries");
    const Eigen::Index n = M.rows();
    if (n == 0) return Mat(0, 0);

    // Degree-13 Pade coefficients.
    static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
    constexpr double theta_13 = 5.371920351148152;

    const double norm = M.cwiseAbs().colwise().sum().maxCoeff();  // 1-norm
    if (norm == 0.0) return Mat::Identity(n, n);  // the Pade solve would lose an ulp here
    int squarings = 0;
    if (norm > theta_13) squarings = static_cast<int>(std::ceil(std::log2(norm / theta_13)));
    const Mat A = M / std::ldexp(1.0, squarings);

    const Mat I = Mat::Identity(n, n);
    const Mat A2 = A * A;
    const Mat A4 = A2 * A2;
    const Mat A6 = A2 * A4;
    const Mat U = A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) +
                       b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
    const Mat V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) +
                  b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;

    Mat E = (V - U).partialPivLu().solve(V + U);
    for (int s = 0; s < squarings; ++s) E = E * E;
    return E;
}

Mat matrix_exp_directional(const Mat& M, const Mat& E) {
    if (M.rows() != M.cols() || E.rows() != M.rows() || E.cols() != M.cols())
        throw DimensionError("matrix_exp_directional expects same-shape square matrices");
    const Eigen::Index n = M.rows();
    const double scale = E.cwiseAbs().maxCoeff();
    if (scale == 0.0) return Mat::Zero(n, n);
    // L(M, cE) = c L(M, E): normalize E so the block norm stays comparable to M.
    Mat block = Mat::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = M;
    block.bottomRightCorner(n, n) = M;
    block.topRightCorner(n, n) = E / scale;
    return scale * matrix_exp(block).topRightCorner(n, n);
}

std::pair<Mat, Mat> discrete_operator(const DissipativeParams& params) {
    const Mat A_hat = matrix_exp(assemble_continuous(params) * params.dt);
    Eigen::PartialPivLU<Mat> lu(params.P);
    // rcond() is garbage on exactly singular input, so test the pivots first.
    const bool singular = lu.matrixLU().diagonal().cwiseAbs().minCoeff() == 0.0;
    const double rcond = singular ? 0.0 : lu.rcond();
    if (!(rcond > 1e-12))
        throw ConditioningError("coordinate transform P is ill-conditioned",
                                rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
    // A = (P A_hat) P^{-1}, via the transposed system P^T A^T = (P A_hat)^T.
    const Mat PA = params.P * A_hat;
    const Mat A = params.P.transpose().partialPivLu().solve(PA.transpose()).transpose();
    return {A_hat, A};
}

double spectral_radius(const Mat& A) {
    if (A.rows() != A.cols()) throw DimensionError("spectral_radius expects a square matrix");
    if (A.rows() == 0) return 0.0;
    Eigen::EigenSolver<Mat> solver(A, /*computeEigenvectors=*/false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

RolloutResult rollout_predict(const KoopmanModel& model, const Vec& x0, const Mat& inputs, int R) {
    if (inputs.rows() < R) throw DimensionError("rollout_predict needs at least R input rows");
    RolloutResult out;
    out.lifted.resize(R, model.lifted_dim());
    out.states.resize(R, model.state_dim());
    Vec z = model.dictionary.lift(x0);
    for (int r = 0; r < R; ++r) {
        z = model.A * z + model.B * inputs.row(r).transpose();
        out.lifted.row(r) = z.transpose();
        out.states.row(r) = (model.C * z).transpose();
    }
    return out;
}

nlohmann::json serialize_model(const KoopmanModel& model) {
    nlohmann::json j;
    j["schema_version"] = kModelSchemaVersion;
    j["n"] = model.state_dim();
    j["m"] = model.input_dim();
    j["N_phi"] = model.lifted_dim();
    j["dt"] = model.dt;
    j["dictionary"] = model.dictionary.to_json();
    j["A"] = to_row_major(model.A);
    j["B"] = to_row_major(model.B);
    j["C"] = to_row_major(model.C);
    j["provenance"] = {{"config_hash", model.provenance.config_hash},
                       {"seed", model.provenance.seed}};
    return j;
}

KoopmanModel deserialize_model(const nlohmann::json& j) {
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != kModelSchemaVersion)
            throw ParseError("unsupported model schema_version " + std::to_string(version));
        const Eigen::Index n = j.at("n").get<Eigen::Index>();
        const Eigen::Index m = j.at("m").get<Eigen::Index>();
        const Eigen::Index n_phi = j.at("N_phi").get<Eigen::Index>();
        KoopmanModel model;
        model.dt = j.at("dt").get<double>();
        model.dictionary = Dictionary::from_json(j.at("dictionary"));
        if (model.dictionary.lifted_dim() != n_phi)
            throw DimensionError("model N_phi does not match dictionary lifted dimension");
        model.A = from_row_major(j.at("A").get<std::vector<double>>(), n_phi, n_phi, "A");
        model.B = from_row_major(j.at("B").get<std::vector<double>>(), n_phi, m, "B");
        model.C = from_row_major(j.at("C").get<std::vector<double>>(), n, n_phi, "C");
        if (j.contains("provenance")) {
            model.provenance.config_hash = j["provenance"].value("config_hash", "");
            model.provenance.seed = j["provenance"].value("seed", std::uint64_t{0});
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model json: ") + e.what());
    }
}

void save_model(const KoopmanModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << serialize_model(model).dump(2) << '\n';
}

KoopmanModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model file '" + path + "': " + e.what());
    }
    return deserialize_model(j);
}

}  // namespace stirk
