#include "stirk/lifting.hpp"

#include <cmath>

#include <json.hpp>

#include "stirk/errors.hpp"

namespace stirk {

std::string to_string(DictionaryKind kind) {
    switch (kind) {
        case DictionaryKind::polyflow: return "polyflow";
        case DictionaryKind::rbf: return "rbf";
        case DictionaryKind::identity: return "identity";
    }
    return "identity";
}

DictionaryKind dictionary_kind_from_string(const std::string& s) {
    if (s == "polyflow") return DictionaryKind::polyflow;
    if (s == "rbf") return DictionaryKind::rbf;
    if (s == "identity") return DictionaryKind::identity;
    throw ParseError("unknown dictionary kind '" + s + "'");
}

Dictionary Dictionary::polyflow(const SystemSpec& system, int order) {
    if (order < 1) throw DimensionError("polyflow order must be >= 1");
    Dictionary d;
    d.kind_ = DictionaryKind::polyflow;
    d.n_ = system.n;
    d.order_ = order;
    d.lifted_dim_ = system.n * order;
    d.system_ = system;
    return d;
}

Dictionary Dictionary::rbf(int n, const Mat& centers, double bandwidth) {
    if (centers.rows() > 0 && centers.cols() != n)
        throw DimensionError("rbf centers must have n columns");
    if (bandwidth <= 0.0) throw DimensionError("rbf bandwidth must be positive");
    Dictionary d;
    d.kind_ = DictionaryKind::rbf;
    d.n_ = n;
    d.centers_ = centers;
    d.bandwidth_ = bandwidth;
    d.lifted_dim_ = n + static_cast<int>(centers.rows());
    return d;
}

Dictionary Dictionary::identity(int n) {
    Dictionary d;
    d.kind_ = DictionaryKind::identity;
    d.n_ = n;
    d.lifted_dim_ = n;
    return d;
}

Vec Dictionary::lift(const Vec& x) const {
    if (x.size() != n_) throw DimensionError("lift: state dimension mismatch");
    switch (kind_) {
        case DictionaryKind::identity:
            return x;
        case DictionaryKind::polyflow: {
            Vec z(lifted_dim_);
            Vec iterate = x;
            const Vec u_zero = Vec::Zero(system_.m);
            z.segment(0, n_) = iterate;
            for (int k = 1; k < order_; ++k) {
                try {
                    iterate = rk4_step(system_, iterate, u_zero);
                } catch (const DivergenceError&) {
                    throw DivergenceError("polyflow iterate " + std::to_string(k) + " diverged", k);
                }
                z.segment(static_cast<Eigen::Index>(k) * n_, n_) = iterate;
            }
            return z;
        }
        case DictionaryKind::rbf: {
            Vec z(lifted_dim_);
            z.head(n_) = x;
            const double denom = 2.0 * bandwidth_ * bandwidth_;
            for (Eigen::Index k = 0; k < centers_.rows(); ++k) {
                const double d2 = (x - centers_.row(k).transpose()).squaredNorm();
                z[n_ + k] = std::exp(-d2 / denom);
            }
            return z;
        }
    }
    throw Error("unreachable dictionary kind");
}

Mat Dictionary::lift_states(const Mat& states) const {
    Mat Z(lifted_dim_, states.rows());
    for (Eigen::Index r = 0; r < states.rows(); ++r) Z.col(r) = lift(states.row(r).transpose());
    return Z;
}

Mat Dictionary::output_matrix() const {
    Mat C = Mat::Zero(n_, lifted_dim_);
    C.leftCols(n_) = Mat::Identity(n_, n_);
    return C;
}

nlohmann::json Dictionary::to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind_);
    j["n"] = n_;
    switch (kind_) {
        case DictionaryKind::polyflow:
            j["order"] = order_;
            j["system"] = system_.name;
            j["system_params"] = system_.params;
            j["system_dt"] = system_.dt;
            break;
        case DictionaryKind::rbf: {
            std::vector<double> flat(centers_.size());
            for (Eigen::Index r = 0; r < centers_.rows(); ++r)
                for (Eigen::Index c = 0; c < centers_.cols(); ++c)
                    flat[static_cast<size_t>(r) * centers_.cols() + c] = centers_(r, c);
            j["centers"] = flat;
            j["center_count"] = centers_.rows();
            j["bandwidth"] = bandwidth_;
            break;
        }
        case DictionaryKind::identity:
            break;
    }
    return j;
}

Dictionary Dictionary::from_json(const nlohmann::json& j) {
    try {
        const auto kind = dictionary_kind_from_string(j.at("kind").get<std::string>());
        const int n = j.at("n").get<int>();
        switch (kind) {
            case DictionaryKind::identity:
                return identity(n);
            case DictionaryKind::polyflow: {
                const auto params = j.at("system_params").get<std::map<std::string, double>>();
                const auto system = make_system(j.at("system").get<std::string>(), params,
                                                j.at("system_dt").get<double>());
                return polyflow(system, j.at("order").get<int>());
            }
            case DictionaryKind::rbf: {
                const auto flat = j.at("centers").get<std::vector<double>>();
                const Eigen::Index count = j.at("center_count").get<Eigen::Index>();
                if (count * n != static_cast<Eigen::Index>(flat.size()))
                    throw DimensionError("rbf centers array has wrong length");
                Mat centers(count, n);
                for (Eigen::Index r = 0; r < count; ++r)
                    for (Eigen::Index c = 0; c < n; ++c)
                        centers(r, c) = flat[static_cast<size_t>(r) * n + c];
                return rbf(n, centers, j.at("bandwidth").get<double>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("dictionary json: ") + e.what());
    }
    throw ParseError("dictionary json: unreachable kind");
}

Dictionary rbf_from_data(const std::vector<Trajectory>& trajectories, int count, Rng& rng) {
    if (trajectories.empty()) throw DimensionError("rbf_from_data needs at least one trajectory");
    const int n = static_cast<int>(trajectories.front().state_dim());
    Vec lo = Vec::Constant(n, std::numeric_limits<double>::infinity());
    Vec hi = Vec::Constant(n, -std::numeric_limits<double>::infinity());
    for (const auto& traj : trajectories) {
        lo = lo.cwiseMin(traj.states.colwise().minCoeff().transpose());
        hi = hi.cwiseMax(traj.states.colwise().maxCoeff().transpose());
    }
    Mat centers(count, n);
    for (int k = 0; k < count; ++k)
        for (int c = 0; c < n; ++c) centers(k, c) = rng.uniform(lo[c], hi[c]);
    double total = 0.0;
    int pairs = 0;
    for (int a = 0; a < count; ++a)
        for (int b = a + 1; b < count; ++b) {
            total += (centers.row(a) - centers.row(b)).norm();
            ++pairs;
        }
    const double bandwidth = pairs > 0 ? total / pairs : 1.0;
    return Dictionary::rbf(n, centers, bandwidth);
}

WindowSet make_windows(const std::vector<Trajectory>& trajectories, int R_max) {
    if (R_max < 1) throw DimensionError("make_windows requires R_max >= 1");
    WindowSet set;
    set.R_max = R_max;
    for (size_t t = 0; t < trajectories.size(); ++t) {
        const auto& traj = trajectories[t];
        const Eigen::Index count = traj.states.rows() - R_max;
        if (count < 1) {
            ++set.skipped;
            continue;
        }
        for (Eigen::Index off = 0; off < count; ++off) {
            RolloutWindow w;
            w.states = traj.states.middleRows(off, R_max + 1);
            w.inputs = traj.inputs.middleRows(off, R_max);
            w.trajectory_id = static_cast<int>(t);
            w.offset = static_cast<int>(off);
            set.windows.push_back(std::move(w));
        }
    }
    return set;
}

}  // namespace stirk
