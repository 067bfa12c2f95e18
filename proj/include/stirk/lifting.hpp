#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "stirk/dynamics.hpp"
#include "stirk/types.hpp"

namespace stirk {

enum class DictionaryKind { polyflow, rbf, identity };

std::string to_string(DictionaryKind kind);
DictionaryKind dictionary_kind_from_string(const std::string& s);

// Observable dictionary: the lifting map x -> z together with everything
// needed to rebuild it from disk. Immutable after construction.
class Dictionary {
public:
    // Zero-dimensional placeholder; models replace it on construction.
    Dictionary() = default;

    // Polyflow of order N: z = [x; f(x,0); ...; f^{(N-1)}(x,0)] where f is
    // one RK4 step of the plant with zero input.
    static Dictionary polyflow(const SystemSpec& system, int order);
    // Gaussian RBF dictionary; the raw state is prepended so C = [I 0].
    static Dictionary rbf(int n, const Mat& centers, double bandwidth);
    static Dictionary identity(int n);

    Vec lift(const Vec& x) const;
    // Lift every row of a (T+1) x n state matrix; returns N_phi x (T+1).
    Mat lift_states(const Mat& states) const;

    // C = [I_n 0], so C * lift(x) == x exactly.
    Mat output_matrix() const;

    DictionaryKind kind() const { return kind_; }
    int state_dim() const { return n_; }
    int lifted_dim() const { return lifted_dim_; }
    int order() const { return order_; }
    const Mat& centers() const { return centers_; }
    double bandwidth() const { return bandwidth_; }
    const SystemSpec& system() const { return system_; }

    nlohmann::json to_json() const;
    static Dictionary from_json(const nlohmann::json& j);

private:
    DictionaryKind kind_ = DictionaryKind::identity;
    int n_ = 0;
    int lifted_dim_ = 0;
    int order_ = 1;       // polyflow only
    Mat centers_;         // rbf only, K x n
    double bandwidth_ = 1.0;
    SystemSpec system_;   // polyflow only; zero-input map source
};

// Convenience RBF construction used by the experiment protocols: `count`
// centers sampled uniformly from the axis-aligned bounding box of the
// training states, bandwidth = mean pairwise center distance.
Dictionary rbf_from_data(const std::vector<Trajectory>& trajectories, int count, Rng& rng);

// Sliding windows of length R_max+1 with stride 1, never crossing
// trajectory boundaries. Trajectories shorter than R_max+1 are skipped
// and counted.
struct WindowSet {
    std::vector<RolloutWindow> windows;
    int R_max = 0;
    int skipped = 0;
};

WindowSet make_windows(const std::vector<Trajectory>& trajectories, int R_max);

}  // namespace stirk
