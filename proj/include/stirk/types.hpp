#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

namespace stirk {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Where an augmented trajectory came from (iterative learning rounds).
struct TrajectoryProvenance {
    int round = 0;
    int ic_index = 0;
    std::string task;
};

// Time-stamped state/input sequence from a plant. states has exactly one
// more row than inputs; noise_sigma records the measurement noise that was
// added to the stored states (the plant itself evolves noise-free).
struct Trajectory {
    Mat states;   // (R+1) x n
    Mat inputs;   // R x m
    double dt = 0.0;
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;
    std::optional<TrajectoryProvenance> provenance;

    Eigen::Index steps() const { return inputs.rows(); }
    Eigen::Index state_dim() const { return states.cols(); }
    Eigen::Index input_dim() const { return inputs.cols(); }
};

// Training sample for the recurrent loss: R_max+1 consecutive states and
// the R_max inputs between them, taken from within a single trajectory.
struct RolloutWindow {
    Mat states;   // (R_max+1) x n
    Mat inputs;   // R_max x m
    int trajectory_id = 0;
    int offset = 0;
};

}  // namespace stirk
