#pragma once

#include <functional>
#include <vector>

#include "stirk/types.hpp"

namespace stirk {

// Standard Adam with bias correction.
struct AdamState {
    Vec m;
    Vec v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    [[nodiscard]] static AdamState init(Eigen::Index size);
};

// In-place update of params given the gradient at params.
void adam_step(AdamState& state, Vec& params, const Vec& grads, double lr);

// Evaluates loss and gradient at x; returns the loss.
using LossFn = std::function<double(const Vec& x, Vec& grad)>;

// Limited-memory BFGS with the two-loop recursion and a strong-Wolfe line
// search (c1 = 1e-4, c2 = 0.9). The very first search direction is
// -initial_scale * g; afterwards the usual s'y / y'y scaling applies.
struct LbfgsState {
    int memory = 10;
    double initial_scale = 1.0;
    std::vector<Vec> s_hist;
    std::vector<Vec> y_hist;
    std::vector<double> rho_hist;
    Vec x;
    Vec grad;
    double loss = 0.0;
    bool primed = false;
    int line_search_failures = 0;

    [[nodiscard]] static LbfgsState init(int memory, double initial_scale);
};

struct LbfgsStepResult {
    double loss = 0.0;
    double grad_norm = 0.0;
    double step_length = 0.0;
    bool accepted = false;
};

// One outer L-BFGS iteration on `params`. On line-search failure the
// parameters are left untouched and the event is counted.
LbfgsStepResult lbfgs_step(LbfgsState& state, Vec& params, const LossFn& fn);

}  // namespace stirk
