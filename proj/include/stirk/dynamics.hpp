#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stirk/rng.hpp"
#include "stirk/types.hpp"

namespace stirk {

// Continuous-time plant plus its sampling step. `field` maps (x, u) to xdot.
struct SystemSpec {
    std::string name;
    int n = 0;
    int m = 0;
    std::map<std::string, double> params;
    std::function<Vec(const Vec&, const Vec&)> field;
    double dt = 0.0;
};

struct NoiseSpec {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

// Parameters of one exponentially decaying sine excitation signal:
// u_k = amplitude * exp(-decay * k * dt) * sin(omega * k * dt + phase).
struct DecayingSine {
    double amplitude = 1.0;
    double omega = 1.0;
    double decay = 0.0;
    double phase = 0.0;
};

Vec vdp_field(const Vec& x, const Vec& u, double mu);
Vec cartpole_field(const Vec& x, const Vec& u, double m_c, double m_p, double l, double g);

SystemSpec make_vdp(double mu = 1.0, double dt = 0.1);
SystemSpec make_cartpole(double m_c = 1.0, double m_p = 0.1, double l = 0.5, double g = 9.81,
                         double dt = 0.05);
// Rebuild a plant from its serialized name/params (model and sidecar files).
SystemSpec make_system(const std::string& name, const std::map<std::string, double>& params,
                       double dt);

// Classical fourth-order Runge-Kutta update with step system.dt; the input
// is held constant over the step (zero-order hold).
Vec rk4_step(const SystemSpec& system, const Vec& x, const Vec& u);

Trajectory simulate(const SystemSpec& system, const Vec& x0, const Mat& inputs);

// Adds i.i.d. zero-mean Gaussian noise with std sigma to every state entry;
// inputs are untouched. Deterministic given spec.seed.
Trajectory add_noise(const Trajectory& traj, const NoiseSpec& spec);

// The ten noise standard deviations used throughout: log-spaced from 1e-3
// to 1e-1 inclusive.
std::vector<double> noise_levels();

Mat decaying_sine_inputs(const DecayingSine& params, int steps, double dt);
Mat decaying_sine_inputs(Rng& rng, int steps, double dt);

// Initial-condition sampling per task: "vdp-single" draws from
// N([-1,-1], diag(0.05^2)); "vdp-multi" uniform on [-1,1]^2; "cartpole"
// uniform with x1 in [-1,1], x2 in [-pi/2,pi/2], x3,x4 in [-0.1,0.1].
std::vector<Vec> sample_initial_conditions(const std::string& task, int count, Rng& rng);

}  // namespace stirk
