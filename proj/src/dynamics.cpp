#include "stirk/dynamics.hpp"

#include <cmath>
#include <numbers>

#include "stirk/errors.hpp"

namespace stirk {

namespace {

void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite()) throw InvalidStateError(std::string(what) + " contains non-finite entries");
}

double get_param(const std::map<std::string, double>& params, const std::string& key) {
    auto it = params.find(key);
    if (it == params.end()) throw ParseError("missing system parameter '" + key + "'");
    return it->second;
}

}  // namespace

Vec vdp_field(const Vec& x, const Vec& u, double mu) {
    if (x.size() != 2) throw DimensionError("vdp_field expects a 2-dimensional state");
    require_finite(x, "state");
    require_finite(u, "input");  // checked though the plant is autonomous
    Vec dx(2);
    dx[0] = -x[1];
    dx[1] = mu * (-1.0 + x[0] * x[0]) * x[1] + x[0];
    return dx;
}

Vec cartpole_field(const Vec& x, const Vec& u, double m_c, double m_p, double l, double g) {
    if (x.size() != 4) throw DimensionError("cartpole_field expects a 4-dimensional state");
    require_finite(x, "state");
    require_finite(u, "input");
    const double force = u.size() > 0 ? u[0] : 0.0;
    const double s = std::sin(x[1]);
    const double c = std::cos(x[1]);
    const double denom = m_c + m_p * s * s;
    Vec dx(4);
    dx[0] = x[2];
    dx[1] = x[3];
    dx[2] = (force + m_p * s * (l * x[3] * x[3] - g * c)) / denom;
    dx[3] = (force * c + m_p * l * x[3] * x[3] * c * s - (m_c + m_p) * g * s) / (l * denom);
    return dx;
}

SystemSpec make_vdp(double mu, double dt) {
    SystemSpec spec;
    spec.name = "vdp";
    spec.n = 2;
    spec.m = 1;
    spec.params = {{"mu", mu}};
    spec.dt = dt;
    spec.field = [mu](const Vec& x, const Vec& u) { return vdp_field(x, u, mu); };
    return spec;
}

SystemSpec make_cartpole(double m_c, double m_p, double l, double g, double dt) {
    SystemSpec spec;
    spec.name = "cartpole";
    spec.n = 4;
    spec.m = 1;
    spec.params = {{"m_c", m_c}, {"m_p", m_p}, {"l", l}, {"g", g}};
    spec.dt = dt;
    spec.field = [m_c, m_p, l, g](const Vec& x, const Vec& u) {
        return cartpole_field(x, u, m_c, m_p, l, g);
    };
    return spec;
}

SystemSpec make_system(const std::string& name, const std::map<std::string, double>& params,
                       double dt) {
    if (name == "vdp") return make_vdp(get_param(params, "mu"), dt);
    if (name == "cartpole")
        return make_cartpole(get_param(params, "m_c"), get_param(params, "m_p"),
                             get_param(params, "l"), get_param(params, "g"), dt);
    throw ParseError("unknown system '" + name + "'");
}

Vec rk4_step(const SystemSpec& system, const Vec& x, const Vec& u) {
    const double h = system.dt;
    const Vec k1 = system.field(x, u);
    const Vec k2 = system.field(x + 0.5 * h * k1, u);
    const Vec k3 = system.field(x + 0.5 * h * k2, u);
    const Vec k4 = system.field(x + h * k3, u);
    Vec out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!out.allFinite()) throw DivergenceError("rk4_step produced non-finite state", 0);
    return out;
}

Trajectory simulate(const SystemSpec& system, const Vec& x0, const Mat& inputs) {
    const Eigen::Index steps = inputs.rows();
    if (steps < 1) throw DimensionError("simulate requires at least one input row");
    Trajectory traj;
    traj.dt = system.dt;
    traj.states.resize(steps + 1, system.n);
    traj.inputs = inputs;
    traj.states.row(0) = x0.transpose();
    Vec x = x0;
    for (Eigen::Index k = 0; k < steps; ++k) {
        try {
            x = rk4_step(system, x, inputs.row(k).transpose());
        } catch (const DivergenceError&) {
            throw DivergenceError("simulation diverged at step " + std::to_string(k), k);
        }
        traj.states.row(k + 1) = x.transpose();
    }
    return traj;
}

Trajectory add_noise(const Trajectory& traj, const NoiseSpec& spec) {
    Trajectory out = traj;
    out.seed = spec.seed;
    out.noise_sigma = spec.sigma;
    if (spec.sigma == 0.0) return out;
    Rng rng(spec.seed);
    for (Eigen::Index r = 0; r < out.states.rows(); ++r)
        for (Eigen::Index c = 0; c < out.states.cols(); ++c)
            out.states(r, c) += spec.sigma * rng.normal();
    return out;
}

std::vector<double> noise_levels() {
    std::vector<double> levels(10);
    for (int i = 0; i < 10; ++i) levels[i] = std::pow(10.0, -3.0 + 2.0 * i / 9.0);
    levels.front() = 1e-3;
    levels.back() = 1e-1;
    return levels;
}

Mat decaying_sine_inputs(const DecayingSine& p, int steps, double dt) {
    if (steps < 1) throw DimensionError("decaying_sine_inputs requires steps >= 1");
    Mat u(steps, 1);
    for (int k = 0; k < steps; ++k) {
        const double t = k * dt;
        u(k, 0) = p.amplitude * std::exp(-p.decay * t) * std::sin(p.omega * t + p.phase);
    }
    return u;
}

Mat decaying_sine_inputs(Rng& rng, int steps, double dt) {
    DecayingSine p;
    p.amplitude = rng.uniform(1.0, 20.0);
    p.omega = rng.uniform(0.5, 5.0);
    p.decay = rng.uniform(0.05, 0.5);
    p.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return decaying_sine_inputs(p, steps, dt);
}

std::vector<Vec> sample_initial_conditions(const std::string& task, int count, Rng& rng) {
    std::vector<Vec> ics;
    ics.reserve(count);
    if (task == "vdp-single") {
        for (int i = 0; i < count; ++i) {
            Vec x(2);
            x[0] = -1.0 + 0.05 * rng.normal();
            x[1] = -1.0 + 0.05 * rng.normal();
            ics.push_back(x);
        }
    } else if (task == "vdp-multi") {
        for (int i = 0; i < count; ++i) {
            Vec x(2);
            x[0] = rng.uniform(-1.0, 1.0);
            x[1] = rng.uniform(-1.0, 1.0);
            ics.push_back(x);
        }
    } else if (task == "cartpole") {
        for (int i = 0; i < count; ++i) {
            Vec x(4);
            x[0] = rng.uniform(-1.0, 1.0);
            x[1] = rng.uniform(-std::numbers::pi / 2.0, std::numbers::pi / 2.0);
            x[2] = rng.uniform(-0.1, 0.1);
            x[3] = rng.uniform(-0.1, 0.1);
            ics.push_back(x);
        }
    } else {
        throw ConfigError("task", "unknown task '" + task + "'");
    }
    return ics;
}

}  // namespace stirk
