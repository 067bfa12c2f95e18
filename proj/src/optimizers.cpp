#include "stirk/optimizers.hpp"

#include <cmath>

#include "stirk/errors.hpp"

namespace stirk {

AdamState AdamState::init(Eigen::Index size) {
    AdamState s;
    s.m = Vec::Zero(size);
    s.v = Vec::Zero(size);
    return s;
}

void adam_step(AdamState& state, Vec& params, const Vec& grads, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DimensionError("adam_step: parameter/gradient size mismatch");
    state.t += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    const Vec m_hat = state.m / bc1;
    const Vec v_hat = state.v / bc2;
    params.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + state.eps);
}

LbfgsState LbfgsState::init(int memory, double initial_scale) {
    LbfgsState s;
    s.memory = memory;
    s.initial_scale = initial_scale;
    return s;
}

namespace {

constexpr double kWolfeC1 = 1e-4;
constexpr double kWolfeC2 = 0.9;

struct LinePoint {
    double alpha;
    double f;
    double df;  // directional derivative
};

// Cubic interpolation minimizer for the zoom stage; falls back to bisection.
double interpolate(const LinePoint& lo, const LinePoint& hi) {
    const double d1 = lo.df + hi.df - 3.0 * (lo.f - hi.f) / (lo.alpha - hi.alpha);
    const double disc = d1 * d1 - lo.df * hi.df;
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), hi.alpha - lo.alpha);
        const double num = hi.df + d2 - d1;
        const double den = hi.df - lo.df + 2.0 * d2;
        if (den != 0.0) {
            const double alpha = hi.alpha - (hi.alpha - lo.alpha) * (num / den);
            const double a = std::min(lo.alpha, hi.alpha);
            const double b = std::max(lo.alpha, hi.alpha);
            const double margin = 0.1 * (b - a);
            if (alpha > a + margin && alpha < b - margin) return alpha;
        }
    }
    return 0.5 * (lo.alpha + hi.alpha);
}

// Strong Wolfe line search (bracket + zoom). Returns true on success and
// leaves (x, f, g) at the accepted point.
bool wolfe_line_search(const LossFn& fn, const Vec& x0, double f0, const Vec& g0, const Vec& dir,
                       Vec& x, double& f, Vec& g, double& alpha_out) {
    const double df0 = g0.dot(dir);
    if (!(df0 < 0.0)) return false;  // not a descent direction

    const int max_evals = 40;
    int evals = 0;
    auto eval = [&](double alpha) -> LinePoint {
        x = x0 + alpha * dir;
        f = fn(x, g);
        ++evals;
        return {alpha, f, g.dot(dir)};
    };

    LinePoint prev{0.0, f0, df0};
    double alpha = 1.0;
    LinePoint lo{0.0, f0, df0}, hi{0.0, f0, df0};
    bool bracketed = false;

    for (; evals < max_evals && !bracketed; ) {
        LinePoint cur = eval(alpha);
        if (!std::isfinite(cur.f)) {
            alpha *= 0.25;
            if (alpha < 1e-20) return false;
            continue;
        }
        if (cur.f > f0 + kWolfeC1 * alpha * df0 || (evals > 1 && cur.f >= prev.f)) {
            lo = prev;
            hi = cur;
            bracketed = true;
            break;
        }
        if (std::abs(cur.df) <= -kWolfeC2 * df0) {
            alpha_out = alpha;
            return true;
        }
        if (cur.df >= 0.0) {
            lo = cur;
            hi = prev;
            bracketed = true;
            break;
        }
        prev = cur;
        alpha *= 2.0;
        if (alpha > 1e10) return false;
    }
    if (!bracketed) return false;

    // Zoom.
    while (evals < max_evals) {
        const double alpha_j = interpolate(lo, hi);
        if (!(std::abs(hi.alpha - lo.alpha) > 1e-16 * (1.0 + std::abs(lo.alpha)))) break;
        LinePoint cur = eval(alpha_j);
        if (!std::isfinite(cur.f) || cur.f > f0 + kWolfeC1 * alpha_j * df0 || cur.f >= lo.f) {
            hi = cur;
        } else {
            if (std::abs(cur.df) <= -kWolfeC2 * df0) {
                alpha_out = alpha_j;
                return true;
            }
            if (cur.df * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
            lo = cur;
        }
    }
    // Accept the best sufficient-decrease point found, if any.
    if (lo.alpha > 0.0 && lo.f < f0) {
        x = x0 + lo.alpha * dir;
        f = fn(x, g);
        alpha_out = lo.alpha;
        return true;
    }
    return false;
}

}  // namespace

LbfgsStepResult lbfgs_step(LbfgsState& state, Vec& params, const LossFn& fn) {
    LbfgsStepResult result;
    if (!state.primed || state.x.size() != params.size() || state.x != params) {
        state.x = params;
        state.grad.resize(params.size());
        state.loss = fn(state.x, state.grad);
        state.primed = true;
    }
    result.grad_norm = state.grad.norm();
    result.loss = state.loss;
    if (result.grad_norm == 0.0) {
        // Already at a stationary point: accepted step with zero displacement.
        result.accepted = true;
        return result;
    }

    // Two-loop recursion.
    Vec q = state.grad;
    const int k = static_cast<int>(state.s_hist.size());
    std::vector<double> alpha_coef(k);
    for (int i = k - 1; i >= 0; --i) {
        alpha_coef[i] = state.rho_hist[i] * state.s_hist[i].dot(q);
        q -= alpha_coef[i] * state.y_hist[i];
    }
    double gamma = state.initial_scale;
    if (k > 0) {
        const double yy = state.y_hist.back().squaredNorm();
        if (yy > 0.0) gamma = state.s_hist.back().dot(state.y_hist.back()) / yy;
    }
    Vec dir = gamma * q;
    for (int i = 0; i < k; ++i) {
        const double beta = state.rho_hist[i] * state.y_hist[i].dot(dir);
        dir += (alpha_coef[i] - beta) * state.s_hist[i];
    }
    dir = -dir;
    if (dir.dot(state.grad) >= 0.0) {
        // Degenerate curvature history: fall back to steepest descent.
        state.s_hist.clear();
        state.y_hist.clear();
        state.rho_hist.clear();
        dir = -state.initial_scale * state.grad;
    }

    Vec x_new = state.x;
    Vec g_new = state.grad;
    double f_new = state.loss;
    double alpha = 0.0;
    if (!wolfe_line_search(fn, state.x, state.loss, state.grad, dir, x_new, f_new, g_new, alpha)) {
        ++state.line_search_failures;
        params = state.x;  // keep parameters
        result.accepted = false;
        return result;
    }

    const Vec s = x_new - state.x;
    const Vec y = g_new - state.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
        state.s_hist.push_back(s);
        state.y_hist.push_back(y);
        state.rho_hist.push_back(1.0 / sy);
        if (static_cast<int>(state.s_hist.size()) > state.memory) {
            state.s_hist.erase(state.s_hist.begin());
            state.y_hist.erase(state.y_hist.begin());
            state.rho_hist.erase(state.rho_hist.begin());
        }
    }
    state.x = x_new;
    state.grad = g_new;
    state.loss = f_new;
    params = x_new;
    result.loss = f_new;
    result.grad_norm = g_new.norm();
    result.step_length = alpha;
    result.accepted = true;
    return result;
}

}  // namespace stirk
