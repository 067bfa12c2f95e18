#include "stirk/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "stirk/errors.hpp"
#include "stirk/rng.hpp"
#include "stirk/util.hpp"

namespace stirk {

std::string to_string(Parameterization p) {
    return p == Parameterization::dissipative ? "dissipative" : "standard";
}

std::string to_string(LrSchedule s) {
    return s == LrSchedule::cyclic ? "cyclic" : "constant";
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return nlohmann::json{
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"base_lr", c.base_lr},
        {"max_lr", c.max_lr},
        {"lr_cycle_half_period", c.lr_cycle_half_period},
        {"curriculum_period", c.curriculum_period},
        {"R_max", c.R_max},
        {"optimizer_switch_epoch", c.optimizer_switch_epoch},
        {"lbfgs_lr", c.lbfgs_lr},
        {"lbfgs_memory", c.lbfgs_memory},
        {"seed", c.seed},
        {"polyflow_order", c.polyflow_order},
        {"parameterization", to_string(c.parameterization)},
        {"lr_schedule", to_string(c.lr_schedule)},
        {"progressive_rollout", c.progressive_rollout},
        {"freeze_P", c.freeze_P},
        {"loss_reduction", c.loss_reduction},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.base_lr = j.value("base_lr", c.base_lr);
        c.max_lr = j.value("max_lr", c.max_lr);
        c.lr_cycle_half_period = j.value("lr_cycle_half_period", c.lr_cycle_half_period);
        c.curriculum_period = j.value("curriculum_period", c.curriculum_period);
        c.R_max = j.value("R_max", c.R_max);
        c.optimizer_switch_epoch = j.value("optimizer_switch_epoch", c.optimizer_switch_epoch);
        c.lbfgs_lr = j.value("lbfgs_lr", c.lbfgs_lr);
        c.lbfgs_memory = j.value("lbfgs_memory", c.lbfgs_memory);
        c.seed = j.value("seed", c.seed);
        c.polyflow_order = j.value("polyflow_order", c.polyflow_order);
        c.progressive_rollout = j.value("progressive_rollout", c.progressive_rollout);
        c.freeze_P = j.value("freeze_P", c.freeze_P);
        c.loss_reduction = j.value("loss_reduction", c.loss_reduction);
        if (j.contains("parameterization")) {
            const std::string s = j.at("parameterization").get<std::string>();
            if (s == "dissipative") c.parameterization = Parameterization::dissipative;
            else if (s == "standard") c.parameterization = Parameterization::standard;
            else throw ConfigError("parameterization", "unknown value '" + s + "'");
        }
        if (j.contains("lr_schedule")) {
            const std::string s = j.at("lr_schedule").get<std::string>();
            if (s == "cyclic") c.lr_schedule = LrSchedule::cyclic;
            else if (s == "constant") c.lr_schedule = LrSchedule::constant;
            else throw ConfigError("lr_schedule", "unknown value '" + s + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("train config: ") + e.what());
    }
    if (c.loss_reduction != "mean")
        throw ConfigError("loss_reduction", "only 'mean' is supported");
    return c;
}

void write_history_csv(const TrainHistory& history, const std::string& path,
                       const std::string& config_hash, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "# config_hash=" << config_hash << " seed=" << seed << '\n';
    out << "epoch,R,lr,train_loss,val_loss,spectral_radius,wall_time_s\n";
    for (const auto& r : history.records) {
        out << r.epoch << ',' << r.R << ',' << format_double(r.lr) << ','
            << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
            << format_double(r.spectral_radius) << ',' << format_double(r.wall_time_s) << '\n';
    }
    if (!out) throw Error("write failed for " + path);
}

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Lifted windows packed column-wise: window w holds targets in
// Z columns [w*(R_max+1), w*(R_max+1)+R_max] and inputs in
// U columns [w*R_max, w*R_max+R_max-1].
struct Packed {
    int n_phi = 0;
    int m = 0;
    int R_max = 0;
    int count = 0;
    Mat Z;
    Mat U;
};

Packed pack_windows(const WindowSet& ws, const Dictionary& dict) {
    Packed p;
    p.R_max = ws.R_max;
    p.count = static_cast<int>(ws.windows.size());
    p.n_phi = dict.lifted_dim();
    p.m = p.count > 0 ? static_cast<int>(ws.windows.front().inputs.cols()) : 0;
    p.Z.resize(p.n_phi, static_cast<long>(p.count) * (p.R_max + 1));
    if (p.m > 0) p.U.resize(p.m, static_cast<long>(p.count) * p.R_max);
    for (int w = 0; w < p.count; ++w) {
        const RolloutWindow& win = ws.windows[static_cast<std::size_t>(w)];
        p.Z.middleCols(static_cast<long>(w) * (p.R_max + 1), p.R_max + 1) =
            dict.lift_states(win.states);
        if (p.m > 0)
            p.U.middleCols(static_cast<long>(w) * p.R_max, p.R_max) = win.inputs.transpose();
    }
    return p;
}

struct Workspace {
    std::vector<Mat> Zb;    // gathered targets, R+1 blocks of n_phi x W
    std::vector<Mat> Hb;    // predictions
    std::vector<Mat> Ub;    // gathered inputs, R blocks of m x W
    Mat lam;
};

// Loss (and optionally gradients wrt A, B) of the roll-out residual over the
// given batch of windows. Null batch means all windows in order.
double rollout_pass(const Mat& A, const Mat& B, const Packed& d,
                    const std::vector<int>* batch, int R,
                    Mat* G_A, Mat* G_B, Workspace& ws) {
    const int W = batch ? static_cast<int>(batch->size()) : d.count;
    if (W == 0 || R < 1) throw InvalidStateError("rollout pass needs windows and R >= 1");
    if (R > d.R_max) throw InvalidStateError("R exceeds window capacity");

    ws.Zb.resize(static_cast<std::size_t>(R) + 1);
    ws.Hb.resize(static_cast<std::size_t>(R) + 1);
    if (d.m > 0) ws.Ub.resize(static_cast<std::size_t>(R));
    for (int r = 0; r <= R; ++r) {
        ws.Zb[static_cast<std::size_t>(r)].resize(d.n_phi, W);
        ws.Hb[static_cast<std::size_t>(r)].resize(d.n_phi, W);
        if (d.m > 0 && r < R) ws.Ub[static_cast<std::size_t>(r)].resize(d.m, W);
    }
    for (int i = 0; i < W; ++i) {
        const int w = batch ? (*batch)[static_cast<std::size_t>(i)] : i;
        for (int r = 0; r <= R; ++r)
            ws.Zb[static_cast<std::size_t>(r)].col(i) =
                d.Z.col(static_cast<long>(w) * (d.R_max + 1) + r);
        if (d.m > 0)
            for (int r = 0; r < R; ++r)
                ws.Ub[static_cast<std::size_t>(r)].col(i) =
                    d.U.col(static_cast<long>(w) * d.R_max + r);
    }

    ws.Hb[0] = ws.Zb[0];
    double sq_sum = 0.0;
    for (int r = 1; r <= R; ++r) {
        auto& h = ws.Hb[static_cast<std::size_t>(r)];
        h.noalias() = A * ws.Hb[static_cast<std::size_t>(r - 1)];
        if (d.m > 0) h.noalias() += B * ws.Ub[static_cast<std::size_t>(r - 1)];
        sq_sum += (h - ws.Zb[static_cast<std::size_t>(r)]).squaredNorm();
    }
    const double loss = sq_sum / (static_cast<double>(W) * R);

    if (G_A != nullptr) {
        G_A->setZero(d.n_phi, d.n_phi);
        if (G_B != nullptr) G_B->setZero(d.n_phi, d.m);
        const double c = 2.0 / (static_cast<double>(W) * R);
        ws.lam = c * (ws.Hb[static_cast<std::size_t>(R)] - ws.Zb[static_cast<std::size_t>(R)]);
        for (int r = R; r >= 1; --r) {
            G_A->noalias() += ws.lam * ws.Hb[static_cast<std::size_t>(r - 1)].transpose();
            if (G_B != nullptr && d.m > 0)
                G_B->noalias() += ws.lam * ws.Ub[static_cast<std::size_t>(r - 1)].transpose();
            if (r > 1) {
                Mat prev = c * (ws.Hb[static_cast<std::size_t>(r - 1)] -
                                ws.Zb[static_cast<std::size_t>(r - 1)]);
                prev.noalias() += A.transpose() * ws.lam;
                ws.lam.swap(prev);
            }
        }
    }
    return loss;
}

// Pulls the gradient wrt the discrete A back onto the raw dissipative
// parameters through the similarity transform and the matrix exponential.
DissipativeGrad dissipative_chain(const DissipativeParams& p, const Mat& A_hat, const Mat& A,
                                  const Mat& G_A, const Mat& G_B) {
    Eigen::PartialPivLU<Mat> lu(p.P);
    const Mat Y = p.P.transpose() * G_A;
    const Mat G_Ahat = lu.solve(Y.transpose()).transpose();
    const Mat G_APinvT = lu.solve(G_A.transpose()).transpose();
    Mat G_P = G_APinvT * A_hat.transpose();
    G_P.noalias() -= A.transpose() * G_APinvT;

    const Mat M = assemble_continuous(p) * p.dt;
    const Mat G_Atil = p.dt * matrix_exp_directional(M.transpose(), G_Ahat);

    DissipativeGrad g;
    g.Q_raw = G_Atil - G_Atil.transpose();
    g.theta_d.resize(p.theta_d.size());
    for (long i = 0; i < p.theta_d.size(); ++i)
        g.theta_d[i] = -sigmoid(p.theta_d[i]) * G_Atil(i, i);
    g.P = G_P;
    g.B = G_B;
    return g;
}

long flat_size(const OperatorParams& params, bool freeze_P) {
    if (const auto* d = std::get_if<DissipativeParams>(&params)) {
        const long n = d->lifted_dim();
        return n * n + n + (freeze_P ? 0 : n * n) + n * d->input_dim();
    }
    const auto& s = std::get<StandardParams>(params);
    return s.A.size() + s.B.size();
}

Vec flatten_params(const OperatorParams& params, bool freeze_P) {
    Vec x(flat_size(params, freeze_P));
    long at = 0;
    auto put = [&](const Mat& mat) {
        x.segment(at, mat.size()) = Eigen::Map<const Vec>(mat.data(), mat.size());
        at += mat.size();
    };
    if (const auto* d = std::get_if<DissipativeParams>(&params)) {
        put(d->Q_raw);
        x.segment(at, d->theta_d.size()) = d->theta_d;
        at += d->theta_d.size();
        if (!freeze_P) put(d->P);
        put(d->B);
    } else {
        const auto& s = std::get<StandardParams>(params);
        put(s.A);
        put(s.B);
    }
    return x;
}

void unflatten_params(OperatorParams& params, const Vec& x, bool freeze_P) {
    long at = 0;
    auto take = [&](Mat& mat) {
        Eigen::Map<Vec>(mat.data(), mat.size()) = x.segment(at, mat.size());
        at += mat.size();
    };
    if (auto* d = std::get_if<DissipativeParams>(&params)) {
        take(d->Q_raw);
        d->theta_d = x.segment(at, d->theta_d.size());
        at += d->theta_d.size();
        if (!freeze_P) take(d->P);
        take(d->B);
    } else {
        auto& s = std::get<StandardParams>(params);
        take(s.A);
        take(s.B);
    }
}

Vec flatten_grad(const GradientRecord& grad, bool freeze_P) {
    if (const auto* d = std::get_if<DissipativeGrad>(&grad)) {
        const long n = d->Q_raw.rows();
        Vec g(n * n + n + (freeze_P ? 0 : n * n) + d->B.size());
        long at = 0;
        g.segment(at, d->Q_raw.size()) = Eigen::Map<const Vec>(d->Q_raw.data(), d->Q_raw.size());
        at += d->Q_raw.size();
        g.segment(at, d->theta_d.size()) = d->theta_d;
        at += d->theta_d.size();
        if (!freeze_P) {
            g.segment(at, d->P.size()) = Eigen::Map<const Vec>(d->P.data(), d->P.size());
            at += d->P.size();
        }
        g.segment(at, d->B.size()) = Eigen::Map<const Vec>(d->B.data(), d->B.size());
        return g;
    }
    const auto& s = std::get<StandardGrad>(grad);
    Vec g(s.A.size() + s.B.size());
    g.head(s.A.size()) = Eigen::Map<const Vec>(s.A.data(), s.A.size());
    g.tail(s.B.size()) = Eigen::Map<const Vec>(s.B.data(), s.B.size());
    return g;
}

// Discrete matrices plus the intermediate A_hat needed by the chain rule.
struct Assembled {
    Mat A_hat;  // dissipative only
    Mat A;
    Mat B;
};

Assembled assemble(const OperatorParams& params) {
    Assembled out;
    if (const auto* d = std::get_if<DissipativeParams>(&params)) {
        auto [A_hat, A] = discrete_operator(*d);
        out.A_hat = std::move(A_hat);
        out.A = std::move(A);
        out.B = d->B;
    } else {
        const auto& s = std::get<StandardParams>(params);
        out.A = s.A;
        out.B = s.B;
    }
    return out;
}

GradientRecord chain(const OperatorParams& params, const Assembled& asm_, const Mat& G_A,
                     const Mat& G_B) {
    if (const auto* d = std::get_if<DissipativeParams>(&params))
        return dissipative_chain(*d, asm_.A_hat, asm_.A, G_A, G_B);
    return StandardGrad{G_A, G_B};
}

void shuffle(std::vector<int>& perm, Rng& rng) {
    for (std::size_t i = perm.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(perm[i - 1], perm[j]);
    }
}

}  // namespace

std::pair<Mat, Mat> operator_matrices(const OperatorParams& params) {
    const Assembled a = assemble(params);
    return {a.A, a.B};
}

double rollout_loss(const OperatorParams& params, const WindowSet& windows, int R,
                    const Dictionary& dict) {
    const Packed packed = pack_windows(windows, dict);
    const Assembled a = assemble(params);
    Workspace ws;
    return rollout_pass(a.A, a.B, packed, nullptr, R, nullptr, nullptr, ws);
}

GradientRecord loss_gradient(const OperatorParams& params, const WindowSet& windows, int R,
                             const Dictionary& dict) {
    const Packed packed = pack_windows(windows, dict);
    const Assembled a = assemble(params);
    Workspace ws;
    Mat G_A, G_B;
    rollout_pass(a.A, a.B, packed, nullptr, R, &G_A, &G_B, ws);
    return chain(params, a, G_A, G_B);
}

double cyclic_lr(int epoch, const TrainConfig& config) {
    if (config.lr_schedule == LrSchedule::constant) return config.base_lr;
    const int half = config.lr_cycle_half_period;
    const int cycle = epoch / (2 * half);
    const int phase = epoch % (2 * half);
    const double amplitude = (config.max_lr - config.base_lr) * std::pow(0.5, cycle);
    const double frac = phase <= half ? static_cast<double>(phase) / half
                                      : static_cast<double>(2 * half - phase) / half;
    return config.base_lr + amplitude * frac;
}

int curriculum_R(int epoch, const TrainConfig& config) {
    if (!config.progressive_rollout) return config.R_max;
    const int k = epoch / config.curriculum_period;
    if (k >= 31) return config.R_max;
    return std::min(config.R_max, 1 << k);
}

std::pair<KoopmanModel, TrainHistory> train(const TrainConfig& config, const TrainInput& data) {
    if (config.epochs < 0) throw ConfigError("epochs", "must be >= 0");
    if (config.batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (config.R_max < 1) throw ConfigError("R_max", "must be >= 1");
    if (config.curriculum_period < 1) throw ConfigError("curriculum_period", "must be >= 1");
    if (config.lr_cycle_half_period < 1) throw ConfigError("lr_cycle_half_period", "must be >= 1");
    if (!(config.base_lr > 0.0)) throw ConfigError("base_lr", "must be > 0");
    if (config.max_lr < config.base_lr) throw ConfigError("max_lr", "must be >= base_lr");
    if (config.loss_reduction != "mean") throw ConfigError("loss_reduction", "only 'mean' is supported");
    if (data.train_windows.windows.empty()) throw InvalidStateError("train: no windows");
    if (config.R_max > data.train_windows.R_max)
        throw ConfigError("R_max", "exceeds window capacity");
    if (!(data.dt > 0.0)) throw ConfigError("dt", "must be > 0");

    const int n_phi = data.dictionary.lifted_dim();
    const int m = static_cast<int>(data.train_windows.windows.front().inputs.cols());

    const Packed train_data = pack_windows(data.train_windows, data.dictionary);
    const bool has_val = !data.val_windows.windows.empty();
    Packed val_data;
    if (has_val) {
        if (config.R_max > data.val_windows.R_max)
            throw ConfigError("R_max", "exceeds validation window capacity");
        val_data = pack_windows(data.val_windows, data.dictionary);
    }

    Rng rng(config.seed);
    OperatorParams params =
        config.parameterization == Parameterization::dissipative
            ? OperatorParams(DissipativeParams::init(n_phi, m, data.dt, rng))
            : OperatorParams(StandardParams::init(n_phi, m, data.dt, rng));

    Vec flat = flatten_params(params, config.freeze_P);
    Vec best_flat = flat;
    double best_metric = std::numeric_limits<double>::infinity();

    AdamState adam = AdamState::init(flat.size());
    LbfgsState lbfgs = LbfgsState::init(config.lbfgs_memory, config.lbfgs_lr);
    Workspace ws;
    Mat G_A, G_B;
    TrainHistory history;
    history.records.reserve(static_cast<std::size_t>(config.epochs));

    std::vector<int> perm(static_cast<std::size_t>(train_data.count));
    for (int i = 0; i < train_data.count; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::vector<int> batch;

    const std::string hash = fnv1a64_hex(train_config_to_json(config).dump());

    auto stability_check = [&](const Mat& A) {
        if (config.parameterization != Parameterization::dissipative) return;
        const double rho = spectral_radius(A);
        if (!(rho < 1.0))
            throw InvalidStateError("dissipative operator left the unit disk: rho = " +
                                    format_double(rho));
    };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const bool lbfgs_phase = epoch >= config.optimizer_switch_epoch;
        const int R = lbfgs_phase ? config.R_max : curriculum_R(epoch, config);
        const double lr = lbfgs_phase ? config.lbfgs_lr : cyclic_lr(epoch, config);

        double epoch_loss = 0.0;
        double rho = 0.0;
        bool finite = true;
        try {
            if (!lbfgs_phase) {
                shuffle(perm, rng);
                int batches = 0;
                for (int start = 0; start < train_data.count && finite;
                     start += config.batch_size) {
                    const int len = std::min(config.batch_size, train_data.count - start);
                    batch.assign(perm.begin() + start, perm.begin() + start + len);
                    unflatten_params(params, flat, config.freeze_P);
                    const Assembled a = assemble(params);
                    const double loss =
                        rollout_pass(a.A, a.B, train_data, &batch, R, &G_A, &G_B, ws);
                    if (!std::isfinite(loss)) {
                        finite = false;
                        break;
                    }
                    const Vec g = flatten_grad(chain(params, a, G_A, G_B), config.freeze_P);
                    adam_step(adam, flat, g, lr);
                    unflatten_params(params, flat, config.freeze_P);
                    const Assembled post = assemble(params);
                    stability_check(post.A);
                    rho = spectral_radius(post.A);
                    epoch_loss += loss;
                    ++batches;
                }
                if (finite) epoch_loss /= batches;
            } else {
                auto fn = [&](const Vec& x, Vec& g) -> double {
                    unflatten_params(params, x, config.freeze_P);
                    const Assembled a = assemble(params);
                    const double loss =
                        rollout_pass(a.A, a.B, train_data, nullptr, config.R_max, &G_A, &G_B, ws);
                    g = flatten_grad(chain(params, a, G_A, G_B), config.freeze_P);
                    return loss;
                };
                const LbfgsStepResult res = lbfgs_step(lbfgs, flat, fn);
                epoch_loss = res.loss;
                if (!std::isfinite(epoch_loss)) finite = false;
                if (finite) {
                    unflatten_params(params, flat, config.freeze_P);
                    const Assembled post = assemble(params);
                    stability_check(post.A);
                    rho = spectral_radius(post.A);
                }
            }
        } catch (const ConditioningError&) {
            finite = false;
        }
        if (!finite) {
            history.aborted = true;
            break;
        }

        unflatten_params(params, flat, config.freeze_P);
        const Assembled cur = assemble(params);
        const double val_loss =
            has_val ? rollout_pass(cur.A, cur.B, val_data, nullptr, config.R_max, nullptr,
                                   nullptr, ws)
                    : rollout_pass(cur.A, cur.B, train_data, nullptr, config.R_max, nullptr,
                                   nullptr, ws);
        if (std::isfinite(val_loss) && val_loss < best_metric) {
            best_metric = val_loss;
            best_flat = flat;
        }

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.records.push_back({epoch, R, lr, epoch_loss, val_loss, rho, wall});
    }
    history.lbfgs_line_search_failures = lbfgs.line_search_failures;

    unflatten_params(params, best_flat, config.freeze_P);
    const Assembled fin = assemble(params);
    KoopmanModel model;
    model.A = fin.A;
    model.B = fin.B;
    model.C = data.dictionary.output_matrix();
    model.dictionary = data.dictionary;
    model.dt = data.dt;
    model.provenance = ModelProvenance{hash, config.seed};
    return {std::move(model), std::move(history)};
}

double normalized_error(const Mat& predicted, const Mat& reference) {
    if (predicted.rows() != reference.rows() || predicted.cols() != reference.cols())
        throw DimensionError("normalized_error: shape mismatch");
    const double denom = reference.norm();
    if (denom == 0.0) throw UndefinedMetricError("normalized_error: reference has zero norm");
    return (predicted - reference).norm() / denom;
}

Vec mse_per_timestep(const Mat& predicted, const Mat& reference) {
    if (predicted.rows() != reference.rows() || predicted.cols() != reference.cols())
        throw DimensionError("mse_per_timestep: shape mismatch");
    Vec out(predicted.rows());
    for (long i = 0; i < predicted.rows(); ++i)
        out[i] = (predicted.row(i) - reference.row(i)).squaredNorm() /
                 static_cast<double>(predicted.cols());
    return out;
}

}  // namespace stirk
