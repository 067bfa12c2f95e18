#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stirk/koopman.hpp"
#include "stirk/lifting.hpp"
#include "stirk/optimizers.hpp"

namespace stirk {

enum class Parameterization { dissipative, standard };
enum class LrSchedule { cyclic, constant };

std::string to_string(Parameterization p);
std::string to_string(LrSchedule s);

struct TrainConfig {
    int epochs = 15000;
    int batch_size = 1000;            // windows per minibatch
    double base_lr = 0.01;
    double max_lr = 0.1;
    int lr_cycle_half_period = 500;   // epochs per triangular ramp
    int curriculum_period = 200;      // epochs between roll-out doublings
    int R_max = 90;
    int optimizer_switch_epoch = 14000;  // >= epochs disables the L-BFGS phase
    double lbfgs_lr = 0.01;              // initial line-search step scale
    int lbfgs_memory = 10;
    std::uint64_t seed = 0;
    int polyflow_order = 4;
    Parameterization parameterization = Parameterization::dissipative;
    LrSchedule lr_schedule = LrSchedule::cyclic;
    bool progressive_rollout = true;
    bool freeze_P = false;
    std::string loss_reduction = "mean";
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
    int epoch = 0;
    int R = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double spectral_radius = 0.0;
    double wall_time_s = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    int lbfgs_line_search_failures = 0;
    bool aborted = false;   // non-finite loss; best checkpoint was returned
};

void write_history_csv(const TrainHistory& history, const std::string& path,
                       const std::string& config_hash, std::uint64_t seed);

using OperatorParams = std::variant<DissipativeParams, StandardParams>;

struct DissipativeGrad {
    Mat Q_raw;
    Vec theta_d;
    Mat P;
    Mat B;
};
struct StandardGrad {
    Mat A;
    Mat B;
};
using GradientRecord = std::variant<DissipativeGrad, StandardGrad>;

// Discrete (A, B) for either parameterization.
std::pair<Mat, Mat> operator_matrices(const OperatorParams& params);

// Mean over windows and roll-out steps r = 1..R of |T(x_r) - z_hat_r|^2,
// where z_hat follows the lifted recursion seeded at z_hat_0 = T(x_0) and
// targets are lifted from the recorded (possibly noisy) states.
double rollout_loss(const OperatorParams& params, const WindowSet& windows, int R,
                    const Dictionary& dict);

// Analytic gradients of rollout_loss via reverse accumulation through the
// recursion, the similarity transform and the matrix exponential.
GradientRecord loss_gradient(const OperatorParams& params, const WindowSet& windows, int R,
                             const Dictionary& dict);

// Triangular cyclic learning rate: base -> cycle max over one half period,
// back down over the next; the amplitude halves each full cycle.
double cyclic_lr(int epoch, const TrainConfig& config);

// Roll-out curriculum: R = min(R_max, 2^floor(epoch / period)).
int curriculum_R(int epoch, const TrainConfig& config);

struct TrainInput {
    WindowSet train_windows;
    WindowSet val_windows;   // empty -> training loss drives model selection
    Dictionary dictionary;
    double dt = 0.0;
};

std::pair<KoopmanModel, TrainHistory> train(const TrainConfig& config, const TrainInput& data);

// |X_hat - X|_F / |X|_F.
double normalized_error(const Mat& predicted, const Mat& reference);

// Per-step mean over state components of the squared error.
Vec mse_per_timestep(const Mat& predicted, const Mat& reference);

}  // namespace stirk
