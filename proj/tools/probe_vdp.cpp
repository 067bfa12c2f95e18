// Scratch diagnostics for the vdp benchmark cell. Not part of the build.
#include <cstdio>
#include <string>

#include "stirk/baselines.hpp"
#include "stirk/dynamics.hpp"
#include "stirk/experiments.hpp"
#include "stirk/koopman.hpp"
#include "stirk/lifting.hpp"
#include "stirk/training.hpp"

using namespace stirk;

int main(int argc, char** argv) {
    const std::uint64_t train_seed = argc > 1 ? std::stoull(argv[1]) : 41;
    const int epochs = argc > 2 ? std::atoi(argv[2]) : 3000;
    const int noise_idx = argc > 3 ? std::atoi(argv[3]) : 8;

    const Protocol proto = protocol_for("vdp-single");
    const double sigma = noise_levels()[static_cast<std::size_t>(noise_idx)];
    const Cell cell = build_cell(proto, sigma, 0, 2025);

    TrainConfig config = default_vdp_train_config();
    config.seed = train_seed;
    config.epochs = epochs;
    config.optimizer_switch_epoch = epochs - 200;

    const TrainedCell trained = train_cell(proto, cell, config);
    const auto& rec = trained.history.records;
    for (std::size_t i = 0; i < rec.size(); i += 100)
        std::printf("epoch %4d R %2d lr %.4f loss %.6g val %.6g rho %.6f\n", rec[i].epoch,
                    rec[i].R, rec[i].lr, rec[i].train_loss, rec[i].val_loss,
                    rec[i].spectral_radius);
    if (!rec.empty())
        std::printf("final: loss %.6g val %.6g rho %.6f\n", rec.back().train_loss,
                    rec.back().val_loss, rec.back().spectral_radius);
    std::printf("lbfgs line-search failures: %d\n",
                trained.history.lbfgs_line_search_failures);
    std::printf("train_error %.4f test_error %.4f (noise %.4g seed %llu)\n",
                trained.train_error, trained.test_error, sigma,
                static_cast<unsigned long long>(train_seed));

    const BaselineCellResult edmd = baseline_cell(
        cell, Dictionary::polyflow(proto.system, config.polyflow_order), proto.system.dt);
    std::printf("edmd train %.4f test %.4f rank %d\n", edmd.train_error, edmd.test_error,
                edmd.rank);
    return 0;
}
