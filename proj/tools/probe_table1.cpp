// Scratch calibration for the Table-1 style numbers. Not part of the build.
#include <cstdio>
#include <cstdlib>

#include "stirk/baselines.hpp"
#include "stirk/dynamics.hpp"
#include "stirk/experiments.hpp"
#include "stirk/lifting.hpp"
#include "stirk/training.hpp"

using namespace stirk;

int main(int argc, char** argv) {
    const bool run_dissipative = argc > 1 && std::atoi(argv[1]) != 0;
    const std::uint64_t master = 2025;
    const Protocol proto = protocol_for("vdp-multi");
    const Dictionary dict = Dictionary::polyflow(proto.system, 4);

    for (int ni : {0, 8, 9}) {
        const double sigma = noise_levels()[static_cast<std::size_t>(ni)];
        double tr_sum = 0.0, te_sum = 0.0;
        for (int si = 0; si < 10; ++si) {
            const Cell cell = build_cell(proto, sigma, si, master);
            const BaselineCellResult r = baseline_cell(cell, dict, proto.system.dt);
            tr_sum += r.train_error;
            te_sum += r.test_error;
        }
        std::printf("edmd-polyflow noise %.4f: train %.4f test %.4f\n", sigma, tr_sum / 10,
                    te_sum / 10);
    }

    if (run_dissipative) {
        for (int ni : {0, 8, 9}) {
            const double sigma = noise_levels()[static_cast<std::size_t>(ni)];
            const Cell cell = build_cell(proto, sigma, 0, master);
            TrainConfig config = default_vdp_train_config();
            config.seed = 1234;
            const TrainedCell t = train_cell(proto, cell, config);
            std::printf(
                "dissipative noise %.4f: train %.4f test %.4f wall %.1fs rho %.4f aborted %d\n",
                sigma, t.train_error, t.test_error, t.wall_time_s,
                spectral_radius(t.model.A), t.history.aborted ? 1 : 0);
            std::fflush(stdout);
        }
    }
    return 0;
}
