// Scratch diagnostics for the eDMD calibration gap. Not part of the build.
#include <cstdio>

#include "stirk/baselines.hpp"
#include "stirk/dynamics.hpp"
#include "stirk/experiments.hpp"
#include "stirk/lifting.hpp"

#include "stirk/training.hpp"

using namespace stirk;

int main() {
    const Protocol proto = protocol_for("vdp-multi");
    const Dictionary dict = Dictionary::polyflow(proto.system, 4);
    const double dt = proto.system.dt;

    {
        const Cell cell = build_cell(proto, noise_levels()[0], 0, 2025);
        const Trajectory& t0 = cell.clean.front();
        std::printf("traj norms: |x(0)| %.3f |x(25)| %.3f |x(50)| %.3f |x(100)| %.3f\n",
                    t0.states.row(0).norm(), t0.states.row(25).norm(), t0.states.row(50).norm(),
                    t0.states.row(100).norm());
        std::printf("traj max abs %.3f fro %.3f\n", t0.states.cwiseAbs().maxCoeff(),
                    t0.states.norm());
    }

    std::printf("per-seed train errors at noise 0.001:\n");
    for (int si = 0; si < 10; ++si) {
        const Cell cell = build_cell(proto, noise_levels()[0], si, 2025);
        const BaselineCellResult r = baseline_cell(cell, dict, dt);
        std::printf("  seed %d train %.4f test %.4f rank %d\n", si, r.train_error, r.test_error,
                    r.rank);
    }

    // error vs rollout horizon, seed 0
    {
        const Cell cell = build_cell(proto, noise_levels()[0], 0, 2025);
        const auto fit = edmd_fit(build_snapshot_pairs(cell.train, dict));
        const KoopmanModel model = baseline_model(fit, dict, dt);
        for (int T : {25, 50, 80, 90, 100}) {
            double sum = 0.0;
            for (const auto& traj : cell.clean) {
                const RolloutResult pred =
                    rollout_predict(model, traj.states.row(0).transpose(),
                                    traj.inputs.topRows(T), T);
                sum += normalized_error(pred.states, traj.states.middleRows(1, T));
            }
            std::printf("horizon %3d mean train err %.4f\n", T, sum / cell.clean.size());
        }

        // window-restarted variant: R=90 windows, offsets 0..10
        double wsum = 0.0;
        int wcount = 0;
        for (const auto& traj : cell.clean)
            for (int off = 0; off + 90 < traj.states.rows(); ++off) {
                const RolloutResult pred =
                    rollout_predict(model, traj.states.row(off).transpose(),
                                    traj.inputs.middleRows(off, 90), 90);
                wsum += normalized_error(pred.states, traj.states.middleRows(off + 1, 90));
                ++wcount;
            }
        std::printf("window-restarted (R=90) mean %.4f over %d windows\n", wsum / wcount,
                    wcount);
    }
    return 0;
}
