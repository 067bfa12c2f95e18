#pragma once

#include <map>
#include <string>
#include <vector>

#include "stirk/dynamics.hpp"
#include "stirk/types.hpp"

namespace stirk {

// CSV with header t,x1..xn,u1..um; the final row carries the terminal state
// with empty input fields. A sidecar JSON at <path>.json holds the metadata
// needed to rebuild the trajectory's context.
void write_trajectory(const Trajectory& traj, const SystemSpec& system,
                      const std::string& csv_path, const std::string& config_hash);

struct TrajectoryFile {
    Trajectory trajectory;
    std::string system_name;
    std::map<std::string, double> system_params;
    std::string config_hash;
};

TrajectoryFile read_trajectory(const std::string& csv_path);

}  // namespace stirk
