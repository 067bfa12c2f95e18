#pragma once

namespace stirk {

// Experiment driver entry point. Exit codes: 0 success, 1 runtime failure,
// 2 configuration error (message names the offending field).
int run_cli(int argc, char** argv);

}  // namespace stirk
