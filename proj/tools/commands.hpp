#pragma once

#include <ostream>

#include "run_config.hpp"

namespace fc2t2::app {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;  // verify or bench found a failing check
inline constexpr int kExitBadInput = 2;     // configuration or input data
inline constexpr int kExitRuntime = 3;      // numeric failure or I/O during the run

// Runs cfg.command and writes its artifacts under cfg.out. Progress goes to
// `out`. Returns an exit code; exceptions propagate to the caller.
int run_command(const RunConfig& cfg, std::ostream& out);

int cmd_fit_sdf(const RunConfig& cfg, std::ostream& out);
int cmd_fit_depth(const RunConfig& cfg, std::ostream& out);
int cmd_fit_radiance(const RunConfig& cfg, std::ostream& out);
int cmd_render(const RunConfig& cfg, std::ostream& out);
int cmd_verify(const RunConfig& cfg, std::ostream& out);
int cmd_bench(const RunConfig& cfg, std::ostream& out);

} // namespace fc2t2::app
