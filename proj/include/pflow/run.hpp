#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pflow/config.hpp"
#include "pflow/mesh.hpp"
#include "pflow/physics.hpp"

namespace pflow {

/// Process exit codes of `simulate`.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitValidation = 2, kExitNonConvergence = 3 };

/// CSV with header x,y,<prefix>0..<prefix>N and one row per point, 15
/// significant digits.
void write_snapshot(const SaturationState& state, std::span<const Point> points, const std::filesystem::path& path,
                    const std::string& prefix = "s_");
SaturationState read_snapshot(const std::filesystem::path& path, std::vector<Point>* points = nullptr);

/// Legacy VTK structured grid of the configured box. Cell-centred data when
/// the state has one row per cell, point data when it has one row per vertex.
void write_snapshot_vtk(const SaturationState& state, const Box& box, int nx, int ny, double t,
                        const std::filesystem::path& path);

/// File-name fragment for a time, e.g. 2.5 -> "2.5", 10 -> "10".
std::string time_tag(double t);

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  std::vector<std::filesystem::path> files;
};

/// Runs the configured solver(s) and writes into config.output_dir:
///   config.ini                          the effective configuration
///   snapshot_<scheme>_t<t>.csv          saturations at each snapshot time
///   diff_t<t>.csv, comparison.csv       ALG2 minus FV on the FV cells (solver = both)
///   alg2_log.csv, fv_log.csv            per-step solver logs
///   diagnostics_<scheme>.csv            DiagnosticsSeries rows
///   relative_energy_<scheme>.csv        two-phase runs only
///   summary.txt                         pass/fail of the invariant checks
/// Solver failures leave the outputs written so far in place. `progress`
/// receives one line per finished stage.
RunResult run_simulation(const RunConfig& config, std::ostream& progress);

}  // namespace pflow
