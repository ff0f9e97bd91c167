#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pflow/alg2.hpp"
#include "pflow/fv.hpp"
#include "pflow/mesh.hpp"
#include "pflow/physics.hpp"

namespace pflow {

/// Parse or validation failure. `field` names the offending key
/// ("section.key"); `line` is 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message, int line = 0);
  const std::string& field() const { return field_; }
  /// Message without the line and field prefix.
  const std::string& message() const { return message_; }
  int line() const { return line_; }

 private:
  std::string field_;
  std::string message_;
  int line_;
};

enum class SolverChoice { Alg2, Fv, Both };
enum class InitialKind { Uniform, Block, Bands, Gaussian };

/// Initial saturations as a function of position.
///   uniform:  `values` everywhere.
///   block:    `left` for x < split, `right` otherwise.
///   bands:    equal-width vertical bands, band k filled with phase bands[k].
///   gaussian: s_1 = amplitude exp(-rate |x - center|^2), remainder in phase 0.
struct InitialDatum {
  InitialKind kind = InitialKind::Uniform;
  std::vector<double> values{1.0, 0.0};
  double split = 0.5;
  std::vector<double> left{0.0, 1.0};
  std::vector<double> right{1.0, 0.0};
  std::vector<int> bands{0, 1};
  double amplitude = 1.0;
  double rate = 4.0;
  Point center{0.0, 0.0};

  /// Saturation vector at a point.
  Eigen::VectorXd evaluate(const Point& x, int num_phases) const;

  bool operator==(const InitialDatum&) const = default;
};

struct RunConfig {
  std::string preset;
  Box domain;
  int nx = 16;
  int ny = 16;
  PhaseSet phases{{Phase{}, Phase{}}};
  std::string capillary = "linear";  // brooks_corey | linear | quadratic3
  double alpha = 1.0;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  InitialDatum initial;
  double tau = 0.05;
  double t_end = 1.0;
  SolverChoice solver = SolverChoice::Both;
  Alg2Config alg2;
  FvConfig fv;
  std::string output_dir = "out";
  std::vector<double> snapshots;
  bool vtk = false;

  CapillaryModel capillary_model() const;
  /// Number of JKO steps covering [0, t_end].
  int jko_steps() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

/// Names accepted by `preset_config`.
std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
RunConfig preset_config(const std::string& name);

/// INI-style text: [section] headers and key = value lines, ';' or '#'
/// comments. A [scenario] preset key, if present, is applied first and the
/// remaining keys override it. Unknown sections and keys are rejected.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::filesystem::path& path);

/// Full text form of a config; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

using EnvLookup = std::function<const char*(const char*)>;
/// Applies PFL_<SECTION>_<KEY> variables for the alg2 and fv sections,
/// e.g. PFL_ALG2_TOL or PFL_FV_NEWTON_TOL.
void apply_env_overrides(RunConfig& config, const EnvLookup& lookup);
void apply_env_overrides(RunConfig& config);

/// Throws ConfigError naming the first invalid field.
void validate_config(const RunConfig& config);

/// Cell averages of the initial datum over the finite-volume cells of the
/// configured grid, and over the dual cells of the grid vertices.
SaturationState initial_cell_state(const RunConfig& config);
SaturationState initial_nodal_state(const RunConfig& config);

std::string to_string(SolverChoice s);
SolverChoice parse_solver(const std::string& s);

}  // namespace pflow
