#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pflow/alg2.hpp"
#include "pflow/fv.hpp"
#include "pflow/mesh.hpp"
#include "pflow/physics.hpp"

namespace pflow {

/// One recorded time. Quantities a scheme does not provide are NaN
/// (iterations: -1).
struct DiagnosticsRow {
  double t = 0.0;
  double energy = 0.0;
  std::vector<double> masses;
  double entropy = 0.0;
  double min_saturation = 0.0;
  double simplex_violation = 0.0;
  double dissipation = 0.0;
  double capillary_dirichlet = 0.0;
  double action = 0.0;
  int iterations = -1;
};

struct DiagnosticsSeries {
  std::string scheme;
  std::vector<DiagnosticsRow> rows;

  std::vector<double> times() const;
  std::vector<double> energies() const;
  /// Header t,energy,mass_0..mass_N,entropy,min_saturation,simplex_violation,
  /// dissipation,capillary_dirichlet,action,iterations.
  void write_csv(std::ostream& out) const;
};

DiagnosticsSeries fv_series(const FvTrajectory& trajectory);
DiagnosticsSeries alg2_series(const Alg2Solver& solver, const Alg2Trajectory& trajectory);

struct SteadyState2Phase {
  Eigen::VectorXd s1;  // per cell
  double gamma = 0.0;
};

/// Gravity-capillarity equilibrium with prescribed oil volume: per cell
/// s_1 = clamp(pi_1^{-1}((rho_1 - rho_0) g.x_K + gamma), 0, 1), gamma from
/// bisection on the (non-decreasing) mass map.
SteadyState2Phase steady_state_two_phase(std::span<const Cell> cells, const CapillaryModel& model,
                                         const PhaseSet& phases, double mass);

/// Mass map M(gamma) = sum_K s_1(gamma)_K m_K.
double steady_state_mass(std::span<const Cell> cells, const CapillaryModel& model, const PhaseSet& phases,
                         double gamma, Eigen::VectorXd* s1 = nullptr);

SaturationState steady_state_saturations(const SteadyState2Phase& steady);

/// E(s(t)) - E(s_inf) for each entry of `energies`.
std::vector<double> relative_energy_series(const std::vector<double>& energies, double steady_energy);

struct TotalSquareDistanceCheck {
  bool pass = false;
  double lhs = 0.0;  // sum_n 2 action_n / tau
  double rhs = 0.0;  // 2 (E(s0) - inf E)
  double margin = 0.0;
};

/// `energies[0]` is E(s0); inf E is the run minimum unless `inf_energy` is given.
TotalSquareDistanceCheck total_square_distance_check(const std::vector<double>& actions,
                                                     const std::vector<double>& energies, double tau,
                                                     std::optional<double> inf_energy = std::nullopt);

struct FieldComparison {
  std::vector<double> l1;    // per phase, sum_K |a - b| m_K
  std::vector<double> linf;  // per phase
  SaturationState difference;  // a - b
};

FieldComparison compare_fields(const SaturationState& a, const SaturationState& b, std::span<const Cell> cells);

struct StateAudit {
  std::vector<double> masses;
  double min_saturation = 0.0;
  double max_simplex_violation = 0.0;
};

StateAudit audit_state(const SaturationState& state, std::span<const Cell> cells);

struct LogLinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int points = 0;
};

/// Least-squares fit of log y = intercept + slope t over the second half of
/// the series. Points with y <= 0 are skipped.
LogLinearFit fit_log_linear_tail(const std::vector<double>& t, const std::vector<double>& y);

/// Plain-text pass/fail listing.
struct SummaryReport {
  struct Check {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
  };
  std::vector<Check> checks;
  std::vector<std::pair<std::string, double>> values;  // logged only

  void add(std::string name, bool pass, double value, double threshold);
  void log(std::string name, double value);
  bool all_pass() const;
  void write(std::ostream& out) const;
};

/// Checks on a finished FV run: mass, positivity, simplex, energy decay,
/// gauge, and the growth of the cumulative capillary Dirichlet energy.
void add_fv_checks(SummaryReport& report, const FvTrajectory& trajectory, double newton_tol);
/// Checks on a finished ALG2 run: mass, positivity, simplex, energy
/// monotonicity, total square distance.
void add_alg2_checks(SummaryReport& report, const Alg2Trajectory& trajectory, double tau);

}  // namespace pflow
