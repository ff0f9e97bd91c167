#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "pflow/errors.hpp"
#include "pflow/mesh.hpp"
#include "pflow/physics.hpp"

namespace pflow {

struct FvConfig {
  double newton_tol = 1e-10;
  int max_newton = 50;
  int max_backtracks = 10;
  /// Extra Newton steps taken after convergence while the residual keeps shrinking.
  int polish_steps = 3;
  double tau_floor = 1e-8;
  int redouble_after = 2;
  /// Floor on 1 - s_1 inside Brooks-Corey evaluations.
  double pressure_floor = 1e-12;
  /// Accepted-step times at which full states are kept (t_end is always kept).
  std::vector<double> snapshot_times;

  bool operator==(const FvConfig&) const = default;
};

/// Newton unknowns: per-cell saturations (all phases, s_0 kept consistent
/// with 1 - sum s_i) and reference pressure, plus the bordering multiplier.
struct FvUnknowns {
  SaturationState s;
  Eigen::VectorXd p0;
  double lambda = 0.0;
};

/// v = a (kappa / mu) (p_K + psi_K - p_L - psi_L).
double phase_velocity(double p_k, double p_l, double psi_k, double psi_l, double transmissivity,
                      double viscosity, double permeability);

/// Positive part of the upstream value; v = 0 takes the K side.
double upwind_saturation(double s_k, double s_l, double v);

/// sum_i sum_sigma a_sigma (pi_i(s*_K) - pi_i(s*_L))^2.
double capillary_dirichlet_energy(const SaturationState& state, const FVMesh& mesh, const CapillaryModel& model);

struct NewtonResult {
  FvUnknowns u;
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_history;  // scaled max-norm per iterate
};

/// Per accepted step (step 0 is the initial state).
struct FvStepRecord {
  int step = 0;
  double t = 0.0;
  double tau = 0.0;
  int newton_iterations = 0;
  double energy = 0.0;
  double dissipation = 0.0;
  double entropy = 0.0;  // NaN when a saturation is too negative for the logarithm
  std::vector<double> masses;
  double min_saturation = 0.0;
  double max_simplex_violation = 0.0;
  double capillary_dirichlet = 0.0;
  double gauge = 0.0;
  double min_face_saturation = 0.0;  // min over edges of sum_i s_{i,sigma}
};

struct FvTrajectory {
  std::vector<FvStepRecord> steps;
  std::vector<double> snapshot_times;
  std::vector<SaturationState> snapshots;
  FvUnknowns final_state;
  int rejected_steps = 0;
};

/// Raised when the adaptive controller would go below the step floor.
class StepUnderflowError : public NumericalError {
 public:
  StepUnderflowError(const std::string& what, double time, SaturationState state)
      : NumericalError(what), time_(time), state_(std::move(state)) {}
  double time() const { return time_; }
  const SaturationState& state() const { return state_; }

 private:
  double time_;
  SaturationState state_;
};

/// Implicit upstream-mobility two-point finite-volume scheme.
///
/// Unknown layout: cell K owns entries K (N+1) + (i - 1) for s_i, i = 1..N,
/// and K (N+1) + N for p_0; the bordering multiplier is the last entry.
/// Rows follow the same layout: phase-i conservation, then the phase-summed
/// pressure equation; the last row is the gauge sum_K p_0K m_K = 0.
class FvSolver {
 public:
  FvSolver(FVMesh mesh, PhaseSet phases, CapillaryModel model, FvConfig config = {});

  const FVMesh& mesh() const { return mesh_; }
  const PhaseSet& phases() const { return phases_; }
  const CapillaryModel& model() const { return model_; }
  const FvConfig& config() const { return config_; }
  int num_phases() const { return phases_.size(); }
  int num_unknowns() const { return static_cast<int>(mesh_.num_cells()) * num_phases() + 1; }

  Eigen::VectorXd pack(const FvUnknowns& u) const;
  FvUnknowns unpack(const Eigen::VectorXd& x) const;
  /// Unknowns with the given saturations and zero pressure.
  FvUnknowns initial_unknowns(const SaturationState& s) const;

  Eigen::VectorXd assemble_residual(const FvUnknowns& u, const SaturationState& s_old, double tau) const;
  Eigen::SparseMatrix<double> assemble_jacobian(const FvUnknowns& u, const SaturationState& s_old, double tau) const;
  /// Damped Newton from `guess`. Never throws on non-convergence.
  NewtonResult newton_step_solve(const FvUnknowns& guess, const SaturationState& s_old, double tau) const;

  using StepObserver = std::function<void(const FvStepRecord&, const FvUnknowns&)>;

  /// Adaptive time loop. `observer` sees the initial record and every
  /// accepted step as it happens.
  FvTrajectory run(const SaturationState& s0, double tau_target, double t_end,
                   const StepObserver& observer = {}) const;

  double energy(const SaturationState& s) const;
  std::vector<double> masses(const SaturationState& s) const;
  /// sum_i (kappa / mu_i) sum_sigma a_sigma s_{i,sigma} (delta (p_i + Psi_i))^2.
  double dissipation(const FvUnknowns& u) const;
  /// Phase pressures p_i = p_0 + pi_i(s*) per cell.
  SaturationState phase_pressures(const FvUnknowns& u) const;
  FvStepRecord record(const FvUnknowns& u, int step, double t, double tau, int newton_iterations) const;

 private:
  struct CellState {
    Eigen::VectorXd potential;  // p_i + Psi_i, all phases
    Eigen::MatrixXd dpi;        // d pi_i / d s_j, interior phases
  };
  CellState cell_state(const FvUnknowns& u, int k) const;
  double residual_scale(double tau) const;

  FVMesh mesh_;
  PhaseSet phases_;
  CapillaryModel model_;
  FvConfig config_;
  std::vector<Eigen::VectorXd> cell_potentials_;  // Psi_i(x_K)
};

}  // namespace pflow
