#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>

#include "pflow/mesh.hpp"
#include "pflow/physics.hpp"

namespace pflow {

/// Augmented-Lagrangian (ALG2) solver settings for one JKO step.
struct Alg2Config {
  double r = 1.0;             // augmentation parameter
  /// Per-phase augmentation of the interior (a, b) block; empty means r for
  /// every phase. The t = 1 trace block always uses r.
  std::vector<double> phase_r;
  double tol = 1e-6;          // stopping tolerance on the scaled saddle-point residuals
  int max_iter = 5000;
  int n_inner = 1;            // time intervals of the space-time mesh
  double linear_tol = 1e-10;  // relative residual required from the elliptic solve
  /// Extra stopping requirement on the per-phase relative mass defect of the
  /// terminal saturation (0 disables it).
  double mass_tol = 1e-7;
  /// Restarted Nesterov extrapolation of (q, sigma) between iterations.
  bool accelerate = true;
  /// Residual balancing: every `adapt_every` iterations the augmentation is
  /// doubled or halved when one scaled residual exceeds the other by
  /// `adapt_ratio`; 0 keeps r fixed.
  int adapt_every = 25;
  double adapt_ratio = 5.0;
  bool accept_nonconverged = false;

  bool operator==(const Alg2Config&) const = default;
};

/// Row-major field with one row per space-time element (spatial components).
using ElementField = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Saddle-point variables of one phase.
///
/// Time components live on the vertical mesh edges (one per spatial vertex and
/// time interval, index l * num_vertices + j); spatial components live on the
/// space-time elements. The t = 1 trace is indexed by spatial vertex.
struct PhaseUnknowns {
  Eigen::VectorXd phi;  // nodal potential
  Eigen::VectorXd a;    // relaxed d_t phi, per time edge
  ElementField b;       // relaxed grad_x phi, per element
  Eigen::VectorXd c;    // relaxed -phi(1, .), per trace vertex
  Eigen::VectorXd s;    // saturation multiplier, per time edge
  ElementField m;       // momentum multiplier, per element
  Eigen::VectorXd s1;   // terminal saturation multiplier, per trace vertex
};

struct Alg2State {
  std::vector<PhaseUnknowns> phases;
  /// Current multiple of the configured augmentation (residual balancing).
  double r_scale = 1.0;
};

struct ActionValue {
  std::vector<double> per_phase;
  double total = 0.0;
};

/// Euclidean projection onto K = {(a, b) : a + |b|^2 / parabola <= 0}.
/// `b` has `dim` components; results are written to (a_out, b_out).
/// Returns the multiplier lambda (0 when the input is already in K).
double project_parabola(double a, const double* b, int dim, double parabola, double& a_out, double* b_out);

/// Convenience overload for two-dimensional b.
std::pair<double, Eigen::Vector2d> project_parabola(double a, const Eigen::Vector2d& b, double parabola);

/// Largest real root of z^3 - p z^2 - q = 0 for q >= 0 (closed form plus Newton polish).
double largest_cubic_root(double p, double q);

/// Benamou-Brenier action |m|^2 / (2s), with 0 for (s, m) = (0, 0) and +inf otherwise.
double action_density(double s, const double* m, int dim);

struct JkoStepResult {
  SaturationState s_next;  // nodal saturations at t = 1
  ActionValue action;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;
  std::vector<double> primal_history;
  std::vector<double> dual_history;
};

struct Alg2Trajectory {
  std::vector<double> times;
  std::vector<SaturationState> states;  // nodal, states[0] = s0
  std::vector<double> energies;
  std::vector<std::vector<double>> masses;
  std::vector<ActionValue> actions;  // one per JKO step
  std::vector<int> iterations;
  std::vector<double> primal_residuals;
  std::vector<double> dual_residuals;
};

/// Discrete space-time derivatives of a nodal potential.
struct SpaceTimeGradient {
  Eigen::VectorXd dt;  // per time edge
  ElementField dx;     // per element
};

/// ALG2-JKO solver on a structured spatial grid. Saturations are nodal
/// (one row per grid vertex), integrated with the lumped P1 weights.
class Alg2Solver {
 public:
  Alg2Solver(const StructuredGrid& grid, PhaseSet phases, CapillaryModel model, Alg2Config config = {});

  const SpaceTimeMesh& mesh() const { return mesh_; }
  const StructuredGrid& grid() const { return mesh_.spatial; }
  const Alg2Config& config() const { return config_; }
  const PhaseSet& phases() const { return phases_; }
  const CapillaryModel& model() const { return model_; }
  const std::vector<double>& trace_weights() const { return weights_; }
  const std::vector<Cell>& nodal_cells() const { return nodal_cells_; }
  int num_phases() const { return phases_.size(); }
  int num_time_edges() const { return static_cast<int>(edge_weight_.size()); }
  /// Space-time measure attached to each time edge.
  const std::vector<double>& time_edge_weights() const { return edge_weight_; }
  /// Time edge whose saturation each element uses.
  const std::vector<int>& element_time_edge() const { return element_edge_; }
  /// Parabola parameter 2 mu_i / kappa.
  double parabola(int phase) const;
  /// Augmentation of the interior block of a phase.
  double interior_r(int phase) const;

  /// Cold start: phi = 0, q = 0, s = s_prev on every time edge, m = 0, s1 = s_prev.
  Alg2State initial_state(const SaturationState& s_prev) const;

  /// Step 1: phi <- argmin F(phi) + <sigma, Lambda phi> + r/2 |Lambda phi - q|^2, per phase.
  void elliptic_step(Alg2State& state, const SaturationState& s_prev) const;
  /// Step 2: parabola projections for (a, b) and the terminal energy prox for c.
  void prox_step(Alg2State& state, double tau) const;
  /// Step 3: sigma <- sigma + r (Lambda phi - q).
  void multiplier_update(Alg2State& state) const;

  SpaceTimeGradient gradient(const Eigen::VectorXd& phi) const;
  /// Residual of the discrete continuity equation tested against every nodal
  /// basis function (stationarity of the Lagrangian in phi), per phase.
  std::vector<Eigen::VectorXd> continuity_residual(const Alg2State& state, const SaturationState& s_prev) const;
  /// Total action sum_i (mu_i / kappa) int int A(s_i, m_i).
  ActionValue action_value(const Alg2State& state) const;
  /// Largest violation of the discrete parabola constraint
  /// a_e + sum_{T in star(e)} |T| |b_T|^2 / (W_e parabola) <= 0 over all phases and time edges.
  double max_parabola_violation(const Alg2State& state) const;
  /// Pressures read from the terminal potentials: p_i = -phi_i(1) / tau - Psi_i,
  /// shifted so that the reference pressure has zero weighted mean.
  SaturationState recovered_pressures(const Alg2State& state, double tau) const;

  /// Runs Steps 1-3 to convergence. `warm`, when non-null and populated,
  /// provides the start and receives the final iterate.
  JkoStepResult run_jko_step(const SaturationState& s_prev, double tau, Alg2State* warm = nullptr) const;

  using StepObserver = std::function<void(int step, const JkoStepResult&, const Alg2State&)>;

  /// n_steps JKO steps from s0, warm-starting each from the previous one.
  /// `observer` sees every step as soon as it has converged.
  Alg2Trajectory run_trajectory(const SaturationState& s0, double tau, int n_steps,
                                const StepObserver& observer = {}) const;

  std::vector<double> masses(const SaturationState& s) const;
  double energy(const SaturationState& s) const;

 private:
  void project_and_prox(Alg2State& state, const std::vector<SpaceTimeGradient>& grads, double tau) const;
  void ascend(Alg2State& state, const std::vector<SpaceTimeGradient>& grads) const;
  std::vector<SpaceTimeGradient> all_gradients(const Alg2State& state) const;
  double interior_norm_sq(const Eigen::VectorXd& edge, const ElementField& elem) const;
  double trace_norm_sq(const Eigen::VectorXd& trace) const;

  SpaceTimeMesh mesh_;
  PhaseSet phases_;
  CapillaryModel model_;
  Alg2Config config_;
  std::vector<double> weights_;
  std::vector<Cell> nodal_cells_;
  std::vector<Eigen::VectorXd> trace_potentials_;  // Psi(x_j) per trace vertex
  double dt_ = 1.0;                                // inner time step
  std::vector<double> edge_weight_;
  std::vector<int> element_edge_;
  std::vector<int> group_start_;  // elements sharing a time edge, CSR layout
  std::vector<int> group_elements_;
  // One operator per distinct interior augmentation; phase_operator_[i] indexes them.
  std::vector<Eigen::SparseMatrix<double>> stiffness_;
  std::vector<std::shared_ptr<const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>> factor_;
  std::vector<int> phase_operator_;
};

}  // namespace pflow
