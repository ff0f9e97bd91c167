#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "pflow/mesh.hpp"

namespace pflow {

/// Tolerance on the simplex constraint before the energy is declared infinite.
inline constexpr double kSimplexTolerance = 1e-9;

struct Phase {
  double viscosity = 1.0;
  double density = 0.0;
};

/// Phase table plus the global medium parameters. Phase 0 is the reference phase.
struct PhaseSet {
  std::vector<Phase> phases;
  double permeability = 1.0;
  double porosity = 1.0;
  Point gravity{0.0, -1.0};

  int size() const { return static_cast<int>(phases.size()); }
  /// Gravitational potential Psi_i(x) = -rho_i g.x.
  double potential(int i, const Point& x) const;
  Eigen::VectorXd potentials(const Point& x) const;
  /// Mobility kappa / mu_i.
  double mobility(int i) const { return permeability / phases[i].viscosity; }
  /// Throws std::invalid_argument on mu <= 0, kappa <= 0, rho < 0 or porosity != 1.
  void validate() const;
};

double gravity_potential(double density, const Point& gravity, const Point& x);

/// Per-point phase saturations, one row per cell or node and one column per phase.
class SaturationState {
 public:
  SaturationState() = default;
  SaturationState(int num_points, int num_phases) : values_(Eigen::MatrixXd::Zero(num_points, num_phases)) {}
  explicit SaturationState(Eigen::MatrixXd values) : values_(std::move(values)) {}

  int num_points() const { return static_cast<int>(values_.rows()); }
  int num_phases() const { return static_cast<int>(values_.cols()); }
  double operator()(int point, int phase) const { return values_(point, phase); }
  double& operator()(int point, int phase) { return values_(point, phase); }
  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::MatrixXd& values() { return values_; }
  /// (s_1, ..., s_N) at a point.
  Eigen::VectorXd interior(int point) const {
    return values_.row(point).tail(num_phases() - 1).transpose();
  }

  bool operator==(const SaturationState& o) const { return values_ == o.values_; }

 private:
  Eigen::MatrixXd values_;
};

// Capillary models. Pi is normalised to Pi(0) = 0 in every case.

/// pi_1(s_1) = alpha (1 - s_1)^{-1/2}.
struct BrooksCorey {
  double alpha = 1.0;
};
/// pi_1(s_1) = alpha s_1.
struct LinearTwoPhase {
  double alpha = 1.0;
};
/// pi_i(s_i) = alpha_i s_i for i = 1, 2.
struct QuadraticThreePhase {
  double alpha1 = 1.0;
  double alpha2 = 1.0;
};

class CapillaryModel {
 public:
  using Kind = std::variant<BrooksCorey, LinearTwoPhase, QuadraticThreePhase>;

  CapillaryModel() = default;
  explicit CapillaryModel(Kind kind) : kind_(kind) {}

  const Kind& kind() const { return kind_; }
  std::string name() const;
  int num_phases() const;
  int num_interior() const { return num_phases() - 1; }

  /// Pi(s*), +infinity outside Delta* (beyond kSimplexTolerance).
  double potential(const Eigen::Ref<const Eigen::VectorXd>& s_star) const;
  /// (pi_1, ..., pi_N). Brooks-Corey throws NumericalError for s_1 >= 1.
  Eigen::VectorXd pressures(const Eigen::Ref<const Eigen::VectorXd>& s_star) const;
  /// Brooks-Corey with 1 - s_1 floored at `floor`; other models are unchanged.
  /// Writes the matching Jacobian d pi_i / d s_j when `jacobian` is non-null.
  Eigen::VectorXd pressures_clamped(const Eigen::Ref<const Eigen::VectorXd>& s_star, double floor,
                                    Eigen::MatrixXd* jacobian = nullptr) const;
  /// Upper bound on D^2 Pi; empty when unbounded (Brooks-Corey).
  std::optional<double> lipschitz() const;
  /// True when pi_i depends only on s_i.
  bool separable() const { return true; }
  /// Inverse of pi_1 clamped to [0, 1]; two-phase models only.
  double inverse_pressure(double p) const;

  /// Prox of tau * (Pi + Psi.c + indicator of Delta) at cbar (length N+1),
  /// with psi = (Psi_0(x), ..., Psi_N(x)). Result lies in Delta.
  Eigen::VectorXd prox_energy(const Eigen::Ref<const Eigen::VectorXd>& cbar,
                              const Eigen::Ref<const Eigen::VectorXd>& psi, double tau) const;

 private:
  Kind kind_ = LinearTwoPhase{};
};

/// Capillary pressures pi(s*) of `model`.
inline Eigen::VectorXd capillary_pressure(const CapillaryModel& model,
                                          const Eigen::Ref<const Eigen::VectorXd>& s_star) {
  return model.pressures(s_star);
}
inline double capillary_potential(const CapillaryModel& model,
                                  const Eigen::Ref<const Eigen::VectorXd>& s_star) {
  return model.potential(s_star);
}

/// sum_K (Pi(s*_K) + sum_i s_{i,K} Psi_i(x_K)) m_K; +infinity if a point leaves Delta.
double total_energy(const SaturationState& state, std::span<const Cell> cells,
                    const CapillaryModel& model, const PhaseSet& phases);

/// sum_i mu_i sum_K h(s_{i,K}) m_K with h(s) = s log s - s + 1.
/// Throws std::domain_error for saturations below -1e-12.
double total_entropy(const SaturationState& state, std::span<const Cell> cells, const PhaseSet& phases);

/// Positive part of the root on (-inf, 1) of
///   2c - cbar_1 + tau Psi_1 + cbar_0 - tau Psi_0 - 1 + tau alpha (1 - c)^{-1/2} = 0,
/// returned as (1 - c, c).
Eigen::Vector2d prox_energy_brooks_corey(const Eigen::Vector2d& cbar, const Eigen::Vector2d& psi,
                                         double tau, double alpha);

/// Minimiser over Delta of the three-phase quadratic prox objective.
Eigen::Vector3d prox_energy_quadratic3(const Eigen::Vector3d& cbar, const Eigen::Vector3d& psi,
                                       double tau, double alpha1, double alpha2);

/// Objective minimised by prox_energy_quadratic3, as a function of (c_1, c_2).
double quadratic3_prox_objective(double c1, double c2, const Eigen::Vector3d& cbar,
                                 const Eigen::Vector3d& psi, double tau, double alpha1, double alpha2);

/// Moreau: Prox_{f*}(cbar) = cbar - Prox_f(cbar).
inline Eigen::VectorXd prox_conjugate_via_moreau(const Eigen::Ref<const Eigen::VectorXd>& prox_primal,
                                                 const Eigen::Ref<const Eigen::VectorXd>& cbar) {
  return cbar - prox_primal;
}

}  // namespace pflow
