#include "pflow/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "pflow/errors.hpp"

namespace pflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool outside_interior_simplex(const Eigen::Ref<const Eigen::VectorXd>& s_star) {
  if (s_star.size() > 0 && s_star.minCoeff() < -kSimplexTolerance) return true;
  return s_star.sum() > 1.0 + kSimplexTolerance;
}

double clamp01(double s) { return std::clamp(s, 0.0, 1.0); }

}  // namespace

double gravity_potential(double density, const Point& gravity, const Point& x) {
  return -density * gravity.dot(x);
}

double PhaseSet::potential(int i, const Point& x) const {
  return gravity_potential(phases[i].density, gravity, x);
}

Eigen::VectorXd PhaseSet::potentials(const Point& x) const {
  Eigen::VectorXd psi(size());
  for (int i = 0; i < size(); ++i) psi[i] = potential(i, x);
  return psi;
}

void PhaseSet::validate() const {
  if (phases.size() < 2) throw std::invalid_argument("at least two phases are required");
  for (std::size_t i = 0; i < phases.size(); ++i) {
    if (!(phases[i].viscosity > 0.0)) {
      std::ostringstream os;
      os << "phase " << i << ": viscosity must be positive";
      throw std::invalid_argument(os.str());
    }
    if (!(phases[i].density >= 0.0)) {
      std::ostringstream os;
      os << "phase " << i << ": density must be non-negative";
      throw std::invalid_argument(os.str());
    }
  }
  if (!(permeability > 0.0)) throw std::invalid_argument("permeability must be positive");
  if (porosity != 1.0) throw std::invalid_argument("porosity must be 1 (time is rescaled)");
}

// --- CapillaryModel -------------------------------------------------------

std::string CapillaryModel::name() const {
  return std::visit(overloaded{[](const BrooksCorey&) { return std::string("brooks_corey"); },
                               [](const LinearTwoPhase&) { return std::string("linear"); },
                               [](const QuadraticThreePhase&) { return std::string("quadratic3"); }},
                    kind_);
}

int CapillaryModel::num_phases() const {
  return std::holds_alternative<QuadraticThreePhase>(kind_) ? 3 : 2;
}

double CapillaryModel::potential(const Eigen::Ref<const Eigen::VectorXd>& s_star) const {
  if (s_star.size() != num_interior()) throw std::invalid_argument("s* has wrong length");
  if (outside_interior_simplex(s_star)) return kInf;
  return std::visit(
      overloaded{[&](const BrooksCorey& m) {
                   const double s = clamp01(s_star[0]);
                   return 2.0 * m.alpha * (1.0 - std::sqrt(1.0 - s));
                 },
                 [&](const LinearTwoPhase& m) { return 0.5 * m.alpha * s_star[0] * s_star[0]; },
                 [&](const QuadraticThreePhase& m) {
                   return 0.5 * m.alpha1 * s_star[0] * s_star[0] + 0.5 * m.alpha2 * s_star[1] * s_star[1];
                 }},
      kind_);
}

Eigen::VectorXd CapillaryModel::pressures(const Eigen::Ref<const Eigen::VectorXd>& s_star) const {
  if (s_star.size() != num_interior()) throw std::invalid_argument("s* has wrong length");
  if (const auto* bc = std::get_if<BrooksCorey>(&kind_)) {
    if (s_star[0] >= 1.0) throw NumericalError("Brooks-Corey capillary pressure is singular at s_1 >= 1");
    return Eigen::VectorXd::Constant(1, bc->alpha / std::sqrt(1.0 - s_star[0]));
  }
  return pressures_clamped(s_star, 0.0);
}

Eigen::VectorXd CapillaryModel::pressures_clamped(const Eigen::Ref<const Eigen::VectorXd>& s_star, double floor,
                                                  Eigen::MatrixXd* jacobian) const {
  const int n = num_interior();
  Eigen::VectorXd p(n);
  if (jacobian) jacobian->setZero(n, n);
  std::visit(overloaded{[&](const BrooksCorey& m) {
                          const double gap = 1.0 - s_star[0];
                          if (gap > floor) {
                            p[0] = m.alpha / std::sqrt(gap);
                            if (jacobian) (*jacobian)(0, 0) = 0.5 * m.alpha / (gap * std::sqrt(gap));
                          } else {
                            p[0] = m.alpha / std::sqrt(floor);
                          }
                        },
                        [&](const LinearTwoPhase& m) {
                          p[0] = m.alpha * s_star[0];
                          if (jacobian) (*jacobian)(0, 0) = m.alpha;
                        },
                        [&](const QuadraticThreePhase& m) {
                          p[0] = m.alpha1 * s_star[0];
                          p[1] = m.alpha2 * s_star[1];
                          if (jacobian) {
                            (*jacobian)(0, 0) = m.alpha1;
                            (*jacobian)(1, 1) = m.alpha2;
                          }
                        }},
             kind_);
  return p;
}

std::optional<double> CapillaryModel::lipschitz() const {
  return std::visit(overloaded{[](const BrooksCorey&) -> std::optional<double> { return std::nullopt; },
                               [](const LinearTwoPhase& m) -> std::optional<double> { return m.alpha; },
                               [](const QuadraticThreePhase& m) -> std::optional<double> {
                                 return std::max(m.alpha1, m.alpha2);
                               }},
                    kind_);
}

double CapillaryModel::inverse_pressure(double p) const {
  return std::visit(
      overloaded{[&](const BrooksCorey& m) {
                   if (p <= m.alpha) return 0.0;
                   const double r = m.alpha / p;
                   return clamp01(1.0 - r * r);
                 },
                 [&](const LinearTwoPhase& m) { return clamp01(p / m.alpha); },
                 [&](const QuadraticThreePhase&) -> double {
                   throw std::invalid_argument("inverse_pressure requires a two-phase model");
                 }},
      kind_);
}

Eigen::VectorXd CapillaryModel::prox_energy(const Eigen::Ref<const Eigen::VectorXd>& cbar,
                                            const Eigen::Ref<const Eigen::VectorXd>& psi, double tau) const {
  if (cbar.size() != num_phases() || psi.size() != num_phases())
    throw std::invalid_argument("prox_energy: vector length does not match phase count");
  return std::visit(
      overloaded{[&](const BrooksCorey& m) -> Eigen::VectorXd {
                   return prox_energy_brooks_corey(cbar, psi, tau, m.alpha);
                 },
                 [&](const LinearTwoPhase& m) -> Eigen::VectorXd {
                   // Same objective as the three-phase one restricted to s_2 = 0.
                   const double gamma = cbar[1] - tau * psi[1] - cbar[0] + tau * psi[0] + 1.0;
                   const double c1 = clamp01(gamma / (2.0 + tau * m.alpha));
                   return Eigen::Vector2d(1.0 - c1, c1);
                 },
                 [&](const QuadraticThreePhase& m) -> Eigen::VectorXd {
                   return prox_energy_quadratic3(cbar, psi, tau, m.alpha1, m.alpha2);
                 }},
      kind_);
}

// --- Functionals ----------------------------------------------------------

double total_energy(const SaturationState& state, std::span<const Cell> cells, const CapillaryModel& model,
                    const PhaseSet& phases) {
  if (static_cast<std::size_t>(state.num_points()) != cells.size() || state.num_phases() != phases.size() ||
      state.num_phases() != model.num_phases())
    throw std::invalid_argument("total_energy: dimension mismatch");
  double energy = 0.0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const int K = static_cast<int>(k);
    const auto row = state.values().row(K);
    if (row.minCoeff() < -kSimplexTolerance || std::abs(row.sum() - 1.0) > kSimplexTolerance) return kInf;
    double density = model.potential(state.interior(K));
    for (int i = 0; i < state.num_phases(); ++i) density += row[i] * phases.potential(i, cells[k].center);
    energy += density * cells[k].measure;
  }
  return energy;
}

double total_entropy(const SaturationState& state, std::span<const Cell> cells, const PhaseSet& phases) {
  if (static_cast<std::size_t>(state.num_points()) != cells.size() || state.num_phases() != phases.size())
    throw std::invalid_argument("total_entropy: dimension mismatch");
  double h_total = 0.0;
  for (int i = 0; i < state.num_phases(); ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const double s = state(static_cast<int>(k), i);
      if (s < -1e-12) throw std::domain_error("total_entropy: negative saturation");
      const double h = s > 0.0 ? s * std::log(s) - s + 1.0 : 1.0;
      sum += h * cells[k].measure;
    }
    h_total += phases.phases[i].viscosity * sum;
  }
  return h_total;
}

// --- Proximal operators ---------------------------------------------------

Eigen::Vector2d prox_energy_brooks_corey(const Eigen::Vector2d& cbar, const Eigen::Vector2d& psi, double tau,
                                         double alpha) {
  if (tau < 0.0 || alpha < 0.0) throw std::invalid_argument("prox_energy_brooks_corey: tau, alpha must be >= 0");
  // g(c) = 2c + beta + tau alpha (1 - c)^{-1/2}, strictly increasing on (-inf, 1).
  const double beta = -cbar[1] + tau * psi[1] + cbar[0] - tau * psi[0] - 1.0;
  const double ta = tau * alpha;
  if (ta == 0.0) {
    const double c = std::clamp(-0.5 * beta, 0.0, 1.0);
    return {1.0 - c, c};
  }
  auto g = [&](double c) { return 2.0 * c + beta + ta / std::sqrt(1.0 - c); };
  if (g(0.0) >= 0.0) return {1.0, 0.0};

  // With u = (1 - c)^{1/2} the root solves h(u) = 2u^3 - (2 + beta)u - tau alpha = 0,
  // which has a single positive root. h is convex on u > 0, so Newton started
  // to the right of the root decreases monotonically onto it; the bracket
  // [lo, hi] guards against rounding.
  auto h = [&](double u) { return (2.0 * u * u - (2.0 + beta)) * u - ta; };
  double lo = 0.0;
  double hi = std::max({std::sqrt(std::max(0.0, 2.0 + beta)), std::cbrt(ta), 1e-300});
  hi = std::min(hi, 1.0);  // g(0) < 0 places the root below u = 1
  double u = hi;
  for (int it = 0; it < 200; ++it) {
    const double hu = h(u);
    if (hu > 0.0) hi = u; else lo = u;
    if (hu == 0.0 || hi - lo <= 1e-16 * hi) break;
    const double dh = 6.0 * u * u - (2.0 + beta);
    double next = dh > 0.0 ? u - hu / dh : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - u) <= 1e-17 + 1e-16 * u) {
      u = next;
      break;
    }
    u = next;
  }
  const double c = 1.0 - u * u;
  if (!(c >= 0.0 && c < 1.0) || !(u > 0.0)) {
    std::ostringstream os;
    os << "Brooks-Corey prox root failed: beta=" << beta << " tau*alpha=" << ta;
    throw NumericalError(os.str());
  }
  return {1.0 - c, c};
}

double quadratic3_prox_objective(double c1, double c2, const Eigen::Vector3d& cbar, const Eigen::Vector3d& psi,
                                 double tau, double alpha1, double alpha2) {
  const double e1 = c1 - cbar[1] + tau * psi[1];
  const double e2 = c2 - cbar[2] + tau * psi[2];
  const double e0 = c1 + c2 + cbar[0] - tau * psi[0] - 1.0;
  return 0.5 * (e1 * e1 + e2 * e2 + e0 * e0) + 0.5 * tau * (alpha1 * c1 * c1 + alpha2 * c2 * c2);
}

Eigen::Vector3d prox_energy_quadratic3(const Eigen::Vector3d& cbar, const Eigen::Vector3d& psi, double tau,
                                       double alpha1, double alpha2) {
  if (tau < 0.0 || alpha1 < 0.0 || alpha2 < 0.0)
    throw std::invalid_argument("prox_energy_quadratic3: tau, alpha must be >= 0");
  const double g1 = cbar[1] - tau * psi[1] - cbar[0] + tau * psi[0] + 1.0;
  const double g2 = cbar[2] - tau * psi[2] - cbar[0] + tau * psi[0] + 1.0;
  const double d1 = 2.0 + tau * alpha1;
  const double d2 = 2.0 + tau * alpha2;
  const double det = d1 * d2 - 1.0;
  const double u1 = (d2 * g1 - g2) / det;
  const double u2 = (d1 * g2 - g1) / det;
  if (u1 >= 0.0 && u2 >= 0.0 && u1 + u2 <= 1.0) return {1.0 - u1 - u2, u1, u2};

  auto objective = [&](double c1, double c2) {
    return quadratic3_prox_objective(c1, c2, cbar, psi, tau, alpha1, alpha2);
  };
  // Boundary of Delta*: {c1 = 0}, {c2 = 0}, {c1 + c2 = 1}; each a 1D quadratic.
  const double a = std::clamp(g2 / d2, 0.0, 1.0);
  const double b = std::clamp(g1 / d1, 0.0, 1.0);
  const double t = std::clamp((g1 - g2 + 1.0 + tau * alpha2) / (2.0 + tau * alpha1 + tau * alpha2), 0.0, 1.0);
  const std::array<Eigen::Vector2d, 3> candidates{Eigen::Vector2d(0.0, a), Eigen::Vector2d(b, 0.0),
                                                  Eigen::Vector2d(t, 1.0 - t)};
  Eigen::Vector2d best = candidates[0];
  double best_val = objective(best[0], best[1]);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double v = objective(candidates[k][0], candidates[k][1]);
    if (v < best_val) {
      best_val = v;
      best = candidates[k];
    }
  }
  return {std::max(0.0, 1.0 - best[0] - best[1]), best[0], best[1]};
}

}  // namespace pflow
