#include "pflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <Eigen/QR>

namespace pflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double max_simplex_violation(const SaturationState& s) {
  if (s.num_points() == 0) return 0.0;
  return (s.values().rowwise().sum().array() - 1.0).abs().maxCoeff();
}

double entropy_or_nan(const SaturationState& s, std::span<const Cell> cells, const PhaseSet& phases) {
  try {
    return total_entropy(s, cells, phases);
  } catch (const std::domain_error&) {
    return kNaN;
  }
}

double relative_drift(double value, double reference) {
  return std::abs(value - reference) / std::max(std::abs(reference), std::numeric_limits<double>::min());
}

}  // namespace

std::vector<double> DiagnosticsSeries::times() const {
  std::vector<double> t;
  t.reserve(rows.size());
  for (const auto& r : rows) t.push_back(r.t);
  return t;
}

std::vector<double> DiagnosticsSeries::energies() const {
  std::vector<double> e;
  e.reserve(rows.size());
  for (const auto& r : rows) e.push_back(r.energy);
  return e;
}

void DiagnosticsSeries::write_csv(std::ostream& out) const {
  const std::size_t np = rows.empty() ? 0 : rows.front().masses.size();
  out << "t,energy";
  for (std::size_t i = 0; i < np; ++i) out << ",mass_" << i;
  out << ",entropy,min_saturation,simplex_violation,dissipation,capillary_dirichlet,action,iterations\n";
  out << std::setprecision(15);
  for (const auto& r : rows) {
    out << r.t << ',' << r.energy;
    for (double m : r.masses) out << ',' << m;
    out << ',' << r.entropy << ',' << r.min_saturation << ',' << r.simplex_violation << ',' << r.dissipation << ','
        << r.capillary_dirichlet << ',' << r.action << ',' << r.iterations << '\n';
  }
}

DiagnosticsSeries fv_series(const FvTrajectory& trajectory) {
  DiagnosticsSeries series;
  series.scheme = "fv";
  for (const auto& st : trajectory.steps) {
    DiagnosticsRow row;
    row.t = st.t;
    row.energy = st.energy;
    row.masses = st.masses;
    row.entropy = st.entropy;
    row.min_saturation = st.min_saturation;
    row.simplex_violation = st.max_simplex_violation;
    row.dissipation = st.dissipation;
    row.capillary_dirichlet = st.capillary_dirichlet;
    row.action = kNaN;
    row.iterations = st.newton_iterations;
    series.rows.push_back(std::move(row));
  }
  return series;
}

DiagnosticsSeries alg2_series(const Alg2Solver& solver, const Alg2Trajectory& trajectory) {
  DiagnosticsSeries series;
  series.scheme = "alg2";
  for (std::size_t n = 0; n < trajectory.states.size(); ++n) {
    const auto& s = trajectory.states[n];
    DiagnosticsRow row;
    row.t = trajectory.times[n];
    row.energy = trajectory.energies[n];
    row.masses = trajectory.masses[n];
    row.entropy = entropy_or_nan(s, solver.nodal_cells(), solver.phases());
    row.min_saturation = s.values().minCoeff();
    row.simplex_violation = max_simplex_violation(s);
    row.dissipation = kNaN;
    row.capillary_dirichlet = kNaN;
    row.action = n == 0 ? kNaN : trajectory.actions[n - 1].total;
    row.iterations = n == 0 ? 0 : trajectory.iterations[n - 1];
    series.rows.push_back(std::move(row));
  }
  return series;
}

double steady_state_mass(std::span<const Cell> cells, const CapillaryModel& model, const PhaseSet& phases,
                         double gamma, Eigen::VectorXd* s1) {
  if (phases.size() != 2) throw std::invalid_argument("steady state requires two phases");
  const double drho = phases.phases[1].density - phases.phases[0].density;
  double mass = 0.0;
  if (s1) s1->resize(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const double v = model.inverse_pressure(drho * phases.gravity.dot(cells[k].center) + gamma);
    mass += v * cells[k].measure;
    if (s1) (*s1)[static_cast<Eigen::Index>(k)] = v;
  }
  return mass;
}

SteadyState2Phase steady_state_two_phase(std::span<const Cell> cells, const CapillaryModel& model,
                                         const PhaseSet& phases, double mass) {
  if (model.num_phases() != 2 || phases.size() != 2) throw std::invalid_argument("steady state requires two phases");
  double domain = 0.0;
  for (const auto& c : cells) domain += c.measure;
  if (!(mass >= 0.0 && mass <= domain * (1.0 + 1e-14)))
    throw std::invalid_argument("steady state: mass outside [0, |Omega|]");
  const double tol = 1e-14 * std::max(1.0, domain);
  const double drho = phases.phases[1].density - phases.phases[0].density;

  // Below lo every cell is empty.
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& c : cells) top = std::max(top, drho * phases.gravity.dot(c.center));
  const double pi0 = model.pressures(Eigen::VectorXd::Zero(1))[0];
  double lo = pi0 - top;
  SteadyState2Phase out;
  if (mass <= tol) {
    out.gamma = lo;
    steady_state_mass(cells, model, phases, lo, &out.s1);
    return out;
  }
  double width = 1.0;
  double hi = lo + width;
  while (steady_state_mass(cells, model, phases, hi) < mass - tol) {
    lo = hi;
    width *= 2.0;
    hi = lo + width;
    if (!std::isfinite(hi)) throw NumericalError("steady state: mass map does not reach the requested mass");
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double m = steady_state_mass(cells, model, phases, mid);
    if (std::abs(m - mass) <= tol) {
      lo = hi = mid;
      break;
    }
    (m < mass ? lo : hi) = mid;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid))) break;
  }
  out.gamma = 0.5 * (lo + hi);
  steady_state_mass(cells, model, phases, out.gamma, &out.s1);
  return out;
}

SaturationState steady_state_saturations(const SteadyState2Phase& steady) {
  SaturationState s(static_cast<int>(steady.s1.size()), 2);
  s.values().col(1) = steady.s1;
  s.values().col(0) = 1.0 - steady.s1.array();
  return s;
}

std::vector<double> relative_energy_series(const std::vector<double>& energies, double steady_energy) {
  std::vector<double> rel;
  rel.reserve(energies.size());
  for (double e : energies) rel.push_back(e - steady_energy);
  return rel;
}

TotalSquareDistanceCheck total_square_distance_check(const std::vector<double>& actions,
                                                     const std::vector<double>& energies, double tau,
                                                     std::optional<double> inf_energy) {
  if (!(tau > 0.0)) throw std::invalid_argument("time step must be positive");
  TotalSquareDistanceCheck out;
  for (double a : actions) out.lhs += 2.0 * a / tau;
  if (!energies.empty()) {
    const double inf = inf_energy ? *inf_energy : *std::min_element(energies.begin(), energies.end());
    out.rhs = 2.0 * (energies.front() - inf);
  }
  const double bound = out.rhs * (1.0 + 1e-6) + 1e-8;
  out.margin = bound - out.lhs;
  out.pass = out.lhs <= bound;
  return out;
}

FieldComparison compare_fields(const SaturationState& a, const SaturationState& b, std::span<const Cell> cells) {
  if (a.num_points() != b.num_points() || a.num_phases() != b.num_phases() ||
      a.num_points() != static_cast<int>(cells.size()))
    throw std::invalid_argument("compare_fields: shape mismatch");
  FieldComparison out;
  out.difference = SaturationState(a.values() - b.values());
  out.l1.assign(a.num_phases(), 0.0);
  out.linf.assign(a.num_phases(), 0.0);
  for (int i = 0; i < a.num_phases(); ++i)
    for (int k = 0; k < a.num_points(); ++k) {
      const double d = std::abs(out.difference(k, i));
      out.l1[i] += d * cells[k].measure;
      out.linf[i] = std::max(out.linf[i], d);
    }
  return out;
}

StateAudit audit_state(const SaturationState& state, std::span<const Cell> cells) {
  if (state.num_points() != static_cast<int>(cells.size())) throw std::invalid_argument("audit_state: shape mismatch");
  StateAudit out;
  out.masses.assign(state.num_phases(), 0.0);
  for (int k = 0; k < state.num_points(); ++k)
    for (int i = 0; i < state.num_phases(); ++i) out.masses[i] += state(k, i) * cells[k].measure;
  out.min_saturation = state.num_points() ? state.values().minCoeff() : 0.0;
  out.max_simplex_violation = max_simplex_violation(state);
  return out;
}

LogLinearFit fit_log_linear_tail(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size()) throw std::invalid_argument("fit_log_linear_tail: size mismatch");
  std::vector<double> xs, ys;
  for (std::size_t n = t.size() / 2; n < t.size(); ++n)
    if (y[n] > 0.0) {
      xs.push_back(t[n]);
      ys.push_back(std::log(y[n]));
    }
  LogLinearFit fit;
  fit.points = static_cast<int>(xs.size());
  if (xs.size() < 2) return fit;
  Eigen::MatrixXd design(xs.size(), 2);
  Eigen::VectorXd rhs(ys.size());
  for (std::size_t n = 0; n < xs.size(); ++n) {
    design(n, 0) = 1.0;
    design(n, 1) = xs[n];
    rhs[n] = ys[n];
  }
  const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(rhs);
  fit.intercept = coef[0];
  fit.slope = coef[1];
  const double mean = rhs.mean();
  const double ss_tot = (rhs.array() - mean).square().sum();
  const double ss_res = (rhs - design * coef).squaredNorm();
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

void SummaryReport::add(std::string name, bool pass, double value, double threshold) {
  checks.push_back({std::move(name), pass, value, threshold});
}

void SummaryReport::log(std::string name, double value) { values.emplace_back(std::move(name), value); }

bool SummaryReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

void SummaryReport::write(std::ostream& out) const {
  out << std::setprecision(6);
  for (const auto& c : checks)
    out << (c.pass ? "PASS " : "FAIL ") << c.name << "  value=" << c.value << "  threshold=" << c.threshold << '\n';
  for (const auto& [name, v] : values) out << "INFO " << name << "  value=" << v << '\n';
}

void add_fv_checks(SummaryReport& report, const FvTrajectory& trajectory, double newton_tol) {
  const auto& steps = trajectory.steps;
  if (steps.empty()) return;
  const auto& m0 = steps.front().masses;
  const double e0 = steps.front().energy;
  double drift = 0.0, min_s = steps.front().min_saturation, simplex = 0.0, rise = -std::numeric_limits<double>::infinity();
  double min_d = 0.0, gauge = 0.0, cumulative = 0.0, min_face = std::numeric_limits<double>::infinity();
  double late_rate = 0.0;
  for (std::size_t n = 1; n < steps.size(); ++n) {
    const auto& st = steps[n];
    for (std::size_t i = 0; i < m0.size(); ++i)
      if (m0[i] > 0.0) drift = std::max(drift, relative_drift(st.masses[i], m0[i]));
    min_s = std::min(min_s, st.min_saturation);
    simplex = std::max(simplex, st.max_simplex_violation);
    rise = std::max(rise, st.energy + st.tau * st.dissipation - steps[n - 1].energy);
    min_d = std::min(min_d, st.dissipation);
    gauge = std::max(gauge, std::abs(st.gauge));
    cumulative += st.tau * st.capillary_dirichlet;
    min_face = std::min(min_face, st.min_face_saturation);
  }
  const double t_end = steps.back().t;
  if (steps.size() > 2) {
    // Average growth rate of the cumulative Dirichlet energy over the second half.
    const std::size_t half = steps.size() / 2;
    double late = 0.0;
    for (std::size_t n = half + 1; n < steps.size(); ++n) late += steps[n].tau * steps[n].capillary_dirichlet;
    const double span = t_end - steps[half].t;
    late_rate = span > 0.0 ? late / span : 0.0;
  }
  const double energy_tol = 1e-8 * (1.0 + std::abs(e0));
  report.add("fv.mass_conservation", drift <= 1e-12, drift, 1e-12);
  report.add("fv.positivity", min_s >= -10.0 * newton_tol, min_s, -10.0 * newton_tol);
  report.add("fv.simplex", simplex <= 10.0 * newton_tol, simplex, 10.0 * newton_tol);
  if (steps.size() > 1) report.add("fv.energy_decay", rise <= energy_tol, rise, energy_tol);
  report.add("fv.dissipation_nonnegative", min_d >= 0.0, min_d, 0.0);
  report.add("fv.gauge", gauge <= 100.0 * newton_tol, gauge, 100.0 * newton_tol);
  report.add("fv.capillary_dirichlet_finite", std::isfinite(cumulative), cumulative, 0.0);
  report.log("fv.capillary_dirichlet_late_rate", late_rate);
  report.log("fv.min_face_total_saturation", steps.size() > 1 ? min_face : 0.0);
  report.log("fv.rejected_steps", trajectory.rejected_steps);
  report.log("fv.accepted_steps", static_cast<double>(steps.size() - 1));
}

void add_alg2_checks(SummaryReport& report, const Alg2Trajectory& trajectory, double tau) {
  if (trajectory.states.empty()) return;
  const double e0 = trajectory.energies.front();
  double drift = 0.0, min_s = trajectory.states.front().values().minCoeff(), simplex = 0.0;
  double rise = -std::numeric_limits<double>::infinity();
  int max_iter = 0;
  for (std::size_t n = 1; n < trajectory.states.size(); ++n) {
    const auto& prev = trajectory.masses[n - 1];
    for (std::size_t i = 0; i < prev.size(); ++i)
      if (prev[i] > 0.0) drift = std::max(drift, relative_drift(trajectory.masses[n][i], prev[i]));
    min_s = std::min(min_s, trajectory.states[n].values().minCoeff());
    simplex = std::max(simplex, max_simplex_violation(trajectory.states[n]));
    rise = std::max(rise, trajectory.energies[n] - trajectory.energies[n - 1]);
    max_iter = std::max(max_iter, trajectory.iterations[n - 1]);
  }
  const double energy_tol = 1e-8 * (1.0 + std::abs(e0));
  report.add("alg2.mass_drift_per_step", drift <= 1e-6, drift, 1e-6);
  report.add("alg2.positivity", min_s >= -1e-8, min_s, -1e-8);
  report.add("alg2.simplex", simplex <= 1e-6, simplex, 1e-6);
  if (trajectory.states.size() > 1) report.add("alg2.energy_monotone", rise <= energy_tol, rise, energy_tol);
  std::vector<double> actions;
  for (const auto& a : trajectory.actions) actions.push_back(a.total);
  const auto tsd = total_square_distance_check(actions, trajectory.energies, tau);
  report.add("alg2.total_square_distance", tsd.pass, tsd.lhs, tsd.rhs);
  report.log("alg2.max_iterations", max_iter);
}

}  // namespace pflow
