#include "pflow/fv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/SparseLU>

namespace pflow {

double phase_velocity(double p_k, double p_l, double psi_k, double psi_l, double transmissivity, double viscosity,
                      double permeability) {
  return transmissivity * (permeability / viscosity) * ((p_k - p_l) + (psi_k - psi_l));
}

double upwind_saturation(double s_k, double s_l, double v) { return std::max(v >= 0.0 ? s_k : s_l, 0.0); }

double capillary_dirichlet_energy(const SaturationState& state, const FVMesh& mesh, const CapillaryModel& model) {
  const int nc = static_cast<int>(mesh.num_cells());
  std::vector<Eigen::VectorXd> pi(nc);
  for (int k = 0; k < nc; ++k) pi[k] = model.pressures(state.interior(k));
  double sum = 0.0;
  for (const auto& e : mesh.inner_edges) sum += e.transmissivity * (pi[e.k] - pi[e.l]).squaredNorm();
  return sum;
}

FvSolver::FvSolver(FVMesh mesh, PhaseSet phases, CapillaryModel model, FvConfig config)
    : mesh_(std::move(mesh)), phases_(std::move(phases)), model_(std::move(model)), config_(std::move(config)) {
  phases_.validate();
  if (model_.num_phases() != phases_.size())
    throw std::invalid_argument("capillary model and phase table disagree on the number of phases");
  const auto problems = validate_mesh(mesh_);
  if (!problems.empty()) throw std::invalid_argument("inadmissible mesh: " + problems.front());
  cell_potentials_.reserve(mesh_.num_cells());
  for (const auto& c : mesh_.cells) cell_potentials_.push_back(phases_.potentials(c.center));
}

Eigen::VectorXd FvSolver::pack(const FvUnknowns& u) const {
  const int n = num_phases();
  const int nc = static_cast<int>(mesh_.num_cells());
  Eigen::VectorXd x(num_unknowns());
  for (int k = 0; k < nc; ++k) {
    for (int i = 1; i < n; ++i) x[k * n + i - 1] = u.s(k, i);
    x[k * n + n - 1] = u.p0[k];
  }
  x[nc * n] = u.lambda;
  return x;
}

FvUnknowns FvSolver::unpack(const Eigen::VectorXd& x) const {
  const int n = num_phases();
  const int nc = static_cast<int>(mesh_.num_cells());
  FvUnknowns u;
  u.s = SaturationState(nc, n);
  u.p0.resize(nc);
  for (int k = 0; k < nc; ++k) {
    double rest = 1.0;
    for (int i = 1; i < n; ++i) {
      u.s(k, i) = x[k * n + i - 1];
      rest -= u.s(k, i);
    }
    u.s(k, 0) = rest;
    u.p0[k] = x[k * n + n - 1];
  }
  u.lambda = x[nc * n];
  return u;
}

FvUnknowns FvSolver::initial_unknowns(const SaturationState& s) const {
  if (s.num_points() != static_cast<int>(mesh_.num_cells()) || s.num_phases() != num_phases())
    throw std::invalid_argument("saturation state does not match the finite-volume mesh");
  FvUnknowns u;
  u.s = s;
  u.p0 = Eigen::VectorXd::Zero(s.num_points());
  return u;
}

FvSolver::CellState FvSolver::cell_state(const FvUnknowns& u, int k) const {
  const int n = num_phases();
  CellState cs;
  const Eigen::VectorXd pi = model_.pressures_clamped(u.s.interior(k), config_.pressure_floor, &cs.dpi);
  cs.potential.resize(n);
  cs.potential[0] = u.p0[k] + cell_potentials_[k][0];
  for (int i = 1; i < n; ++i) cs.potential[i] = u.p0[k] + pi[i - 1] + cell_potentials_[k][i];
  return cs;
}

namespace {

double reference_saturation(const SaturationState& s, int k) {
  double rest = 1.0;
  for (int i = 1; i < s.num_phases(); ++i) rest -= s(k, i);
  return rest;
}

double saturation(const SaturationState& s, int k, int i) { return i == 0 ? reference_saturation(s, k) : s(k, i); }

}  // namespace

Eigen::VectorXd FvSolver::assemble_residual(const FvUnknowns& u, const SaturationState& s_old, double tau) const {
  const int n = num_phases();
  const int nc = static_cast<int>(mesh_.num_cells());
  if (u.s.num_points() != nc || s_old.num_points() != nc || u.s.num_phases() != n || s_old.num_phases() != n ||
      u.p0.size() != nc)
    throw std::invalid_argument("finite-volume residual: dimension mismatch");
  Eigen::VectorXd res = Eigen::VectorXd::Zero(num_unknowns());
  std::vector<CellState> cs(nc);
  for (int k = 0; k < nc; ++k) {
    cs[k] = cell_state(u, k);
    const double mk = mesh_.cells[k].measure;
    for (int i = 1; i < n; ++i) res[k * n + i - 1] = (u.s(k, i) - s_old(k, i)) * mk / tau;
    res[k * n + n - 1] = u.lambda * mk;
  }
  for (const auto& e : mesh_.inner_edges) {
    for (int i = 0; i < n; ++i) {
      const double v = e.transmissivity * phases_.mobility(i) * (cs[e.k].potential[i] - cs[e.l].potential[i]);
      const double flux = upwind_saturation(saturation(u.s, e.k, i), saturation(u.s, e.l, i), v) * v;
      if (i > 0) {
        res[e.k * n + i - 1] += flux;
        res[e.l * n + i - 1] -= flux;
      }
      res[e.k * n + n - 1] += flux;
      res[e.l * n + n - 1] -= flux;
    }
  }
  double gauge = 0.0;
  for (int k = 0; k < nc; ++k) gauge += u.p0[k] * mesh_.cells[k].measure;
  res[nc * n] = gauge;
  return res;
}

Eigen::SparseMatrix<double> FvSolver::assemble_jacobian(const FvUnknowns& u, const SaturationState& s_old,
                                                        double tau) const {
  (void)s_old;
  const int n = num_phases();
  const int N = n - 1;
  const int nc = static_cast<int>(mesh_.num_cells());
  const int last = nc * n;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(nc) * n * 2 + mesh_.inner_edges.size() * 4 * n * n * n);
  std::vector<CellState> cs(nc);
  for (int k = 0; k < nc; ++k) {
    cs[k] = cell_state(u, k);
    const double mk = mesh_.cells[k].measure;
    for (int i = 1; i < n; ++i) t.emplace_back(k * n + i - 1, k * n + i - 1, mk / tau);
    t.emplace_back(k * n + N, last, mk);
    t.emplace_back(last, k * n + N, mk);
  }
  // d flux / d (cell unknowns) for one side, written as a row of length n.
  Eigen::VectorXd dk(n), dl(n);
  for (const auto& e : mesh_.inner_edges) {
    for (int i = 0; i < n; ++i) {
      const double coef = e.transmissivity * phases_.mobility(i);
      const double v = coef * (cs[e.k].potential[i] - cs[e.l].potential[i]);
      const bool from_k = v >= 0.0;
      const int up = from_k ? e.k : e.l;
      const double s_up = saturation(u.s, up, i);
      const double s_sigma = std::max(s_up, 0.0);
      // s_sigma * dv
      dk.setZero();
      dl.setZero();
      dk[N] = s_sigma * coef;
      dl[N] = -s_sigma * coef;
      if (i > 0)
        for (int j = 0; j < N; ++j) {
          dk[j] += s_sigma * coef * cs[e.k].dpi(i - 1, j);
          dl[j] -= s_sigma * coef * cs[e.l].dpi(i - 1, j);
        }
      // v * d s_sigma
      if (s_up > 0.0) {
        Eigen::VectorXd& dup = from_k ? dk : dl;
        if (i > 0)
          dup[i - 1] += v;
        else
          for (int j = 0; j < N; ++j) dup[j] -= v;
      }
      for (int c = 0; c < n; ++c) {
        if (dk[c] != 0.0) {
          if (i > 0) {
            t.emplace_back(e.k * n + i - 1, e.k * n + c, dk[c]);
            t.emplace_back(e.l * n + i - 1, e.k * n + c, -dk[c]);
          }
          t.emplace_back(e.k * n + N, e.k * n + c, dk[c]);
          t.emplace_back(e.l * n + N, e.k * n + c, -dk[c]);
        }
        if (dl[c] != 0.0) {
          if (i > 0) {
            t.emplace_back(e.k * n + i - 1, e.l * n + c, dl[c]);
            t.emplace_back(e.l * n + i - 1, e.l * n + c, -dl[c]);
          }
          t.emplace_back(e.k * n + N, e.l * n + c, dl[c]);
          t.emplace_back(e.l * n + N, e.l * n + c, -dl[c]);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> jac(num_unknowns(), num_unknowns());
  jac.setFromTriplets(t.begin(), t.end());
  return jac;
}

double FvSolver::residual_scale(double tau) const {
  double largest = 0.0;
  for (const auto& c : mesh_.cells) largest = std::max(largest, c.measure / tau);
  return 1.0 + largest;
}

NewtonResult FvSolver::newton_step_solve(const FvUnknowns& guess, const SaturationState& s_old, double tau) const {
  NewtonResult out;
  Eigen::VectorXd x = pack(guess);
  FvUnknowns u = unpack(x);
  Eigen::VectorXd r = assemble_residual(u, s_old, tau);
  const double threshold = config_.newton_tol * residual_scale(tau);
  auto finite = [](const Eigen::VectorXd& v) { return v.allFinite(); };
  if (!finite(r)) {
    out.u = u;
    return out;
  }
  out.residual_history.push_back(r.lpNorm<Eigen::Infinity>());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  int polish_left = -1;
  for (int it = 1; it <= config_.max_newton + config_.polish_steps; ++it) {
    const double rmax = r.lpNorm<Eigen::Infinity>();
    if (polish_left < 0 && rmax <= threshold) polish_left = config_.polish_steps;
    if (polish_left == 0) break;
    if (polish_left < 0 && it > config_.max_newton) break;

    lu.compute(assemble_jacobian(u, s_old, tau));
    if (lu.info() != Eigen::Success) break;
    const Eigen::VectorXd dx = lu.solve(-r);
    if (lu.info() != Eigen::Success || !finite(dx)) break;

    const double rnorm = r.norm();
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_try, r_try;
    FvUnknowns u_try;
    for (int b = 0; b <= config_.max_backtracks; ++b) {
      x_try = x + step * dx;
      u_try = unpack(x_try);
      r_try = assemble_residual(u_try, s_old, tau);
      if (finite(r_try) && r_try.norm() <= (1.0 - 1e-4 * step) * rnorm) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Once converged, a stalled polish step is not a failure.
      if (polish_left >= 0) break;
      out.iterations = it;
      out.u = u;
      return out;
    }
    const bool improving = r_try.lpNorm<Eigen::Infinity>() < 0.5 * rmax;
    x = std::move(x_try);
    u = std::move(u_try);
    r = std::move(r_try);
    out.iterations = it;
    out.residual_history.push_back(r.lpNorm<Eigen::Infinity>());
    if (polish_left > 0) {
      --polish_left;
      if (!improving) break;
    }
  }
  out.u = u;
  out.converged = r.lpNorm<Eigen::Infinity>() <= threshold;
  return out;
}

double FvSolver::energy(const SaturationState& s) const { return total_energy(s, mesh_.cells, model_, phases_); }

std::vector<double> FvSolver::masses(const SaturationState& s) const {
  std::vector<double> m(s.num_phases(), 0.0);
  for (int i = 0; i < s.num_phases(); ++i)
    for (int k = 0; k < s.num_points(); ++k) m[i] += s(k, i) * mesh_.cells[k].measure;
  return m;
}

double FvSolver::dissipation(const FvUnknowns& u) const {
  const int n = num_phases();
  const int nc = static_cast<int>(mesh_.num_cells());
  std::vector<CellState> cs(nc);
  for (int k = 0; k < nc; ++k) cs[k] = cell_state(u, k);
  double d = 0.0;
  for (const auto& e : mesh_.inner_edges)
    for (int i = 0; i < n; ++i) {
      const double dp = cs[e.k].potential[i] - cs[e.l].potential[i];
      const double v = e.transmissivity * phases_.mobility(i) * dp;
      d += upwind_saturation(saturation(u.s, e.k, i), saturation(u.s, e.l, i), v) * v * dp;
    }
  return d;
}

SaturationState FvSolver::phase_pressures(const FvUnknowns& u) const {
  const int n = num_phases();
  SaturationState p(u.s.num_points(), n);
  for (int k = 0; k < u.s.num_points(); ++k) {
    const Eigen::VectorXd pi = model_.pressures_clamped(u.s.interior(k), config_.pressure_floor);
    p(k, 0) = u.p0[k];
    for (int i = 1; i < n; ++i) p(k, i) = u.p0[k] + pi[i - 1];
  }
  return p;
}

FvStepRecord FvSolver::record(const FvUnknowns& u, int step, double t, double tau, int newton_iterations) const {
  const int n = num_phases();
  FvStepRecord rec;
  rec.step = step;
  rec.t = t;
  rec.tau = tau;
  rec.newton_iterations = newton_iterations;
  rec.energy = energy(u.s);
  rec.dissipation = dissipation(u);
  rec.masses = masses(u.s);
  try {
    rec.entropy = total_entropy(u.s, mesh_.cells, phases_);
  } catch (const std::domain_error&) {
    rec.entropy = std::numeric_limits<double>::quiet_NaN();
  }
  rec.min_saturation = u.s.values().minCoeff();
  rec.max_simplex_violation = (u.s.values().rowwise().sum().array() - 1.0).abs().maxCoeff();
  rec.capillary_dirichlet = capillary_dirichlet_energy(u.s, mesh_, model_);
  for (std::size_t k = 0; k < mesh_.num_cells(); ++k) rec.gauge += u.p0[k] * mesh_.cells[k].measure;

  rec.min_face_saturation = std::numeric_limits<double>::infinity();
  std::vector<CellState> cs(mesh_.num_cells());
  for (std::size_t k = 0; k < mesh_.num_cells(); ++k) cs[k] = cell_state(u, static_cast<int>(k));
  for (const auto& e : mesh_.inner_edges) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = cs[e.k].potential[i] - cs[e.l].potential[i];
      total += upwind_saturation(u.s(e.k, i), u.s(e.l, i), v);
    }
    rec.min_face_saturation = std::min(rec.min_face_saturation, total);
  }
  if (mesh_.inner_edges.empty()) rec.min_face_saturation = 0.0;
  return rec;
}

FvTrajectory FvSolver::run(const SaturationState& s0, double tau_target, double t_end,
                           const StepObserver& observer) const {
  if (!(tau_target > 0.0)) throw std::invalid_argument("time step must be positive");
  if (!(t_end >= 0.0)) throw std::invalid_argument("final time must be nonnegative");
  std::vector<double> stops;
  for (double ts : config_.snapshot_times)
    if (ts > 0.0 && ts < t_end) stops.push_back(ts);
  stops.push_back(t_end);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
  const bool keep_initial =
      std::find(config_.snapshot_times.begin(), config_.snapshot_times.end(), 0.0) != config_.snapshot_times.end();

  FvTrajectory traj;
  FvUnknowns u = initial_unknowns(s0);
  traj.steps.push_back(record(u, 0, 0.0, 0.0, 0));
  if (observer) observer(traj.steps.back(), u);
  if (keep_initial || t_end == 0.0) {
    traj.snapshot_times.push_back(0.0);
    traj.snapshots.push_back(u.s);
  }

  const double min_piece = 1e-12 * std::max(1.0, t_end);
  double t = 0.0;
  double tau = tau_target;
  int streak = 0;
  int step = 0;
  std::size_t next = 0;
  const double floor = -10.0 * config_.newton_tol;
  while (next < stops.size()) {
    const double target = stops[next];
    const double remaining = target - t;
    if (remaining <= min_piece) {
      if (t_end > 0.0) {
        traj.snapshot_times.push_back(target);
        traj.snapshots.push_back(u.s);
      }
      t = target;
      ++next;
      continue;
    }
    const bool lands = tau >= remaining;
    const double h = lands ? remaining : tau;
    NewtonResult res = newton_step_solve(u, u.s, h);
    bool ok = res.converged && res.u.s.values().minCoeff() >= floor;
    if (ok && std::holds_alternative<BrooksCorey>(model_.kind()))
      ok = (1.0 - res.u.s.values().col(1).array()).minCoeff() > config_.pressure_floor;
    if (!ok) {
      ++traj.rejected_steps;
      streak = 0;
      tau = 0.5 * h;
      if (tau < config_.tau_floor)
        throw StepUnderflowError("finite-volume time step fell below the floor", t, u.s);
      continue;
    }
    u = std::move(res.u);
    t = lands ? target : t + h;
    ++step;
    traj.steps.push_back(record(u, step, t, h, res.iterations));
    if (observer) observer(traj.steps.back(), u);
    if (++streak >= config_.redouble_after && tau < tau_target) {
      tau = std::min(2.0 * tau, tau_target);
      streak = 0;
    }
  }
  traj.final_state = u;
  return traj;
}

}  // namespace pflow
