#include "pflow/alg2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/SparseCore>

#include "pflow/errors.hpp"

namespace pflow {

double largest_cubic_root(double p, double q) {
  if (q < 0.0) throw std::invalid_argument("largest_cubic_root: q must be nonnegative");
  auto f = [&](double z) { return (z - p) * z * z - q; };
  auto df = [&](double z) { return (3.0 * z - 2.0 * p) * z; };

  // Depressed cubic w^3 + P w + Q = 0 with z = w + p/3.
  const double P = -p * p / 3.0;
  const double Q = -2.0 * p * p * p / 27.0 - q;
  const double disc = 0.25 * Q * Q + P * P * P / 27.0;
  double z;
  if (P == 0.0) {
    z = std::cbrt(-Q) + p / 3.0;
  } else if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    z = std::cbrt(-0.5 * Q + sq) + std::cbrt(-0.5 * Q - sq) + p / 3.0;
  } else {
    const double m = 2.0 * std::sqrt(-P / 3.0);
    const double arg = std::clamp(3.0 * Q / (P * m), -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    z = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k)
      z = std::max(z, m * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0) + p / 3.0);
  }

  // The root sits right of the inflection point, where Newton is monotone.
  const double floor = std::max(p, 0.0);
  if (!(z >= floor) || !std::isfinite(z)) z = floor + std::cbrt(q);
  for (int it = 0; it < 8; ++it) {
    const double d = df(z);
    if (d <= 0.0) break;
    const double step = f(z) / d;
    const double next = std::max(z - step, floor);
    if (std::abs(next - z) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(z)) {
      z = next;
      break;
    }
    z = next;
  }
  return z;
}

double project_parabola(double a, const double* b, int dim, double parabola, double& a_out, double* b_out) {
  double bb = 0.0;
  for (int k = 0; k < dim; ++k) bb += b[k] * b[k];
  if (a + bb / parabola <= 0.0) {
    a_out = a;
    for (int k = 0; k < dim; ++k) b_out[k] = b[k];
    return 0.0;
  }
  // With z = c + lambda the multiplier solves z^3 - (a + c) z^2 - (c/2)|b|^2 = 0, c = parabola / 2.
  const double c = 0.5 * parabola;
  const double z = largest_cubic_root(a + c, 0.5 * c * bb);
  a_out = a + c - z;
  const double shrink = c / z;
  for (int k = 0; k < dim; ++k) b_out[k] = shrink * b[k];
  return z - c;
}

std::pair<double, Eigen::Vector2d> project_parabola(double a, const Eigen::Vector2d& b, double parabola) {
  double a_out;
  Eigen::Vector2d b_out;
  project_parabola(a, b.data(), 2, parabola, a_out, b_out.data());
  return {a_out, b_out};
}

double action_density(double s, const double* m, int dim) {
  double mm = 0.0;
  for (int k = 0; k < dim; ++k) mm += m[k] * m[k];
  if (s <= 1e-14) return std::sqrt(mm) <= 1e-10 ? 0.0 : std::numeric_limits<double>::infinity();
  return mm / (2.0 * s);
}


Alg2Solver::Alg2Solver(const StructuredGrid& grid, PhaseSet phases, CapillaryModel model, Alg2Config config)
    : mesh_(build_space_time_mesh(grid, config.n_inner)),
      phases_(std::move(phases)),
      model_(std::move(model)),
      config_(config),
      weights_(grid.lumped_weights()),
      nodal_cells_(grid.nodal_cells()) {
  phases_.validate();
  if (model_.num_phases() != phases_.size())
    throw std::invalid_argument("capillary model and phase table disagree on the number of phases");
  if (!(config_.r > 0.0)) throw std::invalid_argument("ALG2 augmentation parameter r must be positive");
  if (!(config_.tol > 0.0)) throw std::invalid_argument("ALG2 tolerance must be positive");
  if (config_.max_iter < 1) throw std::invalid_argument("ALG2 iteration cap must be at least 1");

  const int nv = grid.num_vertices();
  trace_potentials_.reserve(nv);
  for (int j = 0; j < nv; ++j) trace_potentials_.push_back(phases_.potentials(grid.vertex(j)));
  dt_ = 1.0 / mesh_.n_inner;

  // Every Kuhn simplex has exactly one vertical edge; its time derivative is
  // the difference quotient along that edge.
  const int ne = mesh_.num_elements();
  const int nve = mesh_.vertices_per_element();
  const int d = mesh_.spatial_dimension();
  const int n_edges = mesh_.n_inner * nv;
  element_edge_.assign(ne, -1);
  edge_weight_.assign(n_edges, 0.0);
  std::vector<int> count(n_edges, 0);
  for (int e = 0; e < ne; ++e) {
    const auto& el = mesh_.elements[e];
    for (int a = 0; a < nve && element_edge_[e] < 0; ++a)
      for (int b = 0; b < nve; ++b)
        if (el[b] == el[a] + nv) {
          element_edge_[e] = el[a];
          break;
        }
    if (element_edge_[e] < 0) throw std::logic_error("space-time element without a vertical edge");
    edge_weight_[element_edge_[e]] += mesh_.element_measure[e];
    ++count[element_edge_[e]];
  }
  group_start_.assign(n_edges + 1, 0);
  for (int i = 0; i < n_edges; ++i) group_start_[i + 1] = group_start_[i] + count[i];
  group_elements_.assign(ne, -1);
  std::vector<int> fill(group_start_.begin(), group_start_.end() - 1);
  for (int e = 0; e < ne; ++e) group_elements_[fill[element_edge_[e]]++] = e;

  if (!config_.phase_r.empty()) {
    if (static_cast<int>(config_.phase_r.size()) != phases_.size())
      throw std::invalid_argument("ALG2 phase_r needs one value per phase");
    for (double v : config_.phase_r)
      if (!(v > 0.0)) throw std::invalid_argument("ALG2 phase_r entries must be positive");
  }
  std::vector<double> distinct;
  for (int i = 0; i < phases_.size(); ++i) {
    const double ri = interior_r(i);
    auto it = std::find(distinct.begin(), distinct.end(), ri);
    phase_operator_.push_back(static_cast<int>(it - distinct.begin()));
    if (it == distinct.end()) distinct.push_back(ri);
  }
  for (double ri : distinct) {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(ne) * nve * nve + 4 * n_edges + nv);
    for (int i = 0; i < n_edges; ++i) {
      const double w = ri * edge_weight_[i] / (dt_ * dt_);
      triplets.emplace_back(i, i, w);
      triplets.emplace_back(i + nv, i + nv, w);
      triplets.emplace_back(i, i + nv, -w);
      triplets.emplace_back(i + nv, i, -w);
    }
    for (int e = 0; e < ne; ++e) {
      const double meas = ri * mesh_.element_measure[e];
      for (int a = 0; a < nve; ++a) {
        const double* ga = mesh_.gradient(e, a) + 1;
        for (int b = 0; b < nve; ++b) {
          const double* gb = mesh_.gradient(e, b) + 1;
          double dot = 0.0;
          for (int c = 0; c < d; ++c) dot += ga[c] * gb[c];
          triplets.emplace_back(mesh_.elements[e][a], mesh_.elements[e][b], meas * dot);
        }
      }
    }
    for (int j = 0; j < nv; ++j)
      triplets.emplace_back(mesh_.top_nodes[j], mesh_.top_nodes[j], config_.r * weights_[j]);
    Eigen::SparseMatrix<double> k(mesh_.num_nodes(), mesh_.num_nodes());
    k.setFromTriplets(triplets.begin(), triplets.end());
    auto factor = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(k);
    if (factor->info() != Eigen::Success) throw NumericalError("space-time stiffness factorization failed");
    stiffness_.push_back(std::move(k));
    factor_.push_back(std::move(factor));
  }
}

double Alg2Solver::parabola(int phase) const { return 2.0 * phases_.phases[phase].viscosity / phases_.permeability; }

double Alg2Solver::interior_r(int phase) const {
  return config_.phase_r.empty() ? config_.r : config_.phase_r[phase];
}

Alg2State Alg2Solver::initial_state(const SaturationState& s_prev) const {
  const int nv = grid().num_vertices();
  if (s_prev.num_points() != nv || s_prev.num_phases() != num_phases())
    throw std::invalid_argument("initial saturation does not match the ALG2 grid");
  const int ne = mesh_.num_elements();
  const int d = mesh_.spatial_dimension();
  const int n_edges = num_time_edges();
  Alg2State st;
  st.phases.resize(num_phases());
  for (int i = 0; i < num_phases(); ++i) {
    auto& ph = st.phases[i];
    ph.phi = Eigen::VectorXd::Zero(mesh_.num_nodes());
    ph.a = Eigen::VectorXd::Zero(n_edges);
    ph.b = ElementField::Zero(ne, d);
    ph.c = Eigen::VectorXd::Zero(nv);
    ph.s.resize(n_edges);
    for (int e = 0; e < n_edges; ++e) ph.s[e] = s_prev(e % nv, i);
    ph.m = ElementField::Zero(ne, d);
    ph.s1 = s_prev.values().col(i);
  }
  return st;
}

SpaceTimeGradient Alg2Solver::gradient(const Eigen::VectorXd& phi) const {
  const int ne = mesh_.num_elements();
  const int nve = mesh_.vertices_per_element();
  const int d = mesh_.spatial_dimension();
  const int nv = grid().num_vertices();
  SpaceTimeGradient g;
  g.dt.resize(num_time_edges());
  for (int e = 0; e < num_time_edges(); ++e) g.dt[e] = (phi[e + nv] - phi[e]) / dt_;
  g.dx = ElementField::Zero(ne, d);
  for (int e = 0; e < ne; ++e) {
    double* row = g.dx.row(e).data();
    for (int a = 0; a < nve; ++a) {
      const double v = phi[mesh_.elements[e][a]];
      const double* ga = mesh_.gradient(e, a) + 1;
      for (int c = 0; c < d; ++c) row[c] += v * ga[c];
    }
  }
  return g;
}

void Alg2Solver::elliptic_step(Alg2State& state, const SaturationState& s_prev) const {
  const int ne = mesh_.num_elements();
  const int nve = mesh_.vertices_per_element();
  const int d = mesh_.spatial_dimension();
  const int nv = grid().num_vertices();
  const double scale = state.r_scale;
  const double r = config_.r * scale;
  double z[2];
  for (int i = 0; i < num_phases(); ++i) {
    auto& ph = state.phases[i];
    const double ri = interior_r(i) * scale;
    const auto& stiffness = stiffness_[phase_operator_[i]];
    const auto& factor = *factor_[phase_operator_[i]];
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(mesh_.num_nodes());
    for (int e = 0; e < num_time_edges(); ++e) {
      const double flux = edge_weight_[e] * (ri * ph.a[e] - ph.s[e]) / dt_;
      rhs[e + nv] += flux;
      rhs[e] -= flux;
    }
    for (int e = 0; e < ne; ++e) {
      const double meas = mesh_.element_measure[e];
      for (int c = 0; c < d; ++c) z[c] = ri * ph.b(e, c) - ph.m(e, c);
      for (int a = 0; a < nve; ++a) {
        const double* ga = mesh_.gradient(e, a) + 1;
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += z[c] * ga[c];
        rhs[mesh_.elements[e][a]] += meas * dot;
      }
    }
    for (int j = 0; j < nv; ++j) {
      rhs[mesh_.top_nodes[j]] += weights_[j] * (ph.s1[j] - r * ph.c[j]);
      rhs[mesh_.bottom_nodes[j]] -= weights_[j] * s_prev(j, i);
    }
    // The operator for the scaled augmentation is scale times the stored one.
    Eigen::VectorXd phi = factor.solve(rhs) / scale;
    const double rhs_norm = rhs.norm();
    if (rhs_norm > 0.0) {
      Eigen::VectorXd res = rhs - scale * (stiffness * phi);
      if (res.norm() > config_.linear_tol * rhs_norm) {
        phi += factor.solve(res) / scale;
        res = rhs - scale * (stiffness * phi);
        if (res.norm() > config_.linear_tol * rhs_norm)
          throw NumericalError("elliptic solve did not reach the requested residual", {res.norm() / rhs_norm});
      }
    }
    ph.phi = std::move(phi);
  }
}

void Alg2Solver::project_and_prox(Alg2State& state, const std::vector<SpaceTimeGradient>& grads,
                                  double tau) const {
  const int d = mesh_.spatial_dimension();
  const int nv = grid().num_vertices();
  const int n = num_phases();
  const double r = config_.r * state.r_scale;
  // The time component of a star is shared, so its constraint averages the
  // spatial part: W a + sum_T |T| |b_T|^2 / A <= 0. Scaling b_T by
  // sqrt(|T| / W) turns this into a single parabola in dimension k d.
  std::vector<double> beta, scale, out;
  for (int i = 0; i < n; ++i) {
    auto& ph = state.phases[i];
    const double A = parabola(i);
    const double ri = interior_r(i) * state.r_scale;
    for (int e = 0; e < num_time_edges(); ++e) {
      const int first = group_start_[e];
      const int k = group_start_[e + 1] - first;
      beta.resize(static_cast<std::size_t>(k) * d);
      scale.resize(k);
      out.resize(beta.size());
      for (int g = 0; g < k; ++g) {
        const int el = group_elements_[first + g];
        scale[g] = std::sqrt(mesh_.element_measure[el] / edge_weight_[e]);
        for (int c = 0; c < d; ++c) beta[g * d + c] = scale[g] * (grads[i].dx(el, c) + ph.m(el, c) / ri);
      }
      const double alpha = grads[i].dt[e] + ph.s[e] / ri;
      project_parabola(alpha, beta.data(), k * d, A, ph.a[e], out.data());
      for (int g = 0; g < k; ++g) {
        const int el = group_elements_[first + g];
        for (int c = 0; c < d; ++c) ph.b(el, c) = out[g * d + c] / scale[g];
      }
    }
  }
  Eigen::VectorXd cbar(n);
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < n; ++i) {
      const auto& ph = state.phases[i];
      cbar[i] = -ph.phi[mesh_.top_nodes[j]] + ph.s1[j] / r;
    }
    const Eigen::VectorXd primal = model_.prox_energy(r * cbar, trace_potentials_[j], r * tau);
    for (int i = 0; i < n; ++i) state.phases[i].c[j] = cbar[i] - primal[i] / r;
  }
}

void Alg2Solver::ascend(Alg2State& state, const std::vector<SpaceTimeGradient>& grads) const {
  const double r = config_.r * state.r_scale;
  const int nv = grid().num_vertices();
  for (int i = 0; i < num_phases(); ++i) {
    auto& ph = state.phases[i];
    const double ri = interior_r(i) * state.r_scale;
    ph.s += ri * (grads[i].dt - ph.a);
    ph.m += ri * (grads[i].dx - ph.b);
    for (int j = 0; j < nv; ++j) ph.s1[j] += r * (-ph.phi[mesh_.top_nodes[j]] - ph.c[j]);
  }
}

std::vector<SpaceTimeGradient> Alg2Solver::all_gradients(const Alg2State& state) const {
  std::vector<SpaceTimeGradient> g;
  g.reserve(num_phases());
  for (const auto& ph : state.phases) g.push_back(gradient(ph.phi));
  return g;
}

void Alg2Solver::prox_step(Alg2State& state, double tau) const { project_and_prox(state, all_gradients(state), tau); }

void Alg2Solver::multiplier_update(Alg2State& state) const { ascend(state, all_gradients(state)); }

double Alg2Solver::interior_norm_sq(const Eigen::VectorXd& edge, const ElementField& elem) const {
  double sum = 0.0;
  for (int e = 0; e < edge.size(); ++e) sum += edge_weight_[e] * edge[e] * edge[e];
  for (int e = 0; e < elem.rows(); ++e) sum += mesh_.element_measure[e] * elem.row(e).squaredNorm();
  return sum;
}

double Alg2Solver::trace_norm_sq(const Eigen::VectorXd& trace) const {
  double sum = 0.0;
  for (int j = 0; j < trace.size(); ++j) sum += weights_[j] * trace[j] * trace[j];
  return sum;
}

std::vector<Eigen::VectorXd> Alg2Solver::continuity_residual(const Alg2State& state,
                                                             const SaturationState& s_prev) const {
  const int ne = mesh_.num_elements();
  const int nve = mesh_.vertices_per_element();
  const int d = mesh_.spatial_dimension();
  const int nv = grid().num_vertices();
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < num_phases(); ++i) {
    const auto& ph = state.phases[i];
    Eigen::VectorXd res = Eigen::VectorXd::Zero(mesh_.num_nodes());
    for (int e = 0; e < num_time_edges(); ++e) {
      const double flux = edge_weight_[e] * ph.s[e] / dt_;
      res[e + nv] += flux;
      res[e] -= flux;
    }
    for (int e = 0; e < ne; ++e) {
      const double meas = mesh_.element_measure[e];
      for (int a = 0; a < nve; ++a) {
        const double* ga = mesh_.gradient(e, a) + 1;
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += ph.m(e, c) * ga[c];
        res[mesh_.elements[e][a]] += meas * dot;
      }
    }
    for (int j = 0; j < nv; ++j) {
      res[mesh_.bottom_nodes[j]] += weights_[j] * s_prev(j, i);
      res[mesh_.top_nodes[j]] -= weights_[j] * ph.s1[j];
    }
    out.push_back(std::move(res));
  }
  return out;
}

ActionValue Alg2Solver::action_value(const Alg2State& state) const {
  const int d = mesh_.spatial_dimension();
  ActionValue out;
  for (int i = 0; i < num_phases(); ++i) {
    const auto& ph = state.phases[i];
    double sum = 0.0;
    for (int e = 0; e < mesh_.num_elements(); ++e)
      sum += mesh_.element_measure[e] * action_density(ph.s[element_edge_[e]], ph.m.row(e).data(), d);
    const double v = 0.5 * parabola(i) * sum;
    out.per_phase.push_back(v);
    out.total += v;
  }
  return out;
}

double Alg2Solver::max_parabola_violation(const Alg2State& state) const {
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < num_phases(); ++i) {
    const auto& ph = state.phases[i];
    const double A = parabola(i);
    for (int e = 0; e < num_time_edges(); ++e) {
      double spatial = 0.0;
      for (int g = group_start_[e]; g < group_start_[e + 1]; ++g) {
        const int el = group_elements_[g];
        spatial += mesh_.element_measure[el] * ph.b.row(el).squaredNorm();
      }
      worst = std::max(worst, ph.a[e] + spatial / (edge_weight_[e] * A));
    }
  }
  return worst;
}

SaturationState Alg2Solver::recovered_pressures(const Alg2State& state, double tau) const {
  const int nv = grid().num_vertices();
  SaturationState p(nv, num_phases());
  for (int i = 0; i < num_phases(); ++i)
    for (int j = 0; j < nv; ++j)
      p(j, i) = -state.phases[i].phi[mesh_.top_nodes[j]] / tau - trace_potentials_[j][i];
  double mean = 0.0, total = 0.0;
  for (int j = 0; j < nv; ++j) {
    mean += weights_[j] * p(j, 0);
    total += weights_[j];
  }
  p.values().array() -= mean / total;
  return p;
}

std::vector<double> Alg2Solver::masses(const SaturationState& s) const {
  std::vector<double> m(s.num_phases(), 0.0);
  for (int i = 0; i < s.num_phases(); ++i)
    for (int j = 0; j < s.num_points(); ++j) m[i] += weights_[j] * s(j, i);
  return m;
}

double Alg2Solver::energy(const SaturationState& s) const { return total_energy(s, nodal_cells_, model_, phases_); }

namespace {

constexpr double kMaxRScale = 64.0;

void extrapolate(PhaseUnknowns& cur, PhaseUnknowns& last, double beta) {
  auto step = [beta](auto& x, auto& prev) {
    if (beta > 0.0) {
      auto delta = (x - prev).eval();
      prev = x;
      x += beta * delta;
    } else {
      prev = x;
    }
  };
  step(cur.a, last.a);
  step(cur.b, last.b);
  step(cur.c, last.c);
  step(cur.s, last.s);
  step(cur.m, last.m);
  step(cur.s1, last.s1);
}

}  // namespace

JkoStepResult Alg2Solver::run_jko_step(const SaturationState& s_prev, double tau, Alg2State* warm) const {
  if (!(tau > 0.0)) throw std::invalid_argument("JKO step size must be positive");
  Alg2State local;
  Alg2State& st = warm ? *warm : local;
  if (st.phases.size() != static_cast<std::size_t>(num_phases())) st = initial_state(s_prev);

  const std::vector<double> mass_prev = masses(s_prev);
  const int n = num_phases();
  JkoStepResult result;
  // The state holds the (possibly extrapolated) point fed to the next elliptic
  // solve; `last` keeps the previous plain iterate.
  std::vector<PhaseUnknowns> hat(n), last(st.phases);
  double momentum = 1.0;
  double combined_prev = std::numeric_limits<double>::infinity();

  for (int k = 1; k <= config_.max_iter; ++k) {
    for (int i = 0; i < n; ++i) {
      hat[i].a = st.phases[i].a;
      hat[i].b = st.phases[i].b;
      hat[i].c = st.phases[i].c;
    }
    elliptic_step(st, s_prev);
    const auto grads = all_gradients(st);
    project_and_prox(st, grads, tau);

    // dual_sq carries the augmentation weights; combined is the r-weighted
    // energy sum_blocks r_b (|primal_b|^2 + |dq_b|^2) monitored for restarts.
    const double r = config_.r * st.r_scale;
    double primal_sq = 0.0, dual_sq = 0.0, combined = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& ph = st.phases[i];
      const double ri = interior_r(i) * st.r_scale;
      Eigen::VectorXd trace_diff(ph.c.size());
      for (int j = 0; j < ph.c.size(); ++j) trace_diff[j] = -ph.phi[mesh_.top_nodes[j]] - ph.c[j];
      const double p_int = interior_norm_sq(grads[i].dt - ph.a, grads[i].dx - ph.b);
      const double p_tr = trace_norm_sq(trace_diff);
      const double d_int = interior_norm_sq(ph.a - hat[i].a, ph.b - hat[i].b);
      const double d_tr = trace_norm_sq(ph.c - hat[i].c);
      primal_sq += p_int + p_tr;
      dual_sq += ri * ri * d_int + r * r * d_tr;
      combined += ri * (p_int + d_int) + r * (p_tr + d_tr);
    }
    ascend(st, grads);

    double sigma_sq = 0.0;
    for (const auto& ph : st.phases) sigma_sq += interior_norm_sq(ph.s, ph.m) + trace_norm_sq(ph.s1);
    const double primal = std::sqrt(primal_sq);
    const double dual = std::sqrt(dual_sq);
    result.primal_history.push_back(primal);
    result.dual_history.push_back(dual);
    result.iterations = k;
    result.primal_residual = primal;
    result.dual_residual = dual;

    bool done = std::max(primal, dual) <= config_.tol * (1.0 + std::sqrt(sigma_sq));
    if (done && config_.mass_tol > 0.0) {
      for (int i = 0; i < n && done; ++i) {
        double m = 0.0;
        for (int j = 0; j < st.phases[i].s1.size(); ++j) m += weights_[j] * st.phases[i].s1[j];
        done = std::abs(m - mass_prev[i]) <= config_.mass_tol * std::max(mass_prev[i], 1e-300);
      }
    }
    if (done) {
      result.converged = true;
      break;
    }
    if (config_.adapt_every > 0 && k % config_.adapt_every == 0) {
      double factor = 1.0;
      if (primal > config_.adapt_ratio * dual && st.r_scale < kMaxRScale) factor = 2.0;
      if (dual > config_.adapt_ratio * primal && st.r_scale > 1.0 / kMaxRScale) factor = 0.5;
      if (factor != 1.0) {
        st.r_scale *= factor;
        momentum = 1.0;
        combined_prev = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) extrapolate(st.phases[i], last[i], 0.0);
        continue;
      }
    }
    if (!config_.accelerate) continue;

    // Restarted Nesterov extrapolation on (q, sigma).
    double beta = 0.0;
    if (combined < 0.999 * combined_prev) {
      const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      beta = (momentum - 1.0) / next;
      momentum = next;
      combined_prev = combined;
    } else {
      momentum = 1.0;
      combined_prev = combined / 0.999;
    }
    for (int i = 0; i < n; ++i) extrapolate(st.phases[i], last[i], beta);
  }

  SaturationState s_next(grid().num_vertices(), n);
  for (int i = 0; i < n; ++i) s_next.values().col(i) = st.phases[i].s1;
  result.s_next = std::move(s_next);
  result.action = action_value(st);
  if (!result.converged && !config_.accept_nonconverged)
    throw ConvergenceError("ALG2 iteration cap reached", result.primal_history, result.dual_history);
  return result;
}

Alg2Trajectory Alg2Solver::run_trajectory(const SaturationState& s0, double tau, int n_steps,
                                          const StepObserver& observer) const {
  if (n_steps < 0) throw std::invalid_argument("number of JKO steps must be nonnegative");
  Alg2Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(s0);
  traj.energies.push_back(energy(s0));
  traj.masses.push_back(masses(s0));
  Alg2State warm;
  for (int step = 1; step <= n_steps; ++step) {
    JkoStepResult res = run_jko_step(traj.states.back(), tau, &warm);
    if (observer) observer(step, res, warm);
    traj.times.push_back(step * tau);
    traj.energies.push_back(energy(res.s_next));
    traj.masses.push_back(masses(res.s_next));
    traj.states.push_back(std::move(res.s_next));
    traj.actions.push_back(res.action);
    traj.iterations.push_back(res.iterations);
    traj.primal_residuals.push_back(res.primal_residual);
    traj.dual_residuals.push_back(res.dual_residual);
  }
  return traj;
}

}  // namespace pflow
