#include "pflow/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "pflow/alg2.hpp"
#include "pflow/diagnostics.hpp"
#include "pflow/errors.hpp"
#include "pflow/fv.hpp"

namespace pflow {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(15);
  return out;
}

void close_checked(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw std::runtime_error("error while writing " + path.string());
}

bool same_time(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

void write_snapshot(const SaturationState& state, std::span<const Point> points, const fs::path& path,
                    const std::string& prefix) {
  if (static_cast<int>(points.size()) != state.num_points())
    throw std::invalid_argument("write_snapshot: point count does not match the state");
  auto out = open_out(path);
  out << "x,y";
  for (int i = 0; i < state.num_phases(); ++i) out << ',' << prefix << i;
  out << '\n';
  for (int k = 0; k < state.num_points(); ++k) {
    out << points[k].x() << ',' << points[k].y();
    for (int i = 0; i < state.num_phases(); ++i) out << ',' << state(k, i);
    out << '\n';
  }
  close_checked(out, path);
}

SaturationState read_snapshot(const fs::path& path, std::vector<Point>* points) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  const int columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 3) throw std::runtime_error(path.string() + ": expected x,y and at least one saturation column");
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream fields(line);
    std::string item;
    while (std::getline(fields, item, ',')) {
      char* end = nullptr;
      row.push_back(std::strtod(item.c_str(), &end));
      if (end == item.c_str()) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
    if (static_cast<int>(row.size()) != columns)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    rows.push_back(std::move(row));
  }
  SaturationState s(static_cast<int>(rows.size()), columns - 2);
  if (points) points->clear();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (points) points->emplace_back(rows[k][0], rows[k][1]);
    for (int i = 0; i < columns - 2; ++i) s(static_cast<int>(k), i) = rows[k][i + 2];
  }
  return s;
}

void write_snapshot_vtk(const SaturationState& state, const Box& box, int nx, int ny, double t, const fs::path& path) {
  const bool two_d = box.dimension == 2;
  const int cy = two_d ? ny : 1;
  const int py = two_d ? ny + 1 : 1;
  const int n_cells = nx * cy;
  const int n_points = (nx + 1) * py;
  const bool cell_data = state.num_points() == n_cells;
  if (!cell_data && state.num_points() != n_points)
    throw std::invalid_argument("write_snapshot_vtk: state matches neither the cells nor the vertices of the grid");
  auto out = open_out(path);
  out << "# vtk DataFile Version 3.0\n"
      << "saturations t=" << t << "\nASCII\nDATASET STRUCTURED_GRID\n"
      << "DIMENSIONS " << nx + 1 << ' ' << py << " 1\n"
      << "POINTS " << n_points << " double\n";
  const double hx = (box.upper.x() - box.lower.x()) / nx;
  const double hy = two_d ? (box.upper.y() - box.lower.y()) / ny : 0.0;
  for (int iy = 0; iy < py; ++iy)
    for (int ix = 0; ix <= nx; ++ix) out << box.lower.x() + ix * hx << ' ' << box.lower.y() + iy * hy << " 0\n";
  out << (cell_data ? "CELL_DATA " : "POINT_DATA ") << state.num_points() << '\n';
  for (int i = 0; i < state.num_phases(); ++i) {
    out << "SCALARS s_" << i << " double 1\nLOOKUP_TABLE default\n";
    for (int k = 0; k < state.num_points(); ++k) out << state(k, i) << '\n';
  }
  close_checked(out, path);
}

std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", t);
  return buf;
}

namespace {

struct Runner {
  const RunConfig& config;
  std::ostream& progress;
  fs::path dir;
  RunResult result;
  SummaryReport report;
  CapillaryModel model;

  // Snapshot states keyed by requested time, for the comparison.
  std::map<double, SaturationState> fv_snapshots;
  std::map<double, SaturationState> alg2_snapshots;  // averaged onto the FV cells
  std::vector<Point> cell_centers;

  fs::path file(const std::string& name) {
    const fs::path p = dir / name;
    result.files.push_back(p);
    return p;
  }

  void snapshot(const std::string& scheme, double t, const SaturationState& s, std::span<const Point> points) {
    write_snapshot(s, points, file("snapshot_" + scheme + "_t" + time_tag(t) + ".csv"));
    if (config.vtk) {
      const int ny = config.domain.dimension == 2 ? config.ny : 1;
      write_snapshot_vtk(s, config.domain, config.nx, ny, t, file("snapshot_" + scheme + "_t" + time_tag(t) + ".vtk"));
    }
  }

  void write_series(const DiagnosticsSeries& series) {
    const fs::path p = file("diagnostics_" + series.scheme + ".csv");
    auto out = open_out(p);
    series.write_csv(out);
    close_checked(out, p);
  }

  void relative_energy(const std::string& scheme, std::span<const Cell> cells, const PhaseSet& phases,
                       const SaturationState& s0, const std::vector<double>& times,
                       const std::vector<double>& energies) {
    if (config.capillary == "quadratic3" || energies.empty()) return;
    double mass = 0.0;
    for (int k = 0; k < s0.num_points(); ++k) mass += s0(k, 1) * cells[k].measure;
    const auto steady = steady_state_two_phase(cells, model, phases, mass);
    const double e_inf = total_energy(steady_state_saturations(steady), cells, model, phases);
    const auto rel = relative_energy_series(energies, e_inf);
    const fs::path p = file("relative_energy_" + scheme + ".csv");
    auto out = open_out(p);
    out << "t,relative_energy\n";
    for (std::size_t n = 0; n < rel.size(); ++n) out << times[n] << ',' << rel[n] << '\n';
    close_checked(out, p);

    const double tol = 1e-8 * (1.0 + std::abs(energies.front()));
    double lowest = rel.front(), rise = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 1; n < rel.size(); ++n) {
      lowest = std::min(lowest, rel[n]);
      rise = std::max(rise, rel[n] - rel[n - 1]);
    }
    report.add(scheme + ".relative_energy_nonnegative", lowest >= -tol, lowest, -tol);
    if (rel.size() > 1) report.add(scheme + ".relative_energy_nonincreasing", rise <= tol, rise, tol);
    const auto fit = fit_log_linear_tail(times, rel);
    report.log(scheme + ".relative_energy_tail_slope", fit.slope);
    report.log(scheme + ".relative_energy_tail_r2", fit.r_squared);
    report.log(scheme + ".steady_state_gamma", steady.gamma);
  }

  void run_fv() {
    const int ny = config.domain.dimension == 2 ? config.ny : 1;
    FVMesh mesh = build_cartesian_fv_mesh(config.nx, ny, config.domain);
    for (const auto& c : mesh.cells) cell_centers.push_back(c.center);
    FvConfig fvc = config.fv;
    fvc.snapshot_times = config.snapshots;
    FvSolver solver(mesh, config.phases, model, fvc);
    const SaturationState s0 = initial_cell_state(config);

    const fs::path log_path = file("fv_log.csv");
    auto log = open_out(log_path);
    log << "step,t,tau,newton_iters,energy,dissipation";
    for (int i = 0; i < config.phases.size(); ++i) log << ",mass_" << i;
    log << ",min_saturation\n";

    FvTrajectory partial;
    auto observer = [&](const FvStepRecord& rec, const FvUnknowns& u) {
      partial.steps.push_back(rec);
      log << rec.step << ',' << rec.t << ',' << rec.tau << ',' << rec.newton_iterations << ',' << rec.energy << ','
          << rec.dissipation;
      for (double m : rec.masses) log << ',' << m;
      log << ',' << rec.min_saturation << '\n';
      for (double ts : config.snapshots)
        if (same_time(rec.t, ts) && !fv_snapshots.count(ts)) {
          fv_snapshots.emplace(ts, u.s);
          snapshot("fv", ts, u.s, cell_centers);
        }
    };
    try {
      FvTrajectory traj = solver.run(s0, config.tau, config.t_end, observer);
      partial.rejected_steps = traj.rejected_steps;
    } catch (const StepUnderflowError& e) {
      close_checked(log, log_path);
      write_snapshot(e.state(), cell_centers, file("fv_failure_state.csv"));
      write_series(fv_series(partial));
      add_fv_checks(report, partial, config.fv.newton_tol);
      throw;
    }
    close_checked(log, log_path);
    write_series(fv_series(partial));
    add_fv_checks(report, partial, config.fv.newton_tol);
    std::vector<double> times, energies;
    for (const auto& r : partial.steps) {
      times.push_back(r.t);
      energies.push_back(r.energy);
    }
    relative_energy("fv", mesh.cells, config.phases, s0, times, energies);
    progress << "fv: " << partial.steps.size() - 1 << " accepted steps, " << partial.rejected_steps
             << " rejected\n";
  }

  void run_alg2() {
    const int ny = config.domain.dimension == 2 ? config.ny : 1;
    const StructuredGrid grid(config.domain, config.nx, ny);
    Alg2Solver solver(grid, config.phases, model, config.alg2);
    const SaturationState s0 = initial_nodal_state(config);
    const int n_steps = config.jko_steps();
    std::vector<Point> vertices;
    for (int j = 0; j < grid.num_vertices(); ++j) vertices.push_back(grid.vertex(j));

    std::multimap<int, double> snapshot_steps;
    for (double ts : config.snapshots) snapshot_steps.emplace(static_cast<int>(std::lround(ts / config.tau)), ts);
    auto take = [&](int step, const SaturationState& s) {
      auto [lo, hi] = snapshot_steps.equal_range(step);
      for (auto it = lo; it != hi; ++it) {
        if (alg2_snapshots.count(it->second)) continue;
        snapshot("alg2", it->second, s, vertices);
        SaturationState cells(grid.dimension() == 1 ? grid.nx() : grid.nx() * grid.ny(), s.num_phases());
        for (int i = 0; i < s.num_phases(); ++i) cells.values().col(i) = grid.cell_averages(s.values().col(i));
        alg2_snapshots.emplace(it->second, std::move(cells));
      }
    };

    const fs::path log_path = file("alg2_log.csv");
    auto log = open_out(log_path);
    log << "step,iters,primal_res,dual_res,energy,action\n";
    Alg2Trajectory partial;
    partial.times.push_back(0.0);
    partial.states.push_back(s0);
    partial.energies.push_back(solver.energy(s0));
    partial.masses.push_back(solver.masses(s0));
    take(0, s0);
    auto observer = [&](int step, const JkoStepResult& res, const Alg2State&) {
      const double e = solver.energy(res.s_next);
      log << step << ',' << res.iterations << ',' << res.primal_residual << ',' << res.dual_residual << ',' << e
          << ',' << res.action.total << '\n';
      partial.times.push_back(step * config.tau);
      partial.states.push_back(res.s_next);
      partial.energies.push_back(e);
      partial.masses.push_back(solver.masses(res.s_next));
      partial.actions.push_back(res.action);
      partial.iterations.push_back(res.iterations);
      partial.primal_residuals.push_back(res.primal_residual);
      partial.dual_residuals.push_back(res.dual_residual);
      take(step, res.s_next);
    };
    try {
      solver.run_trajectory(s0, config.tau, n_steps, observer);
    } catch (const NumericalError&) {
      close_checked(log, log_path);
      write_series(alg2_series(solver, partial));
      add_alg2_checks(report, partial, config.tau);
      throw;
    }
    close_checked(log, log_path);
    write_series(alg2_series(solver, partial));
    add_alg2_checks(report, partial, config.tau);
    relative_energy("alg2", solver.nodal_cells(), config.phases, s0, partial.times, partial.energies);
    int max_iter = 0;
    for (int it : partial.iterations) max_iter = std::max(max_iter, it);
    progress << "alg2: " << n_steps << " JKO steps, at most " << max_iter << " iterations per step\n";
  }

  void compare() {
    if (fv_snapshots.empty() || alg2_snapshots.empty()) return;
    const int ny = config.domain.dimension == 2 ? config.ny : 1;
    const FVMesh mesh = build_cartesian_fv_mesh(config.nx, ny, config.domain);
    const fs::path p = file("comparison.csv");
    auto out = open_out(p);
    out << "t";
    for (int i = 0; i < config.phases.size(); ++i) out << ",l1_" << i;
    for (int i = 0; i < config.phases.size(); ++i) out << ",linf_" << i;
    out << '\n';
    for (const auto& [t, fv_state] : fv_snapshots) {
      auto it = alg2_snapshots.find(t);
      if (it == alg2_snapshots.end()) continue;
      const auto cmp = compare_fields(it->second, fv_state, mesh.cells);
      write_snapshot(cmp.difference, cell_centers, file("diff_t" + time_tag(t) + ".csv"), "d_");
      out << t;
      for (double v : cmp.l1) out << ',' << v;
      for (double v : cmp.linf) out << ',' << v;
      out << '\n';
      report.log("compare.l1_phase1_t" + time_tag(t), cmp.l1.size() > 1 ? cmp.l1[1] : cmp.l1[0]);
    }
    close_checked(out, p);
  }

  void write_summary() {
    const fs::path p = file("summary.txt");
    auto out = open_out(p);
    report.write(out);
    close_checked(out, p);
  }
};

}  // namespace

RunResult run_simulation(const RunConfig& config, std::ostream& progress) {
  validate_config(config);
  Runner r{config, progress, fs::path(config.output_dir), {}, {}, config.capillary_model(), {}, {}, {}};
  fs::create_directories(r.dir);
  {
    const fs::path p = r.file("config.ini");
    auto out = open_out(p);
    out << serialize_config(config);
    close_checked(out, p);
  }
  try {
    if (config.solver != SolverChoice::Alg2) r.run_fv();
    if (config.solver != SolverChoice::Fv) r.run_alg2();
    if (config.solver == SolverChoice::Both) r.compare();
  } catch (const NumericalError& e) {
    r.result.exit_code = kExitNonConvergence;
    r.result.message = e.what();
    r.report.add("solver_completed", false, 0.0, 1.0);
  }
  r.write_summary();
  return r.result;
}

}  // namespace pflow
