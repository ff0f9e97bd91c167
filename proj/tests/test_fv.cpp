#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pflow/config.hpp"
#include "pflow/fv.hpp"

namespace pflow {
namespace {

PhaseSet bc_phases() { return PhaseSet{{Phase{1.0, 1.0}, Phase{10.0, 0.87}}}; }
PhaseSet three_phases() { return PhaseSet{{Phase{1.0, 1.0}, Phase{50.0, 0.87}, Phase{0.1, 0.1}}}; }

FvUnknowns random_unknowns(std::mt19937& rng, int nc, int np, SaturationState* s_old) {
  std::uniform_real_distribution<double> u(0.05, 0.9);
  FvUnknowns x;
  x.s = SaturationState(nc, np);
  x.p0.resize(nc);
  *s_old = SaturationState(nc, np);
  for (int k = 0; k < nc; ++k) {
    double tot = 0.0, tot_old = 0.0;
    for (int i = 1; i < np; ++i) {
      x.s(k, i) = u(rng) / (np - 1);
      (*s_old)(k, i) = u(rng) / (np - 1);
      tot += x.s(k, i);
      tot_old += (*s_old)(k, i);
    }
    x.s(k, 0) = 1.0 - tot;
    (*s_old)(k, 0) = 1.0 - tot_old;
    x.p0[k] = u(rng);
  }
  x.lambda = u(rng);
  return x;
}

TEST(PhaseVelocity, Examples) {
  EXPECT_DOUBLE_EQ(phase_velocity(0.3, 0.3, 0.1, 0.1, 2.0, 1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(phase_velocity(1.0, 0.0, 0.0, 0.0, 2.0, 1.0, 3.0), 6.0);
  EXPECT_DOUBLE_EQ(phase_velocity(0.5, 0.0, 0.75, 0.25, 2.0, 2.0, 6.0), 6.0);
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const double pk = u(rng), pl = u(rng), sk = u(rng), sl = u(rng);
    EXPECT_DOUBLE_EQ(phase_velocity(pk, pl, sk, sl, 1.5, 2.0, 1.0), -phase_velocity(pl, pk, sl, sk, 1.5, 2.0, 1.0));
  }
}

TEST(UpwindSaturation, Examples) {
  EXPECT_DOUBLE_EQ(upwind_saturation(0.3, 0.9, 1.0), 0.3);
  EXPECT_DOUBLE_EQ(upwind_saturation(-0.1, 0.9, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(upwind_saturation(0.3, 0.9, -1.0), 0.9);
  EXPECT_DOUBLE_EQ(upwind_saturation(0.3, 0.9, 0.0), 0.3);
}

TEST(CapillaryDirichlet, Examples) {
  const FVMesh mesh = build_cartesian_fv_mesh(2, 1, Box::rectangle(0.0, 2.0, 0.0, 1.0));
  SaturationState s(2, 2);
  s(0, 0) = 1.0;
  s(1, 1) = 1.0;
  EXPECT_DOUBLE_EQ(capillary_dirichlet_energy(s, mesh, CapillaryModel(LinearTwoPhase{1.0})), 1.0);
  SaturationState uniform(2, 2);
  uniform.values().setConstant(0.5);
  EXPECT_DOUBLE_EQ(capillary_dirichlet_energy(uniform, mesh, CapillaryModel(BrooksCorey{1.0})), 0.0);
}

TEST(FvResidual, UniformStateWithoutGravityIsSteady) {
  const FVMesh mesh = build_cartesian_fv_mesh(5, 4, Box::unit_square());
  PhaseSet phases = three_phases();
  phases.gravity = Point(0.0, 0.0);
  FvSolver solver(mesh, phases, CapillaryModel(QuadraticThreePhase{1.0, 1.0}));
  SaturationState s(20, 3);
  s.values().col(0).setConstant(0.2);
  s.values().col(1).setConstant(0.3);
  s.values().col(2).setConstant(0.5);
  FvUnknowns u = solver.initial_unknowns(s);
  EXPECT_LE(solver.assemble_residual(u, s, 0.1).cwiseAbs().maxCoeff(), 1e-14);
  const NewtonResult r = solver.newton_step_solve(u, s, 0.1);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 1);
  EXPECT_LE((r.u.s.values() - s.values()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FvResidual, SingleCellHasOnlyTimeTerm) {
  const FVMesh mesh = build_cartesian_fv_mesh(1, 1, Box::rectangle(0.0, 2.0, 0.0, 1.0));
  FvSolver solver(mesh, bc_phases(), CapillaryModel(BrooksCorey{1.0}));
  SaturationState s_old(1, 2), s_new(1, 2);
  s_old(0, 0) = 0.4, s_old(0, 1) = 0.6;
  s_new(0, 0) = 0.7, s_new(0, 1) = 0.3;
  FvUnknowns u = solver.initial_unknowns(s_new);
  const Eigen::VectorXd res = solver.assemble_residual(u, s_old, 0.5);
  EXPECT_NEAR(res[0], (0.3 - 0.6) * 2.0 / 0.5, 1e-14);
}

TEST(FvResidual, FluxesTelescope) {
  std::mt19937 rng(42);
  const FVMesh mesh = build_cartesian_fv_mesh(5, 3, Box::unit_square());
  for (int np : {2, 3}) {
    const PhaseSet phases = np == 2 ? bc_phases() : three_phases();
    const CapillaryModel model = np == 2 ? CapillaryModel(BrooksCorey{1.0}) : CapillaryModel(QuadraticThreePhase{});
    FvSolver solver(mesh, phases, model);
    for (int trial = 0; trial < 10; ++trial) {
      SaturationState s_old;
      FvUnknowns u = random_unknowns(rng, 15, np, &s_old);
      u.lambda = 0.0;
      const double tau = 0.2;
      const Eigen::VectorXd res = solver.assemble_residual(u, s_old, tau);
      double pressure_sum = 0.0, time_total = 0.0;
      for (int i = 1; i < np; ++i) {
        double sum = 0.0, expect = 0.0;
        for (int k = 0; k < 15; ++k) {
          sum += res[k * np + i - 1];
          expect += (u.s(k, i) - s_old(k, i)) * mesh.cells[k].measure / tau;
        }
        EXPECT_NEAR(sum, expect, 1e-12);
        time_total += expect;
      }
      for (int k = 0; k < 15; ++k) pressure_sum += res[k * np + np - 1];
      EXPECT_NEAR(pressure_sum, 0.0, 1e-12);
      (void)time_total;
    }
  }
}

TEST(FvJacobian, MatchesCentralDifferences) {
  std::mt19937 rng(43);
  const FVMesh mesh = build_cartesian_fv_mesh(4, 4, Box::unit_square());
  for (int np : {2, 3}) {
    const PhaseSet phases = np == 2 ? bc_phases() : three_phases();
    const CapillaryModel model = np == 2 ? CapillaryModel(BrooksCorey{1.0}) : CapillaryModel(QuadraticThreePhase{});
    FvSolver solver(mesh, phases, model);
    for (int trial = 0; trial < 5; ++trial) {
      SaturationState s_old;
      const FvUnknowns u = random_unknowns(rng, 16, np, &s_old);
      const Eigen::MatrixXd jac(solver.assemble_jacobian(u, s_old, 0.1));
      const Eigen::VectorXd x = solver.pack(u);
      for (int c = 0; c < x.size(); ++c) {
        Eigen::VectorXd xp = x, xm = x;
        xp[c] += 1e-7;
        xm[c] -= 1e-7;
        const Eigen::VectorXd col =
            (solver.assemble_residual(solver.unpack(xp), s_old, 0.1) - solver.assemble_residual(solver.unpack(xm), s_old, 0.1)) / 2e-7;
        ASSERT_LE((col - jac.col(c)).norm(), 1e-5 * std::max(1.0, jac.col(c).norm())) << "np " << np << " col " << c;
      }
    }
  }
}

TEST(FvJacobian, TimeTermDominatesForSmallSteps) {
  std::mt19937 rng(44);
  const FVMesh mesh = build_cartesian_fv_mesh(3, 3, Box::unit_square());
  FvSolver solver(mesh, bc_phases(), CapillaryModel(BrooksCorey{1.0}));
  SaturationState s_old;
  const FvUnknowns u = random_unknowns(rng, 9, 2, &s_old);
  const double tau = 1e-9;
  const Eigen::MatrixXd jac(solver.assemble_jacobian(u, s_old, tau));
  for (int k = 0; k < 9; ++k) {
    const double mk = mesh.cells[k].measure;
    EXPECT_NEAR(jac(2 * k, 2 * k) * tau / mk, 1.0, 1e-6);
  }
}

TEST(FvPackUnpack, RoundTrip) {
  std::mt19937 rng(45);
  const FVMesh mesh = build_cartesian_fv_mesh(3, 2, Box::unit_square());
  FvSolver solver(mesh, three_phases(), CapillaryModel(QuadraticThreePhase{}));
  SaturationState s_old;
  const FvUnknowns u = random_unknowns(rng, 6, 3, &s_old);
  const FvUnknowns back = solver.unpack(solver.pack(u));
  EXPECT_LE((back.s.values() - u.s.values()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(back.p0, u.p0);
  EXPECT_EQ(back.lambda, u.lambda);
  EXPECT_EQ(solver.num_unknowns(), 6 * 3 + 1);
}

TEST(FvNewton, StartingAtSolutionConvergesImmediately) {
  const FVMesh mesh = build_cartesian_fv_mesh(6, 6, Box::unit_square());
  FvSolver solver(mesh, bc_phases(), CapillaryModel(BrooksCorey{1.0}));
  SaturationState s0(36, 2);
  for (int k = 0; k < 36; ++k) {
    s0(k, 1) = mesh.cells[k].center.x() < 0.5 ? 0.9 : 0.0;
    s0(k, 0) = 1.0 - s0(k, 1);
  }
  const NewtonResult first = solver.newton_step_solve(solver.initial_unknowns(s0), s0, 0.05);
  ASSERT_TRUE(first.converged);
  const NewtonResult again = solver.newton_step_solve(first.u, s0, 0.05);
  EXPECT_TRUE(again.converged);
  EXPECT_LE(again.iterations, 1);
}

TEST(FvRun, TwoPhaseInvariantsOnCoarseGrid) {
  RunConfig cfg = preset_config("two_phase_bc");
  cfg.nx = cfg.ny = 10;
  const FVMesh mesh = build_cartesian_fv_mesh(10, 10, cfg.domain);
  FvSolver solver(mesh, cfg.phases, cfg.capillary_model(), cfg.fv);
  const SaturationState s0 = initial_cell_state(cfg);
  const FvTrajectory traj = solver.run(s0, 0.05, 1.0);
  const double tol = cfg.fv.newton_tol;
  const auto& first = traj.steps.front();
  for (std::size_t n = 1; n < traj.steps.size(); ++n) {
    const auto& r = traj.steps[n];
    for (int i = 0; i < 2; ++i) EXPECT_LE(std::abs(r.masses[i] - first.masses[i]), 1e-12 * first.masses[i]);
    EXPECT_GE(r.min_saturation, -10.0 * tol);
    EXPECT_LE(r.max_simplex_violation, 10.0 * tol);
    EXPECT_GE(r.dissipation, 0.0);
    EXPECT_LE(r.energy + r.tau * r.dissipation, traj.steps[n - 1].energy + 10.0 * tol);
    EXPECT_LE(std::abs(r.gauge), 100.0 * tol);
  }
  EXPECT_NEAR(traj.steps.back().t, 1.0, 1e-12);
  EXPECT_EQ(traj.rejected_steps, 0);
}

TEST(FvRun, ObserverSeesEveryAcceptedStepAndSnapshotsLand) {
  RunConfig cfg = preset_config("three_phase");
  cfg.nx = cfg.ny = 6;
  const FVMesh mesh = build_cartesian_fv_mesh(6, 6, cfg.domain);
  FvConfig fvc = cfg.fv;
  fvc.snapshot_times = {0.0, 0.13, 0.3};
  FvSolver solver(mesh, cfg.phases, cfg.capillary_model(), fvc);
  int seen = 0;
  const FvTrajectory traj = solver.run(initial_cell_state(cfg), 0.05, 0.3,
                                       [&](const FvStepRecord& r, const FvUnknowns&) { EXPECT_EQ(r.step, seen++); });
  EXPECT_EQ(seen, static_cast<int>(traj.steps.size()));
  ASSERT_EQ(traj.snapshot_times.size(), 3u);
  EXPECT_DOUBLE_EQ(traj.snapshot_times[1], 0.13);
  bool hit = false;
  for (const auto& r : traj.steps) hit = hit || std::abs(r.t - 0.13) < 1e-14;
  EXPECT_TRUE(hit);
}

TEST(FvRun, TauUnderflowCarriesState) {
  RunConfig cfg = preset_config("two_phase_bc");
  const FVMesh mesh = build_cartesian_fv_mesh(4, 4, cfg.domain);
  FvConfig fvc = cfg.fv;
  fvc.max_newton = 0;
  fvc.tau_floor = 0.01;
  FvSolver solver(mesh, cfg.phases, cfg.capillary_model(), fvc);
  cfg.nx = cfg.ny = 4;
  try {
    solver.run(initial_cell_state(cfg), 0.05, 1.0);
    FAIL() << "expected StepUnderflowError";
  } catch (const StepUnderflowError& e) {
    EXPECT_EQ(e.state().num_points(), 16);
    EXPECT_DOUBLE_EQ(e.time(), 0.0);
  }
}

}  // namespace
}  // namespace pflow
