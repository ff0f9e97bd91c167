#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "oracles.hpp"
#include "pflow/errors.hpp"
#include "pflow/physics.hpp"

namespace pflow {
namespace {

const double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Random interior point of the reduced simplex in n dimensions.
Eigen::VectorXd random_interior(std::mt19937& rng, int n, double margin = 0.01) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd w(n + 1);
  for (int i = 0; i <= n; ++i) w[i] = e(rng);
  w /= w.sum();
  w = margin + (1.0 - (n + 1) * margin) * w.array();
  return w.tail(n);
}

std::vector<CapillaryModel> all_models() {
  return {CapillaryModel(BrooksCorey{1.0}), CapillaryModel(BrooksCorey{0.3}), CapillaryModel(LinearTwoPhase{0.5}),
          CapillaryModel(LinearTwoPhase{2.0}), CapillaryModel(QuadraticThreePhase{1.0, 1.0}),
          CapillaryModel(QuadraticThreePhase{0.5, 3.0})};
}

TEST(GravityPotential, Examples) {
  const Point g(0.0, -1.0);
  EXPECT_DOUBLE_EQ(gravity_potential(1.0, g, Point(0.0, 1.0)), 1.0);
  EXPECT_DOUBLE_EQ(gravity_potential(0.0, g, Point(0.3, 0.8)), 0.0);
  EXPECT_NEAR(gravity_potential(0.87, g, Point(0.5, 0.5)), 0.435, 1e-15);
  PhaseSet phases{{Phase{1.0, 1.0}, Phase{10.0, 0.87}}};
  EXPECT_NEAR(phases.potential(1, Point(0.5, 0.5)), 0.435, 1e-15);
}

TEST(PhaseSet, Validation) {
  PhaseSet ok{{Phase{1.0, 1.0}, Phase{10.0, 0.87}}};
  EXPECT_NO_THROW(ok.validate());
  PhaseSet bad_mu = ok;
  bad_mu.phases[1].viscosity = 0.0;
  EXPECT_THROW(bad_mu.validate(), std::invalid_argument);
  PhaseSet bad_rho = ok;
  bad_rho.phases[0].density = -1.0;
  EXPECT_THROW(bad_rho.validate(), std::invalid_argument);
  PhaseSet bad_phi = ok;
  bad_phi.porosity = 0.5;
  EXPECT_THROW(bad_phi.validate(), std::invalid_argument);
  PhaseSet bad_k = ok;
  bad_k.permeability = 0.0;
  EXPECT_THROW(bad_k.validate(), std::invalid_argument);
}

TEST(CapillaryPressure, Examples) {
  const CapillaryModel bc(BrooksCorey{1.0});
  EXPECT_DOUBLE_EQ(capillary_pressure(bc, vec({0.0}))[0], 1.0);
  EXPECT_DOUBLE_EQ(capillary_pressure(bc, vec({0.75}))[0], 2.0);
  const CapillaryModel q3(QuadraticThreePhase{1.0, 2.0});
  EXPECT_EQ(capillary_pressure(q3, vec({0.0, 0.0})), vec({0.0, 0.0}));
  EXPECT_EQ(capillary_pressure(q3, vec({0.25, 0.5})), vec({0.25, 1.0}));
}

TEST(CapillaryPressure, BrooksCoreySingularity) {
  const CapillaryModel bc(BrooksCorey{1.0});
  EXPECT_THROW(capillary_pressure(bc, vec({1.0})), NumericalError);
  EXPECT_THROW(capillary_pressure(bc, vec({1.2})), NumericalError);
  Eigen::MatrixXd jac;
  const auto clamped = bc.pressures_clamped(vec({1.0}), 1e-8, &jac);
  EXPECT_NEAR(clamped[0], 1e4, 1e-6);
  EXPECT_TRUE(std::isfinite(jac(0, 0)));
}

TEST(CapillaryPotential, Examples) {
  EXPECT_DOUBLE_EQ(capillary_potential(CapillaryModel(QuadraticThreePhase{1.0, 1.0}), vec({0.5, 0.5})), 0.25);
  EXPECT_DOUBLE_EQ(capillary_potential(CapillaryModel(BrooksCorey{1.0}), vec({0.0})), 0.0);
  EXPECT_DOUBLE_EQ(capillary_potential(CapillaryModel(LinearTwoPhase{0.5}), vec({1.0})), 0.25);
}

TEST(CapillaryPotential, InfiniteOutsideSimplex) {
  for (const auto& m : all_models()) {
    const int n = m.num_interior();
    Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
    s[0] = -0.1;
    EXPECT_EQ(m.potential(s), kInf) << m.name();
    s[0] = 1.1;
    EXPECT_EQ(m.potential(s), kInf) << m.name();
  }
}

TEST(CapillaryModel, Metadata) {
  EXPECT_EQ(CapillaryModel(BrooksCorey{}).num_phases(), 2);
  EXPECT_EQ(CapillaryModel(LinearTwoPhase{}).num_phases(), 2);
  EXPECT_EQ(CapillaryModel(QuadraticThreePhase{}).num_phases(), 3);
  EXPECT_FALSE(CapillaryModel(BrooksCorey{}).lipschitz().has_value());
  EXPECT_DOUBLE_EQ(*CapillaryModel(QuadraticThreePhase{0.5, 3.0}).lipschitz(), 3.0);
  EXPECT_DOUBLE_EQ(*CapillaryModel(LinearTwoPhase{0.5}).lipschitz(), 0.5);
}

TEST(CapillaryModel, InversePressure) {
  const CapillaryModel bc(BrooksCorey{1.0});
  EXPECT_NEAR(bc.inverse_pressure(2.0), 0.75, 1e-14);
  EXPECT_DOUBLE_EQ(bc.inverse_pressure(0.5), 0.0);
  const CapillaryModel lin(LinearTwoPhase{0.5});
  EXPECT_NEAR(lin.inverse_pressure(0.2), 0.4, 1e-15);
  EXPECT_DOUBLE_EQ(lin.inverse_pressure(3.0), 1.0);
  EXPECT_DOUBLE_EQ(lin.inverse_pressure(-1.0), 0.0);
}

TEST(CapillaryModel, GradientConsistency) {
  std::mt19937 rng(11);
  for (const auto& m : all_models()) {
    const int n = m.num_interior();
    for (int trial = 0; trial < 1000; ++trial) {
      const Eigen::VectorXd s = random_interior(rng, n);
      const Eigen::VectorXd pi = m.pressures(s);
      for (int i = 0; i < n; ++i) {
        const double h = 1e-6;
        Eigen::VectorXd sp = s, sm = s;
        sp[i] += h;
        sm[i] -= h;
        const double fd = (m.potential(sp) - m.potential(sm)) / (2.0 * h);
        ASSERT_LE(std::abs(fd - pi[i]), 1e-6 * (1.0 + std::abs(pi[i]))) << m.name();
      }
    }
  }
}

TEST(CapillaryModel, PressureIsMonotone) {
  std::mt19937 rng(12);
  for (const auto& m : all_models()) {
    const int n = m.num_interior();
    for (int trial = 0; trial < 1000; ++trial) {
      const Eigen::VectorXd a = random_interior(rng, n), b = random_interior(rng, n);
      if ((a - b).norm() < 1e-9) continue;
      ASSERT_GT((m.pressures(a) - m.pressures(b)).dot(a - b), 0.0) << m.name();
    }
  }
}

TEST(CapillaryModel, ClampedJacobianMatchesDifferences) {
  std::mt19937 rng(13);
  for (const auto& m : all_models()) {
    const int n = m.num_interior();
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd s = random_interior(rng, n, 0.02);
      Eigen::MatrixXd jac;
      m.pressures_clamped(s, 1e-12, &jac);
      for (int j = 0; j < n; ++j) {
        Eigen::VectorXd sp = s, sm = s;
        sp[j] += 1e-7;
        sm[j] -= 1e-7;
        const Eigen::VectorXd col = (m.pressures(sp) - m.pressures(sm)) / 2e-7;
        ASSERT_LE((col - jac.col(j)).norm(), 1e-5 * (1.0 + jac.col(j).norm())) << m.name();
      }
    }
  }
}

TEST(TotalEnergy, UniformQuadraticWithoutGravity) {
  PhaseSet phases{{Phase{1.0, 1.0}, Phase{50.0, 0.87}, Phase{0.1, 0.1}}};
  phases.gravity = Point(0.0, 0.0);
  SaturationState s(1, 3);
  s(0, 1) = 0.5;
  s(0, 2) = 0.5;
  const std::vector<Cell> cells{Cell{Point(0.5, 0.5), 1.0}};
  EXPECT_DOUBLE_EQ(total_energy(s, cells, CapillaryModel(QuadraticThreePhase{1.0, 1.0}), phases), 0.25);
  EXPECT_DOUBLE_EQ(total_energy(s, cells, CapillaryModel(QuadraticThreePhase{0.0, 0.0}), phases), 0.0);
}

TEST(TotalEnergy, InfiniteOffSimplex) {
  PhaseSet phases{{Phase{1.0, 1.0}, Phase{10.0, 0.87}}};
  SaturationState s(1, 2);
  s(0, 0) = 0.7;
  s(0, 1) = 0.7;
  const std::vector<Cell> cells{Cell{Point(0.5, 0.5), 1.0}};
  EXPECT_EQ(total_energy(s, cells, CapillaryModel(LinearTwoPhase{1.0}), phases), kInf);
}

TEST(TotalEnergy, BoundedBelowByPotentialEnergy) {
  std::mt19937 rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhaseSet phases{{Phase{1.0, 1.0}, Phase{50.0, 0.87}, Phase{0.1, 0.1}}};
  std::vector<Cell> cells;
  for (int k = 0; k < 20; ++k) cells.push_back(Cell{Point(u(rng), u(rng)), 0.05});
  for (const auto& m : all_models()) {
    const int np = m.num_phases();
    PhaseSet ps = phases;
    ps.phases.resize(np);
    for (int trial = 0; trial < 50; ++trial) {
      SaturationState s(20, np);
      double potential = 0.0;
      for (int k = 0; k < 20; ++k) {
        const Eigen::VectorXd star = random_interior(rng, np - 1, 0.0);
        for (int i = 1; i < np; ++i) s(k, i) = star[i - 1];
        s(k, 0) = 1.0 - star.sum();
        for (int i = 0; i < np; ++i) potential += s(k, i) * ps.potential(i, cells[k].center) * cells[k].measure;
      }
      EXPECT_GE(total_energy(s, cells, m, ps), potential - 1e-14) << m.name();
    }
  }
}

TEST(TotalEntropy, Examples) {
  PhaseSet phases{{Phase{1.0, 0.0}, Phase{3.0, 0.0}, Phase{5.0, 0.0}}};
  SaturationState s(2, 3);
  s(0, 0) = 1.0;
  s(1, 0) = 1.0;
  const std::vector<Cell> cells{Cell{Point(0.25, 0.5), 0.5}, Cell{Point(0.75, 0.5), 0.5}};
  EXPECT_NEAR(total_entropy(s, cells, phases), 3.0 + 5.0, 1e-14);
  EXPECT_DOUBLE_EQ(total_entropy(SaturationState(0, 3), {}, phases), 0.0);
  s(0, 1) = -1e-6;
  EXPECT_THROW(total_entropy(s, cells, phases), std::domain_error);
}

TEST(ProxBrooksCorey, Examples) {
  const Eigen::Vector2d zero(0.0, 0.0);
  EXPECT_NEAR(prox_energy_brooks_corey({0.5, 0.5}, zero, 0.0, 1.0)[1], 0.5, 1e-14);
  const Eigen::Vector2d r = prox_energy_brooks_corey({0.5, 0.5}, zero, 0.05, 1.0);
  EXPECT_NEAR(r[1], 0.4658, 5e-5);
  EXPECT_NEAR(r[1], oracle::brooks_corey_prox({0.5, 0.5}, zero, 0.05, 1.0)[1], 1e-12);
  EXPECT_NEAR(r.sum(), 1.0, 1e-15);
  const Eigen::Vector2d clamped = prox_energy_brooks_corey({2.0, -2.0}, zero, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(clamped[1], 0.0);
  EXPECT_DOUBLE_EQ(clamped[0], 1.0);
}

TEST(ProxBrooksCorey, MatchesBisectionOracle) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> c(-2.0, 2.0), p(0.0, 1.0), t(0.01, 0.5), a(0.1, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Vector2d cbar(c(rng), c(rng)), psi(p(rng), p(rng));
    const double tau = t(rng), alpha = a(rng);
    const Eigen::Vector2d got = prox_energy_brooks_corey(cbar, psi, tau, alpha);
    const Eigen::Vector2d want = oracle::brooks_corey_prox(cbar, psi, tau, alpha);
    ASSERT_LE((got - want).cwiseAbs().maxCoeff(), 1e-10) << "trial " << trial;
  }
}

TEST(ProxQuadratic3, Examples) {
  const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
  const Eigen::Vector3d third = Eigen::Vector3d::Constant(1.0 / 3.0);
  EXPECT_LE((prox_energy_quadratic3(third, zero, 0.0, 1.0, 1.0) - third).norm(), 1e-14);
  const Eigen::Vector3d edge = prox_energy_quadratic3({0.0, 2.0, 2.0}, zero, 0.0, 1.0, 1.0);
  EXPECT_LE((edge - oracle::quadratic3_prox({0.0, 2.0, 2.0}, zero, 0.0, 1.0, 1.0)).norm(), 1e-6);
  EXPECT_NEAR(edge[0], 0.0, 1e-14);
  EXPECT_NEAR(edge[1], 0.5, 1e-12);
}

TEST(ProxQuadratic3, MatchesGridOracle) {
  std::mt19937 rng(22);
  std::uniform_real_distribution<double> c(-1.5, 2.0), p(0.0, 1.0), t(0.0, 0.5), a(0.1, 3.0);
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Vector3d cbar(c(rng), c(rng), c(rng)), psi(p(rng), p(rng), p(rng));
    const double tau = t(rng), a1 = a(rng), a2 = a(rng);
    const Eigen::Vector3d got = prox_energy_quadratic3(cbar, psi, tau, a1, a2);
    const Eigen::Vector3d want = oracle::quadratic3_prox(cbar, psi, tau, a1, a2);
    ASSERT_LE((got - want).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
  }
}

TEST(ProxQuadratic3, BeatsSegmentEndpointsAndClampedPoint) {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> c(-1.5, 2.0), p(0.0, 1.0), t(0.0, 0.5);
  const CapillaryModel m(QuadraticThreePhase{1.0, 1.0});
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::Vector3d cbar(c(rng), c(rng), c(rng)), psi(p(rng), p(rng), p(rng));
    const double tau = t(rng);
    const Eigen::Vector3d got = prox_energy_quadratic3(cbar, psi, tau, 1.0, 1.0);
    ASSERT_GE(got.minCoeff(), -1e-15);
    ASSERT_NEAR(got.sum(), 1.0, 1e-14);
    const double f = oracle::prox_objective(m, got, cbar, psi, tau);
    for (const Eigen::Vector3d& v : {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(0, 0, 1)})
      ASSERT_LE(f, oracle::prox_objective(m, v, cbar, psi, tau) + 1e-12);
    Eigen::Vector3d clamped = cbar.cwiseMax(0.0);
    clamped /= clamped.sum() > 0.0 ? clamped.sum() : 1.0;
    if (clamped.sum() > 0.5) {
      ASSERT_LE(f, oracle::prox_objective(m, clamped, cbar, psi, tau) + 1e-12);
    }
  }
}

TEST(ProxEnergy, FeasibleAndLocallyOptimal) {
  std::mt19937 rng(24);
  std::uniform_real_distribution<double> c(-1.0, 2.0), p(0.0, 1.0), t(0.001, 0.3);
  std::normal_distribution<double> z(0.0, 1.0);
  for (const auto& m : all_models()) {
    const int np = m.num_phases();
    for (int trial = 0; trial < 40; ++trial) {
      Eigen::VectorXd cbar(np), psi(np);
      for (int i = 0; i < np; ++i) cbar[i] = c(rng), psi[i] = p(rng);
      const double tau = t(rng);
      const Eigen::VectorXd got = m.prox_energy(cbar, psi, tau);
      ASSERT_NEAR(got.sum(), 1.0, 1e-12) << m.name();
      ASSERT_GE(got.minCoeff(), -1e-14) << m.name();
      const double f = oracle::prox_objective(m, got, cbar, psi, tau);
      for (int k = 0; k < 200; ++k) {
        Eigen::VectorXd d(np);
        for (int i = 0; i < np; ++i) d[i] = z(rng);
        d.array() -= d.mean();
        Eigen::VectorXd q = got + 1e-3 * d / d.norm();
        if (q.minCoeff() < 0.0) continue;
        ASSERT_LE(f, oracle::prox_objective(m, q, cbar, psi, tau) + 1e-13) << m.name();
      }
    }
  }
}

TEST(ProxEnergy, MoreauIdentityIsExact) {
  std::mt19937 rng(25);
  std::uniform_real_distribution<double> c(-1.0, 2.0);
  for (const auto& m : all_models()) {
    const int np = m.num_phases();
    Eigen::VectorXd cbar(np);
    for (int i = 0; i < np; ++i) cbar[i] = c(rng);
    const Eigen::VectorXd primal = m.prox_energy(cbar, Eigen::VectorXd::Zero(np), 0.1);
    const Eigen::VectorXd dual = prox_conjugate_via_moreau(primal, cbar);
    EXPECT_EQ(dual, cbar - primal);
    EXPECT_EQ(prox_conjugate_via_moreau(cbar, cbar), Eigen::VectorXd::Zero(np));
    EXPECT_EQ(prox_conjugate_via_moreau(Eigen::VectorXd::Zero(np), cbar), cbar);
  }
}

}  // namespace
}  // namespace pflow
