#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <string>

#include "pflow/config.hpp"

namespace pflow {
namespace {

ConfigError parse_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "expected ConfigError for:\n" << text;
  return ConfigError("", "");
}

TEST(Presets, TwoPhaseBrooksCorey) {
  const RunConfig c = preset_config("two_phase_bc");
  EXPECT_EQ(c.capillary, "brooks_corey");
  EXPECT_DOUBLE_EQ(c.alpha, 1.0);
  EXPECT_DOUBLE_EQ(c.tau, 0.05);
  EXPECT_EQ(c.jko_steps(), 200);
  EXPECT_EQ(c.nx, 50);
  EXPECT_EQ(c.ny, 50);
  EXPECT_EQ(c.snapshots, (std::vector<double>{2.5, 5.0, 7.5, 10.0}));
  EXPECT_NO_THROW(validate_config(c));
}

TEST(Presets, ThreePhase) {
  const RunConfig c = preset_config("three_phase");
  ASSERT_EQ(c.phases.size(), 3);
  EXPECT_DOUBLE_EQ(c.phases.phases[0].viscosity, 1.0);
  EXPECT_DOUBLE_EQ(c.phases.phases[1].viscosity, 50.0);
  EXPECT_DOUBLE_EQ(c.phases.phases[2].viscosity, 0.1);
  EXPECT_DOUBLE_EQ(c.phases.phases[0].density, 1.0);
  EXPECT_DOUBLE_EQ(c.phases.phases[1].density, 0.87);
  EXPECT_DOUBLE_EQ(c.phases.phases[2].density, 0.1);
  EXPECT_EQ(c.capillary, "quadratic3");
  EXPECT_EQ(c.snapshots, (std::vector<double>{0.1, 1.25, 2.5, 5.0, 10.0}));
  EXPECT_NO_THROW(validate_config(c));
}

TEST(Presets, EnergyDecay) {
  const RunConfig c = preset_config("energy_decay");
  EXPECT_EQ(c.capillary, "linear");
  EXPECT_DOUBLE_EQ(c.alpha, 0.5);
  EXPECT_DOUBLE_EQ(c.phases.phases[0].viscosity, 1.0);
  EXPECT_DOUBLE_EQ(c.phases.phases[0].density, 1.0);
  EXPECT_DOUBLE_EQ(c.phases.phases[1].viscosity, 10.0);
  EXPECT_DOUBLE_EQ(c.phases.phases[1].density, 0.87);
  EXPECT_DOUBLE_EQ(c.phases.permeability, 1.0);
  EXPECT_EQ(c.initial.kind, InitialKind::Gaussian);
  const Eigen::VectorXd at = c.initial.evaluate(Point(0.5, 0.25), 2);
  EXPECT_NEAR(at[1], std::exp(-4.0 * (0.25 + 0.0625)), 1e-15);
  EXPECT_NEAR(at.sum(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(c.domain.lower.x(), -1.0);
  EXPECT_DOUBLE_EQ(c.domain.upper.y(), 1.0);
}

TEST(Presets, UnknownName) {
  EXPECT_THROW(preset_config("nope"), ConfigError);
  const ConfigError e = parse_error("[scenario]\npreset = nope\n");
  EXPECT_EQ(e.field(), "scenario.preset");
  EXPECT_EQ(e.line(), 2);
}

TEST(ParseConfig, PresetThenOverrides) {
  const RunConfig c = parse_config_text(
      "; comment\n[scenario]\npreset = two_phase_bc\n\n[domain]\nnx = 12\nny = 8\n[time]\nt_end = 2.5\n"
      "[solver]\nkind = fv\n[alg2]\ntol = 1e-7\n[output]\nsnapshots = 0.5, 1.5\n");
  EXPECT_EQ(c.nx, 12);
  EXPECT_EQ(c.ny, 8);
  EXPECT_DOUBLE_EQ(c.t_end, 2.5);
  EXPECT_EQ(c.solver, SolverChoice::Fv);
  EXPECT_DOUBLE_EQ(c.alg2.tol, 1e-7);
  EXPECT_EQ(c.snapshots, (std::vector<double>{0.5, 1.5}));
  EXPECT_EQ(c.capillary, "brooks_corey");
}

TEST(ParseConfig, FullConfigWithoutPreset) {
  const RunConfig c = parse_config_text(
      "[domain]\nlower = 0, 0\nupper = 2, 1\nnx = 4\nny = 2\n"
      "[phases]\nviscosity = 1, 5\ndensity = 1, 0.5\n"
      "[capillary]\nmodel = linear\nalpha = 2\n"
      "[initial]\nkind = block\nsplit = 1\nleft = 0.2, 0.8\nright = 1, 0\n"
      "[time]\ntau = 0.1\nt_end = 0.3\n");
  EXPECT_DOUBLE_EQ(c.domain.upper.x(), 2.0);
  EXPECT_DOUBLE_EQ(c.phases.phases[1].viscosity, 5.0);
  EXPECT_EQ(c.initial.kind, InitialKind::Block);
  EXPECT_EQ(c.jko_steps(), 3);
  EXPECT_DOUBLE_EQ(c.initial.evaluate(Point(0.5, 0.5), 2)[1], 0.8);
  EXPECT_DOUBLE_EQ(c.initial.evaluate(Point(1.5, 0.5), 2)[1], 0.0);
}

TEST(ParseConfig, ErrorsNameFieldAndLine) {
  auto e = parse_error("[domain]\nnx = 4\nbogus = 1\n");
  EXPECT_EQ(e.field(), "domain.bogus");
  EXPECT_EQ(e.line(), 3);
  EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);

  e = parse_error("[nowhere]\nx = 1\n");
  EXPECT_EQ(e.field(), "nowhere");
  EXPECT_EQ(e.line(), 1);

  e = parse_error("[domain]\n\nnx = four\n");
  EXPECT_EQ(e.field(), "domain.nx");
  EXPECT_EQ(e.line(), 3);

  e = parse_error("[phases]\nviscosity = 1, -2\n");
  EXPECT_EQ(e.field(), "phases.viscosity");

  e = parse_error("[time]\ntau = 0\n");
  EXPECT_EQ(e.field(), "time.tau");

  e = parse_error("[time]\ntau = 0.3\nt_end = 1\n");
  EXPECT_EQ(e.field(), "time.t_end");

  e = parse_error("[solver]\nkind = magic\n");
  EXPECT_EQ(e.field(), "solver.kind");
  EXPECT_EQ(e.line(), 2);
  EXPECT_EQ(std::string(e.what()).find("solver.kind: solver.kind"), std::string::npos);

  e = parse_error("[capillary]\nmodel = quadratic3\n");
  EXPECT_EQ(e.field(), "capillary.model");

  e = parse_error("[initial]\nkind = uniform\nvalues = 0.5, 0.6\n");
  EXPECT_EQ(e.field(), "initial.values");

  e = parse_error("[output]\nsnapshots = 5\n");
  EXPECT_EQ(e.field(), "output.snapshots");

  e = parse_error("[domain\nnx = 3\n");
  EXPECT_GT(e.line(), 0);

  e = parse_error("nx = 3\n");
  EXPECT_FALSE(e.field().empty());
}

TEST(ParseConfig, FvOnlyAllowsNonMultipleEndTime) {
  EXPECT_NO_THROW(parse_config_text("[time]\ntau = 0.3\nt_end = 1\n[solver]\nkind = fv\n"));
}

TEST(SerializeConfig, RoundTripsPresetsAndEdits) {
  for (const auto& name : preset_names()) {
    const RunConfig c = preset_config(name);
    const RunConfig back = parse_config_text(serialize_config(c));
    EXPECT_TRUE(back == c) << name;
    EXPECT_EQ(serialize_config(back), serialize_config(c)) << name;
  }
  RunConfig c = preset_config("energy_decay");
  c.tau = 0.1 / 3.0;
  c.t_end = c.tau * 30.0;
  c.alg2.phase_r = {0.3, 1.0 / 7.0};
  c.alg2.accelerate = false;
  c.fv.polish_steps = 0;
  c.snapshots = {c.tau, c.t_end};
  c.vtk = true;
  c.output_dir = "some dir/out";
  c.preset.clear();
  const RunConfig back = parse_config_text(serialize_config(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(back.tau, c.tau);
  EXPECT_EQ(back.alg2.phase_r, c.alg2.phase_r);
}

TEST(EnvOverrides, AppliesToleranceKeys) {
  RunConfig c = preset_config("two_phase_bc");
  const std::map<std::string, std::string> env{{"PFL_ALG2_TOL", "2.5e-7"},
                                               {"PFL_FV_NEWTON_TOL", "1e-11"},
                                               {"PFL_ALG2_MAX_ITER", "123"},
                                               {"PFL_TIME_TAU", "0.5"}};
  apply_env_overrides(c, [&](const char* name) -> const char* {
    auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  EXPECT_DOUBLE_EQ(c.alg2.tol, 2.5e-7);
  EXPECT_DOUBLE_EQ(c.fv.newton_tol, 1e-11);
  EXPECT_EQ(c.alg2.max_iter, 123);
  EXPECT_DOUBLE_EQ(c.tau, 0.05);
}

TEST(EnvOverrides, BadValueNamesVariable) {
  RunConfig c;
  try {
    apply_env_overrides(c, [](const char* name) -> const char* {
      return std::string(name) == "PFL_FV_MAX_NEWTON" ? "many" : nullptr;
    });
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "fv.max_newton");
    EXPECT_NE(std::string(e.what()).find("PFL_FV_MAX_NEWTON"), std::string::npos);
  }
}

TEST(InitialState, CellAveragesStayOnSimplexAndConserveVolume) {
  for (const auto& name : preset_names()) {
    RunConfig c = preset_config(name);
    c.nx = 9;
    c.ny = 7;
    const SaturationState cells = initial_cell_state(c);
    const SaturationState nodes = initial_nodal_state(c);
    EXPECT_EQ(cells.num_points(), 63);
    EXPECT_EQ(nodes.num_points(), 80);
    for (const SaturationState* s : {&cells, &nodes}) {
      EXPECT_GE(s->values().minCoeff(), 0.0) << name;
      EXPECT_LE((s->values().rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14) << name;
    }
  }
  RunConfig c = preset_config("two_phase_bc");
  c.nx = c.ny = 10;
  const SaturationState s = initial_cell_state(c);
  EXPECT_NEAR(s.values().col(1).sum() / 100.0, 0.45, 1e-14);
}

TEST(SolverChoice, ParseAndPrint) {
  for (auto s : {SolverChoice::Alg2, SolverChoice::Fv, SolverChoice::Both}) EXPECT_EQ(parse_solver(to_string(s)), s);
  EXPECT_THROW(parse_solver("fast"), ConfigError);
}

}  // namespace
}  // namespace pflow
