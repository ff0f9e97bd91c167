#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pflow/config.hpp"
#include "pflow/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Two- and multi-phase porous media flow: ALG2-JKO and finite-volume solvers"};
  std::string config_path;
  std::string out_dir;
  std::string solver;
  std::vector<double> snapshots;
  bool list_presets = false;
  app.add_option("config", config_path, "Scenario file (INI)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--solver", solver, "alg2, fv or both")->check(CLI::IsMember({"alg2", "fv", "both"}));
  app.add_option("--snapshots", snapshots, "Snapshot times, comma separated")->delimiter(',');
  app.add_flag("--list-presets", list_presets, "Print the preset names and exit");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? pflow::kExitOk : pflow::kExitValidation;
  }

  if (list_presets) {
    for (const auto& name : pflow::preset_names()) std::cout << name << '\n';
    return pflow::kExitOk;
  }
  if (config_path.empty()) {
    std::cerr << "error: a scenario file is required\n" << app.help();
    return pflow::kExitValidation;
  }

  pflow::RunConfig config;
  try {
    config = pflow::parse_config_file(config_path);
    pflow::apply_env_overrides(config);
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (!solver.empty()) config.solver = pflow::parse_solver(solver);
    if (app.count("--snapshots")) config.snapshots = snapshots;
    pflow::validate_config(config);
  } catch (const pflow::ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return pflow::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return pflow::kExitValidation;
  }

  try {
    const auto result = pflow::run_simulation(config, std::cout);
    if (result.exit_code != pflow::kExitOk) std::cerr << "solver failed: " << result.message << '\n';
    std::cout << "outputs in " << config.output_dir << '\n';
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pflow::kExitFailure;
  }
}
