#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ecpsim/errors.hpp"
#include "ecpsim/scenario.hpp"

namespace {

ecpsim::ScenarioConfig load(const std::string& name_or_path) {
  try {
    return ecpsim::builtin(name_or_path);
  } catch (const ecpsim::ConfigError&) {
  }
  std::ifstream in(name_or_path);
  if (!in) {
    throw ecpsim::ConfigError("no builtin or config file named '" + name_or_path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ecpsim::parse_config(ss.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rigid-body contact simulator with equivalent-contact-point resolution"};
  app.require_subcommand(1);

  std::string run_target, run_out;
  int run_steps = -1;
  double run_tol = -1.0;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write a CSV trajectory");
  run_cmd->add_option("scenario", run_target, "builtin name or config.json path")->required();
  run_cmd->add_option("--out", run_out, "trajectory CSV path");
  run_cmd->add_option("--steps", run_steps, "override the number of steps");
  run_cmd->add_option("--tol", run_tol, "override the solver tolerance");

  std::string verify_target;
  auto* verify_cmd = app.add_subcommand("verify", "Run a scenario and its checks");
  verify_cmd->add_option("scenario", verify_target, "builtin name or config.json path")
      ->required();

  std::string dump_target;
  auto* dump_cmd = app.add_subcommand("dump-config", "Print a builtin scenario's JSON");
  dump_cmd->add_option("scenario", dump_target, "builtin name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      ecpsim::ScenarioConfig cfg = load(run_target);
      if (run_steps > 0) cfg.duration = run_steps * cfg.params.h;
      if (run_tol > 0) cfg.solver.tolerance = run_tol;
      const ecpsim::RunResult result = ecpsim::run_scenario(cfg, run_out);
      std::cout << "completed " << result.steps_completed << " steps\n";
      return result.exit_code;
    }
    if (verify_cmd->parsed()) {
      return ecpsim::verify(verify_target);
    }
    if (dump_cmd->parsed()) {
      std::cout << ecpsim::builtin_json(dump_target) << "\n";
      return 0;
    }
  } catch (const ecpsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
