// probgain: learn a behavior basis from data, design a probabilistic-gain
// controller and evaluate it in closed loop.

#include "probgain/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace probgain;

int main(int argc, char** argv) {
  CLI::App app{"data-driven probabilistic L2-gain controller design and simulation"};
  app.require_subcommand(1);

  std::string config_path, mode, out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> cohort, horizon;
  CommandOptions opts;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "dataset seed for generate, simulation seed otherwise");
    sub->add_option("--out", out, "output directory")->capture_default_str();
    sub->add_option("--mode", mode, "disturbance mean mode")
        ->check(CLI::IsMember({"general", "constant", "zero"}));
    sub->add_option("--cohort", cohort, "rollouts per campaign");
    sub->add_option("--horizon", horizon, "simulation horizon T");
  };
  auto* gen = app.add_subcommand("generate", "write an open-loop dataset");
  auto* des = app.add_subcommand("design", "learn the basis and solve the synthesis LMIs");
  auto* sim = app.add_subcommand("simulate", "run closed-loop campaigns for a design");
  auto* rep = app.add_subcommand("report", "collect simulation results into plot data");
  auto* are = app.add_subcommand("are", "print the steady-state filter covariance");
  auto* chk = app.add_subcommand("check", "re-verify a design artifact");
  for (auto* s : {gen, des, sim, are, chk}) common(s);
  for (auto* s : {des, are}) s->add_option("--dataset", opts.dataset, "dataset file");
  for (auto* s : {sim, chk, are}) {
    s->add_option("--design", opts.design, "design artifact");
    s->add_option("--basis", opts.basis, "basis file");
  }
  rep->add_option("runs", opts.inputs, "simulation output directories");
  rep->add_option("--out", out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitSchema;
  }

  try {
    opts.out = out;
    if (rep->parsed()) return cmd_report(opts, std::cout);

    RunConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
    if (!mode.empty()) cfg.mode = parse_mode(mode);
    if (cohort) {
      if (*cohort < 1) throw Error(ErrorKind::Usage, "--cohort must be positive");
      cfg.sim.cohort = *cohort;
    }
    if (horizon) {
      if (*horizon < 1) throw Error(ErrorKind::Usage, "--horizon must be positive");
      cfg.sim.horizon = *horizon;
    }
    if (seed) (gen->parsed() ? cfg.dataset_seed : cfg.simulation_seed) = *seed;
    cfg.validate();

    if (gen->parsed()) return cmd_generate(cfg, opts, std::cout);
    if (des->parsed()) return cmd_design(cfg, opts, std::cout);
    if (sim->parsed()) return cmd_simulate(cfg, opts, std::cout);
    if (are->parsed()) return cmd_are(cfg, opts, std::cout);
    if (chk->parsed()) return cmd_check(cfg, opts, std::cout);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitSchema;
}
