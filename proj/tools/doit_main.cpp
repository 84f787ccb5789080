#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "doit/error.hpp"
#include "doit/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Doob h-transform steering for diffusion samplers"};
  app.require_subcommand(1);

  std::string config_path;
  doit::RunOverrides overrides;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::string out;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config file")->required();
    sub->add_option("--seed", seed, "Master seed (overrides the config and DOIT_SEED)");
    sub->add_option("--jobs", jobs, "Worker threads");
    sub->add_option("--out", out, "Output directory");
  };

  std::vector<CLI::App*> subs;
  subs.push_back(app.add_subcommand("sample", "Vanilla backward sampling"));
  subs.push_back(app.add_subcommand("steer", "Steered sampling with the lookahead surrogate"));
  subs.push_back(app.add_subcommand("prototype", "Steered sampling with full rollouts"));
  subs.push_back(app.add_subcommand("oracle", "Rejection-sampled target and exact h tables"));
  subs.push_back(app.add_subcommand("eval", "Compare two sample files"));
  CLI::App* sweep = app.add_subcommand("sweep", "Grid of (tau, gamma) steered runs");
  subs.push_back(sweep);
  for (CLI::App* sub : subs) add_common(sub);
  sweep->add_option("--tau", overrides.tau, "Temperatures")->delimiter(',');
  sweep->add_option("--gamma", overrides.gamma, "Correction strengths")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const auto command = doit::parse_command(chosen->get_name());
  if (chosen->count("--seed") > 0) overrides.seed = seed;
  if (chosen->count("--jobs") > 0) overrides.jobs = jobs;
  if (chosen->count("--out") > 0) overrides.out = out;

  try {
    doit::ExperimentConfig cfg = doit::load_config(config_path);
    doit::apply_overrides(cfg, overrides, std::getenv("DOIT_SEED"));
    doit::run_experiment(*command, cfg, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "doit " << chosen->get_name() << ": " << e.what() << '\n';
    return doit::exit_code_for(e);
  }
  return 0;
}
