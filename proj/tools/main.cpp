#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using langevin::cli::GlobalOptions;

  CLI::App app{"Generalized Langevin sampling lab: samplers, rate functions, Lyapunov checks, BLR"};
  app.require_subcommand(1);

  GlobalOptions options;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 0;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"sample", "run an ensemble of Euler-Maruyama chains"},
      {"rates", "compare rate functions on a grid"},
      {"blr", "Bayesian logistic regression experiment"},
      {"lyapunov", "verify a Lyapunov drift bound on a grid"},
      {"check-stationarity", "Fokker-Planck stationarity residuals of the built-in dynamics"}};

  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", options.config_path, "JSON config file")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out-dir", out_dir,
                    "output directory (default: config out_dir, then $LANGEVIN_OUT_DIR)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return langevin::cli::kExitConfig;
  }

  CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) options.seed = seed;
  if (chosen->count("--out-dir")) options.out_dir = out_dir;
  if (chosen->count("--threads")) options.threads = threads;
  return langevin::cli::run_command(chosen->get_name(), options);
}
