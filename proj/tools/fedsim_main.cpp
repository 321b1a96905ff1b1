#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "fedsim/experiment.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)")
      ->required();
  opts.seed_opt = cmd->add_option("--seed", opts.seed, "override the config seed");
  opts.out_opt =
      cmd->add_option("--out", opts.out, "override the output directory");
}

fedsim::ExperimentConfig load_with_overrides(const CommonOpts& opts) {
  fedsim::ExperimentConfig cfg = fedsim::load_experiment_config(opts.config_path);
  if (opts.seed_opt->count() > 0) cfg.seed = opts.seed;
  if (opts.out_opt->count() > 0) cfg.output_dir = opts.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsim: federated-learning simulation harness"};
  app.require_subcommand(1);

  CommonOpts run_opts, grid_opts, kfold_opts;
  CLI::App* run =
      app.add_subcommand("run", "train and evaluate the configured methods");
  add_common(run, run_opts);
  CLI::App* grid =
      app.add_subcommand("grid", "cdr x fdr grid search for feddropoutavg");
  add_common(grid, grid_opts);
  CLI::App* kfold =
      app.add_subcommand("kfold", "k-fold center rotation over all methods");
  add_common(kfold, kfold_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return fedsim::cmd_run(load_with_overrides(run_opts));
    if (grid->parsed()) return fedsim::cmd_grid(load_with_overrides(grid_opts));
    if (kfold->parsed()) return fedsim::cmd_kfold(load_with_overrides(kfold_opts));
  } catch (const fedsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
