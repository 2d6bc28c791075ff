#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rfr/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Effective-rank toolkit for class-incremental learning experiments"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string outdir;
  int jobs = 1;
  bool print_default = false;
  app.add_option("--seed", seed, "Run seed; replaces the config's seed list");
  app.add_option("--outdir", outdir, "Output directory; replaces the config's outdir");
  app.add_option("--jobs", jobs, "Worker threads for seeds, sweep cells and check trials")->check(CLI::PositiveNumber);
  app.add_flag("--print-default-config", print_default, "Print the default experiment config and exit");

  auto* rank = app.add_subcommand("rank", "Rank metrics of a CSV matrix");
  std::string csv_path;
  double rho = 0.9;
  rank->add_option("matrix", csv_path, "CSV file: 'rows,cols' header, then one row per line")->required();
  rank->add_option("--rho", rho, "Energy fraction for the thresholded rank");

  auto* train = app.add_subcommand("train", "Run an incremental experiment from a config");
  std::string config_path;
  train->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* sweep = app.add_subcommand("sweep", "AIC over a range of alpha or base_classes values");
  std::string sweep_config;
  std::string parameter = "alpha";
  std::vector<double> values;
  sweep->add_option("config", sweep_config, "Experiment config (JSON)")->required();
  sweep->add_option("--parameter", parameter, "alpha or base_classes")->check(CLI::IsMember({"alpha", "base_classes"}));
  sweep->add_option("--values", values, "Comma-separated values")->delimiter(',')->required();

  auto* verify = app.add_subcommand("verify", "Numerical checks of the entropy and rank results");
  std::vector<int> dims{2, 8, 64};
  int trials = 1000;
  double tolerance_scale = 1.0;
  verify->add_option("--dims", dims, "Comma-separated dimensions")->delimiter(',');
  verify->add_option("--trials", trials, "Trials per check");
  verify->add_option("--tolerance-scale", tolerance_scale, "Multiplier on every check tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rfr::kExitOk : rfr::kExitUsage;
  }

  if (print_default) {
    std::cout << rfr::config_to_json(rfr::default_config());
    return rfr::kExitOk;
  }

  auto load = [&](const std::string& path) {
    rfr::ExperimentConfig cfg = rfr::load_config(path);
    if (seed) cfg.seeds = {*seed};
    if (!outdir.empty()) cfg.outdir = outdir;
    return cfg;
  };

  try {
    if (rank->parsed()) return rfr::cmd_rank(csv_path, rho, std::cout, std::cerr);
    if (train->parsed()) return rfr::cmd_train(load(config_path), jobs, std::cout, std::cerr);
    if (sweep->parsed()) return rfr::cmd_sweep(load(sweep_config), parameter, values, jobs, std::cout, std::cerr);
    if (verify->parsed()) {
      std::vector<std::uint64_t> seeds{0, 1, 2};
      if (seed) seeds = {*seed};
      rfr::CheckOptions opts;
      opts.tolerance_scale = tolerance_scale;
      opts.jobs = jobs;
      return rfr::cmd_verify(dims, trials, seeds, opts, std::cout, std::cerr);
    }
  } catch (const rfr::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rfr::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rfr::kExitFailure;
  }

  std::cerr << app.help();
  return rfr::kExitUsage;
}
