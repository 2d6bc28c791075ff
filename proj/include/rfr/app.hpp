#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rfr/config.hpp"
#include "rfr/theorem_checks.hpp"

namespace rfr {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Dataset, class ordering and seeds of one run, all derived from the config and the run seed.
struct RunInputs {
  LabeledDataset data;
  SessionPlan plan;
  NetworkSpec spec;
  TrainSchedule base_schedule;
  TrainSchedule novel_schedule;
  DiagnosticsOptions diag;
};

RunInputs prepare_run(const ExperimentConfig& cfg, std::uint64_t seed);
ExperimentResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// Writes seed<k>/session<j>.json, metrics.csv and network.json under `run_dir`.
void write_seed_outputs(const std::string& run_dir, std::uint64_t seed, const ExperimentResult& result,
                        bool plotdata);

struct SeedSummary {
  std::uint64_t seed = 0;
  double aic = 0;
  double base_erank_pool = 0;
  double final_forgetting = 0;
  double final_weight_dist_base = 0;
  double mean_novel_acc = 0;
};

struct TrainSummary {
  std::string run_name;
  std::vector<SeedSummary> seeds;
  double aic_mean = 0;
  double aic_std = 0;
};

SeedSummary summarize_seed(std::uint64_t seed, const ExperimentResult& result);
TrainSummary summarize(const std::string& run_name, std::vector<SeedSummary> seeds);
std::string summary_json(const TrainSummary& summary);

/// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& values);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads and rethrows the first failure.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

int cmd_rank(const std::string& csv_path, double rho, std::ostream& out, std::ostream& err);
int cmd_train(const ExperimentConfig& cfg, int jobs, std::ostream& out, std::ostream& err);
int cmd_sweep(const ExperimentConfig& cfg, const std::string& parameter, const std::vector<double>& values,
              int jobs, std::ostream& out, std::ostream& err);
int cmd_verify(const std::vector<int>& dims, int trials, const std::vector<std::uint64_t>& seeds,
               const CheckOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace rfr
