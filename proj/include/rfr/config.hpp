#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfr/cil.hpp"

namespace rfr {

struct DatasetConfig {
  std::string kind = "blobs";  // "blobs" or "cifar100"
  int num_classes = 32;
  int dim = 32;
  int per_class = 100;
  double spread = 0.6;
  std::uint64_t seed = 0;
  std::string cifar_train;
  std::string cifar_test;
  bool standardize = false;
};

struct SplitConfig {
  int base_classes = 16;
  int split_size = 4;
  std::uint64_t ordering_seed = 0;
  std::string ordering_file;  // overrides ordering_seed when set
};

struct NetworkConfig {
  std::vector<int> hidden{64};
  int feature_dim = 16;
  Activation feature_activation = Activation::identity;
  HeadInit head_init = HeadInit::he_uniform;
};

struct ExperimentConfig {
  std::string run_name = "run";
  DatasetConfig dataset;
  SplitConfig split;
  NetworkConfig network;
  TrainSchedule schedule;
  TrainSchedule novel_schedule;
  Strategy strategy = Strategy::finetune;
  Regularizer regularizer = Regularizer::rfr;
  double alpha = 0.1;
  RegScope reg_scope = RegScope::base_only;
  double rho = 0.9;
  int exemplars_per_class = 0;
  double distill_temperature = 2.0;
  double distill_weight = 1.0;
  int rank_batch_size = 64;
  std::string outdir = "runs";
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool plotdata = false;
  bool record_wall_time = true;

  bool operator==(const ExperimentConfig&) const;
};

ExperimentConfig default_config();

/// Every problem with the config, each naming its field; empty when valid.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

/// Parses and validates. Unknown keys, wrong types and invalid values are
/// collected and thrown together as one ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace rfr
