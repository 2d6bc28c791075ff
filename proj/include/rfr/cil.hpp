#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rfr/data.hpp"
#include "rfr/metrics.hpp"
#include "rfr/network.hpp"

namespace rfr {

enum class Strategy { finetune, frozen, distill, replay, distill_replay };
enum class RegScope { base_only, base_and_novel };

std::string to_string(Strategy s);
std::string to_string(RegScope s);
Strategy strategy_from_string(const std::string& s);
RegScope reg_scope_from_string(const std::string& s);

struct TrainSchedule {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int lr_decay_every = 0;  // epochs between step decays; 0 disables
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 0;

  double learning_rate_at(int epoch) const;
};

/// How a run proceeds from the base task through the novel tasks.
struct SessionPlan {
  int base_classes = 0;
  int split_size = 0;
  std::vector<int> class_ordering;  // head row j serves class_ordering[j]
  Strategy strategy = Strategy::finetune;
  Regularizer regularizer = Regularizer::rfr;
  double alpha = 0.0;
  RegScope reg_scope = RegScope::base_only;
  int exemplars_per_class = 0;
  double distill_temperature = 2.0;
  double distill_weight = 1.0;
  HeadInit head_init = HeadInit::he_uniform;

  /// Throws ConfigError on inconsistent settings.
  void validate(int total_classes, int feature_dim, int batch_size) const;
  int novel_session_count(int total_classes) const;
};

struct SessionState {
  int session_index = 0;
  Network network;
  std::vector<int> seen_classes;           // original class ids, in head-row order
  std::map<int, Matrix> exemplar_store;    // class id -> stored input rows
  std::optional<Network> snapshot_base;
  std::optional<Network> snapshot_prev;
};

/// Minibatch SGD on (x, y) where y are head-row indices. Extra behaviour is
/// switched on by the options; an empty option set is plain cross-entropy.
struct TrainOptions {
  double alpha = 0.0;
  Regularizer regularizer = Regularizer::none;
  bool freeze_extractor = false;
  int frozen_head_rows = 0;
  const Network* teacher = nullptr;  // distillation source, if any
  double distill_weight = 0.0;
  double distill_temperature = 2.0;
  const Matrix* replay_inputs = nullptr;
  const std::vector<int>* replay_labels = nullptr;
};

void train_network(Network& net, const Matrix& x, const std::vector<int>& y, const TrainSchedule& schedule,
                   const TrainOptions& options);

/// Trains a fresh network on the base classes with CE + alpha * regularizer,
/// records both snapshots and fills the exemplar store.
SessionState run_base_session(const SessionPlan& plan, const LabeledDataset& data, const NetworkSpec& spec,
                              const TrainSchedule& schedule);

/// Expands the head for `new_classes` and trains according to the plan's strategy.
SessionState run_novel_session(const SessionState& state, const SessionPlan& plan, const LabeledDataset& data,
                               const std::vector<int>& new_classes, const TrainSchedule& schedule);

struct EvalResult {
  std::map<int, double> per_class;  // class id -> accuracy
  double overall = 0;
  std::size_t samples = 0;
};

/// Argmax over every head row (ties go to the lowest row). Throws
/// UnseenClassInEval if a label is not among `seen_classes`.
EvalResult evaluate_overall(const Network& net, const std::vector<int>& seen_classes, const Matrix& inputs,
                            const std::vector<int>& labels);
EvalResult evaluate_overall(const SessionState& state, const LabeledDataset& data, const std::vector<int>& classes);

/// Greedy herding: repeatedly take the unused row that brings the running
/// exemplar mean closest to the class mean. Ties go to the lowest index.
std::vector<Eigen::Index> select_exemplars(const Matrix& class_features, int budget);

struct DiagnosticsOptions {
  int rank_batch_size = 64;
  std::uint64_t seed = 0;
  bool record_wall_time = true;
};

struct SessionRecord {
  int session_index = 0;
  std::vector<int> new_classes;
  std::map<int, double> per_class_acc;
  MetricsRow metrics;
  double wall_time_s = 0;
};

struct ExperimentResult {
  std::vector<SessionRecord> sessions;
  MetricsLog log;
  Network final_network;
  double aic = 0;
  std::vector<int> dropped_classes;  // ordering tail too short to form a task
};

/// Runs the base session and every novel session of `split`, logging diagnostics after each.
ExperimentResult run_incremental(const LabeledDataset& data, const SessionPlan& plan, const NetworkSpec& spec,
                                 const TrainSchedule& base_schedule, const TrainSchedule& novel_schedule,
                                 const DiagnosticsOptions& diag);

std::string session_record_json(const SessionRecord& record);

}  // namespace rfr
