#include "rfr/cil.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

namespace rfr {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::finetune: return "finetune";
    case Strategy::frozen: return "frozen";
    case Strategy::distill: return "distill";
    case Strategy::replay: return "replay";
    case Strategy::distill_replay: return "distill+replay";
  }
  return "finetune";
}

std::string to_string(RegScope s) { return s == RegScope::base_only ? "base_only" : "base_and_novel"; }

Strategy strategy_from_string(const std::string& s) {
  if (s == "finetune") return Strategy::finetune;
  if (s == "frozen") return Strategy::frozen;
  if (s == "distill") return Strategy::distill;
  if (s == "replay") return Strategy::replay;
  if (s == "distill+replay" || s == "distill_replay") return Strategy::distill_replay;
  throw ConfigError("unknown strategy '" + s + "'");
}

RegScope reg_scope_from_string(const std::string& s) {
  if (s == "base_only") return RegScope::base_only;
  if (s == "base_and_novel") return RegScope::base_and_novel;
  throw ConfigError("unknown reg_scope '" + s + "'");
}

double TrainSchedule::learning_rate_at(int epoch) const {
  if (lr_decay_every <= 0) return learning_rate;
  return learning_rate * std::pow(lr_decay_factor, epoch / lr_decay_every);
}

void SessionPlan::validate(int total_classes, int feature_dim, int batch_size) const {
  if (base_classes < 1 || base_classes > total_classes)
    throw ConfigError("base_classes must lie in [1, " + std::to_string(total_classes) + "]");
  if (base_classes < total_classes && (split_size < 1 || base_classes + split_size > total_classes))
    throw ConfigError("split_size " + std::to_string(split_size) + " does not fit the remaining classes");
  if (static_cast<int>(class_ordering.size()) != total_classes)
    throw ConfigError("class_ordering must list all " + std::to_string(total_classes) + " classes");
  if (!(alpha >= 0)) throw ConfigError("alpha must be >= 0");
  if (alpha > 0 && regularizer == Regularizer::rfr && batch_size < 2 * feature_dim)
    throw ConfigError("batch_size " + std::to_string(batch_size) + " must be >= 2 * feature_dim (" +
                      std::to_string(2 * feature_dim) + ") when the RFR loss is active");
  if (exemplars_per_class < 0) throw ConfigError("exemplars_per_class must be >= 0");
  if (!(distill_temperature > 0)) throw ConfigError("distill_temperature must be > 0");
  if (!(distill_weight >= 0)) throw ConfigError("distill_weight must be >= 0");
}

int SessionPlan::novel_session_count(int total_classes) const {
  if (split_size < 1 || base_classes >= total_classes) return 0;
  return (total_classes - base_classes) / split_size;
}

void train_network(Network& net, const Matrix& x, const std::vector<int>& y, const TrainSchedule& schedule,
                   const TrainOptions& options) {
  if (x.rows() == 0) throw EmptyInput("no training rows");
  if (schedule.batch_size < 1) throw ConfigError("batch_size must be positive");
  const bool replay = options.replay_inputs != nullptr && options.replay_inputs->rows() > 0;
  if (replay && (options.replay_labels == nullptr ||
                 options.replay_labels->size() != static_cast<std::size_t>(options.replay_inputs->rows())))
    throw DimensionError("replay labels do not match replay inputs");
  const bool distill = options.teacher != nullptr && options.distill_weight != 0.0;
  const double alpha = options.freeze_extractor ? 0.0 : options.alpha;
  const bool rfr_active = alpha > 0 && options.regularizer == Regularizer::rfr;

  const Rng root(schedule.seed);
  Rng data_rng = root.fork(1);
  Rng replay_rng = root.fork(2);

  const int replay_part = replay ? schedule.batch_size / 2 : 0;
  const int new_part = std::max(1, schedule.batch_size - replay_part);

  std::vector<Eigen::Index> replay_order;
  std::size_t replay_cursor = 0;
  if (replay) {
    replay_order.resize(static_cast<std::size_t>(options.replay_inputs->rows()));
    std::iota(replay_order.begin(), replay_order.end(), Eigen::Index(0));
    shuffle(std::span<Eigen::Index>(replay_order), replay_rng);
  }

  Gradients velocity = Gradients::zeros_like(net);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    const double lr = schedule.learning_rate_at(epoch);
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    shuffle(std::span<Eigen::Index>(order), data_rng);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(new_part)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(new_part));
      const auto rows = static_cast<Eigen::Index>(stop - start) + replay_part;
      if (rfr_active && rows <= net.feature_dim()) continue;

      Batch batch{Matrix(rows, x.cols()), {}};
      batch.labels.reserve(static_cast<std::size_t>(rows));
      Eigen::Index r = 0;
      for (std::size_t k = start; k < stop; ++k, ++r) {
        batch.inputs.row(r) = x.row(order[k]);
        batch.labels.push_back(y[static_cast<std::size_t>(order[k])]);
      }
      for (int k = 0; k < replay_part; ++k, ++r) {
        if (replay_cursor == replay_order.size()) {
          shuffle(std::span<Eigen::Index>(replay_order), replay_rng);
          replay_cursor = 0;
        }
        const Eigen::Index src = replay_order[replay_cursor++];
        batch.inputs.row(r) = options.replay_inputs->row(src);
        batch.labels.push_back((*options.replay_labels)[static_cast<std::size_t>(src)]);
      }

      std::optional<DistillTarget> target;
      if (distill)
        target = DistillTarget{forward(*options.teacher, batch.inputs).logits, options.distill_weight,
                               options.distill_temperature};
      LossResult result = loss_and_backward(net, batch, alpha, alpha > 0 ? options.regularizer : Regularizer::none,
                                            target ? &*target : nullptr);
      if (options.freeze_extractor) result.grads.zero_extractor();
      if (options.frozen_head_rows > 0) result.grads.zero_head_rows(options.frozen_head_rows);
      sgd_step(net, result.grads, lr, schedule.momentum, velocity);
    }
  }
}

namespace {

std::vector<int> head_rows_for(const std::vector<int>& labels, const std::vector<int>& seen_classes) {
  std::map<int, int> row_of;
  for (std::size_t j = 0; j < seen_classes.size(); ++j) row_of[seen_classes[j]] = static_cast<int>(j);
  std::vector<int> out;
  out.reserve(labels.size());
  for (int label : labels) {
    const auto it = row_of.find(label);
    if (it == row_of.end()) throw UnseenClassInEval("class " + std::to_string(label) + " has no head row");
    out.push_back(it->second);
  }
  return out;
}

void store_exemplars(SessionState& state, const LabeledDataset& data, const std::vector<int>& classes, int budget) {
  if (budget <= 0) return;
  for (int c : classes) {
    const Matrix x = gather_rows(data.inputs, data.rows(Split::train, {c}));
    const auto picked = select_exemplars(extract_features(state.network, x), budget);
    state.exemplar_store[c] = gather_rows(x, picked);
  }
}

}  // namespace

SessionState run_base_session(const SessionPlan& plan, const LabeledDataset& data, const NetworkSpec& spec,
                              const TrainSchedule& schedule) {
  plan.validate(data.num_classes, spec.feature_dim, schedule.batch_size);
  const std::vector<int> base(plan.class_ordering.begin(), plan.class_ordering.begin() + plan.base_classes);
  const auto rows = data.rows(Split::train, base);
  if (rows.empty()) throw EmptyInput("no training data for the base classes");

  NetworkSpec net_spec = spec;
  net_spec.head_init = plan.head_init;
  SessionState state;
  state.network = make_network(net_spec, plan.base_classes, schedule.seed);
  state.seen_classes = base;

  TrainOptions options;
  options.alpha = plan.alpha;
  options.regularizer = plan.regularizer;
  train_network(state.network, gather_rows(data.inputs, rows), head_rows_for(gather_labels(data, rows), base),
                schedule, options);

  state.snapshot_base = state.network;
  state.snapshot_prev = state.network;
  store_exemplars(state, data, base, plan.exemplars_per_class);
  return state;
}

SessionState run_novel_session(const SessionState& state, const SessionPlan& plan, const LabeledDataset& data,
                               const std::vector<int>& new_classes, const TrainSchedule& schedule) {
  if (!state.snapshot_prev || !state.snapshot_base)
    throw MissingSnapshot("novel session requires base and previous-session snapshots");
  if (new_classes.empty()) throw EmptyInput("novel session without new classes");
  const std::set<int> seen(state.seen_classes.begin(), state.seen_classes.end());
  for (int c : new_classes) {
    if (seen.count(c)) throw ClassOverlap("class " + std::to_string(c) + " was already learned");
    if (c < 0 || c >= data.num_classes) throw LabelOutOfRange("class " + std::to_string(c) + " not in dataset");
  }

  SessionState next = state;
  next.session_index = state.session_index + 1;
  next.seen_classes.insert(next.seen_classes.end(), new_classes.begin(), new_classes.end());
  const int old_rows = static_cast<int>(state.seen_classes.size());
  Rng head_rng = Rng(schedule.seed).fork(3);
  next.network = expand_head(state.network, static_cast<int>(next.seen_classes.size()), plan.head_init, head_rng);

  TrainOptions options;
  const bool distill = plan.strategy == Strategy::distill || plan.strategy == Strategy::distill_replay;
  const bool replay = plan.strategy == Strategy::replay || plan.strategy == Strategy::distill_replay;
  if (plan.strategy == Strategy::frozen) {
    options.freeze_extractor = true;
    options.frozen_head_rows = old_rows;
  }
  if (distill) {
    options.teacher = &*state.snapshot_prev;
    options.distill_weight = plan.distill_weight;
    options.distill_temperature = plan.distill_temperature;
  }
  Matrix replay_x;
  std::vector<int> replay_y;
  if (replay) {
    Eigen::Index total = 0;
    for (const auto& [c, rows] : state.exemplar_store) total += rows.rows();
    replay_x.resize(total, data.input_dim());
    Eigen::Index r = 0;
    for (int c : state.seen_classes) {
      const auto it = state.exemplar_store.find(c);
      if (it == state.exemplar_store.end()) continue;
      replay_x.middleRows(r, it->second.rows()) = it->second;
      r += it->second.rows();
      replay_y.insert(replay_y.end(), static_cast<std::size_t>(it->second.rows()), c);
    }
    replay_y = head_rows_for(replay_y, next.seen_classes);
    options.replay_inputs = &replay_x;
    options.replay_labels = &replay_y;
  }
  if (plan.reg_scope == RegScope::base_and_novel && plan.alpha > 0) {
    options.alpha = plan.alpha;
    options.regularizer = plan.regularizer;
  }

  const auto rows = data.rows(Split::train, new_classes);
  train_network(next.network, gather_rows(data.inputs, rows),
                head_rows_for(gather_labels(data, rows), next.seen_classes), schedule, options);

  store_exemplars(next, data, new_classes, plan.exemplars_per_class);
  next.snapshot_prev = next.network;
  return next;
}

EvalResult evaluate_overall(const Network& net, const std::vector<int>& seen_classes, const Matrix& inputs,
                            const std::vector<int>& labels) {
  if (labels.empty()) throw EmptyInput("no evaluation samples");
  if (static_cast<int>(seen_classes.size()) != net.num_classes())
    throw ShapeMismatch("head rows do not match the seen classes");
  const auto rows = head_rows_for(labels, seen_classes);
  const Matrix logits = forward(net, inputs).logits;

  std::map<int, std::pair<int, int>> tally;  // class -> (correct, total)
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    const bool hit = best == rows[static_cast<std::size_t>(i)];
    auto& t = tally[labels[static_cast<std::size_t>(i)]];
    t.first += hit ? 1 : 0;
    t.second += 1;
    correct += hit ? 1 : 0;
  }
  EvalResult out;
  for (const auto& [c, t] : tally) out.per_class[c] = static_cast<double>(t.first) / t.second;
  out.samples = labels.size();
  out.overall = static_cast<double>(correct) / static_cast<double>(labels.size());
  return out;
}

EvalResult evaluate_overall(const SessionState& state, const LabeledDataset& data, const std::vector<int>& classes) {
  const auto rows = data.rows(Split::eval, classes);
  return evaluate_overall(state.network, state.seen_classes, gather_rows(data.inputs, rows), gather_labels(data, rows));
}

std::vector<Eigen::Index> select_exemplars(const Matrix& class_features, int budget) {
  std::vector<Eigen::Index> picked;
  if (budget <= 0 || class_features.rows() == 0) return picked;
  const Eigen::Index n = class_features.rows();
  const auto k = std::min<Eigen::Index>(budget, n);
  const Vector mean = class_features.colwise().mean().transpose();
  Vector running = Vector::Zero(class_features.cols());
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (Eigen::Index step = 1; step <= k; ++step) {
    Eigen::Index best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double dist =
          (mean - (running + class_features.row(i).transpose()) / static_cast<double>(step)).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    running += class_features.row(best).transpose();
    picked.push_back(best);
  }
  return picked;
}

namespace {

double accuracy_on(const SessionState& state, const LabeledDataset& data, const std::vector<int>& classes) {
  return evaluate_overall(state, data, classes).overall;
}

}  // namespace

ExperimentResult run_incremental(const LabeledDataset& data, const SessionPlan& plan, const NetworkSpec& spec,
                                 const TrainSchedule& base_schedule, const TrainSchedule& novel_schedule,
                                 const DiagnosticsOptions& diag) {
  data.validate();
  plan.validate(data.num_classes, spec.feature_dim, base_schedule.batch_size);
  if (plan.alpha > 0 && plan.reg_scope == RegScope::base_and_novel)
    plan.validate(data.num_classes, spec.feature_dim, novel_schedule.batch_size);
  const TaskSplit split = make_task_split(data.num_classes, plan.base_classes,
                                          plan.split_size > 0 ? plan.split_size : 1, plan.class_ordering);
  const Matrix probe = gather_rows(data.inputs, data.rows(Split::eval, split.base));

  ExperimentResult result;
  result.dropped_classes = split.dropped;
  auto clock_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    if (!diag.record_wall_time) return 0.0;
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - clock_start).count();
    clock_start = now;
    return s;
  };

  double base_acc0 = 0;
  auto record = [&](const SessionState& state, const Network& prev, const std::vector<int>& new_classes) {
    SessionRecord rec;
    rec.session_index = state.session_index;
    rec.new_classes = new_classes;
    const EvalResult overall = evaluate_overall(state, data, state.seen_classes);
    rec.per_class_acc = overall.per_class;
    MetricsRow& m = rec.metrics;
    m.session = state.session_index;
    m.overall_acc = overall.overall;
    m.base_acc = accuracy_on(state, data, split.base);
    if (state.session_index == 0) base_acc0 = m.base_acc;
    m.novel_acc = accuracy_on(state, data, new_classes);
    m.forgetting = base_acc0 - m.base_acc;
    m.weight_dist_base = weight_distance(state.network, *state.snapshot_base);
    m.weight_dist_prev = weight_distance(state.network, prev);
    m.cos_sim_base = representation_cosine(state.network, *state.snapshot_base, probe);
    m.cos_sim_prev = representation_cosine(state.network, prev, probe);
    m.erank_batch_mean =
        representation_erank(state.network, probe, diag.rank_batch_size, RankMode::batch_mean, diag.seed);
    m.erank_pool = representation_erank(state.network, probe, diag.rank_batch_size, RankMode::pool, diag.seed);
    rec.wall_time_s = elapsed();
    result.sessions.push_back(std::move(rec));
  };

  SessionState state = run_base_session(plan, data, spec, base_schedule);
  record(state, state.network, split.base);

  for (std::size_t t = 0; t < split.novel_tasks.size(); ++t) {
    TrainSchedule schedule = novel_schedule;
    schedule.seed = Rng(novel_schedule.seed).fork(100 + t).seed();
    const Network prev = state.network;
    state = run_novel_session(state, plan, data, split.novel_tasks[t], schedule);
    record(state, prev, split.novel_tasks[t]);
  }

  for (SessionRecord& rec : result.sessions) {
    rec.metrics.novel_acc_final = accuracy_on(state, data, rec.new_classes);
    result.log.rows.push_back(rec.metrics);
  }
  const auto overall = result.log.column(&MetricsRow::overall_acc);
  result.aic = average_incremental_accuracy(overall);
  result.final_network = state.network;
  return result;
}

std::string session_record_json(const SessionRecord& record) {
  nlohmann::ordered_json j;
  j["session"] = record.session_index;
  j["new_classes"] = record.new_classes;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [c, acc] : record.per_class_acc) per_class[std::to_string(c)] = acc;
  j["per_class_accuracy"] = std::move(per_class);
  j["overall_acc"] = record.metrics.overall_acc;
  j["novel_acc_at_session"] = record.metrics.novel_acc;
  j["novel_acc_final"] = record.metrics.novel_acc_final;
  nlohmann::ordered_json diag;
  diag["base_acc"] = record.metrics.base_acc;
  diag["forgetting"] = record.metrics.forgetting;
  diag["weight_dist_base"] = record.metrics.weight_dist_base;
  diag["weight_dist_prev"] = record.metrics.weight_dist_prev;
  diag["cos_sim_base"] = record.metrics.cos_sim_base;
  diag["cos_sim_prev"] = record.metrics.cos_sim_prev;
  diag["erank_batch_mean"] = record.metrics.erank_batch_mean;
  diag["erank_pool"] = record.metrics.erank_pool;
  j["diagnostics"] = std::move(diag);
  j["wall_time_s"] = record.wall_time_s;
  return j.dump(2);
}

}  // namespace rfr
