#include "rfr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace rfr {
namespace {

using Json = nlohmann::ordered_json;

/// Reads fields out of one JSON object, recording problems instead of throwing
/// so a config with several mistakes reports all of them.
class Reader {
 public:
  Reader(const Json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(where("") + "expected an object");
  }

  ~Reader() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) errors_.push_back(where(key) + "unknown key");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(where(key) + "wrong type " + std::string(obj_.at(key).type_name()));
    }
  }

  template <typename E>
  void get_enum(const std::string& key, E& out, E (*parse)(const std::string&)) {
    std::string text;
    bool present = obj_.is_object() && obj_.contains(key);
    get(key, text);
    if (!present) return;
    try {
      out = parse(text);
    } catch (const ConfigError& e) {
      errors_.push_back(where(key) + e.what());
    }
  }

  const Json* child(const std::string& key) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  std::string where(const std::string& key) const {
    const std::string full = key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key);
    return (full.empty() ? "config" : full) + ": ";
  }

 private:
  const Json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

Json schedule_json(const TrainSchedule& s) {
  Json j;
  j["epochs"] = s.epochs;
  j["batch_size"] = s.batch_size;
  j["learning_rate"] = s.learning_rate;
  j["momentum"] = s.momentum;
  j["lr_decay_every"] = s.lr_decay_every;
  j["lr_decay_factor"] = s.lr_decay_factor;
  return j;
}

void read_schedule(const Json* j, const std::string& path, TrainSchedule& s, std::vector<std::string>& errors) {
  if (j == nullptr) return;
  Reader r(*j, path, errors);
  r.get("epochs", s.epochs);
  r.get("batch_size", s.batch_size);
  r.get("learning_rate", s.learning_rate);
  r.get("momentum", s.momentum);
  r.get("lr_decay_every", s.lr_decay_every);
  r.get("lr_decay_factor", s.lr_decay_factor);
}

void check_schedule(const TrainSchedule& s, const std::string& path, std::vector<std::string>& errors) {
  if (s.epochs < 1) errors.push_back(path + ".epochs: must be >= 1");
  if (s.batch_size < 1) errors.push_back(path + ".batch_size: must be >= 1");
  if (!(s.learning_rate > 0)) errors.push_back(path + ".learning_rate: must be > 0");
  if (!(s.momentum >= 0 && s.momentum < 1)) errors.push_back(path + ".momentum: must lie in [0, 1)");
  if (s.lr_decay_every < 0) errors.push_back(path + ".lr_decay_every: must be >= 0");
  if (!(s.lr_decay_factor > 0 && s.lr_decay_factor <= 1))
    errors.push_back(path + ".lr_decay_factor: must lie in (0, 1]");
}

template <typename T>
std::string show(T v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.schedule.epochs = 30;
  cfg.novel_schedule.epochs = 10;
  cfg.novel_schedule.learning_rate = 0.01;
  return cfg;
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  return config_to_json(*this) == config_to_json(other);
}

std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  const auto& ds = cfg.dataset;
  if (cfg.run_name.empty() || cfg.run_name.find('/') != std::string::npos || cfg.run_name == "." ||
      cfg.run_name == "..")
    errors.push_back("run_name: must be a plain non-empty directory name");
  if (ds.kind == "blobs") {
    if (ds.num_classes < 2) errors.push_back("dataset.num_classes: must be >= 2, got " + show(ds.num_classes));
    if (ds.dim < 1) errors.push_back("dataset.dim: must be >= 1, got " + show(ds.dim));
    if (ds.per_class < 2) errors.push_back("dataset.per_class: must be >= 2, got " + show(ds.per_class));
    if (!(ds.spread > 0)) errors.push_back("dataset.spread: must be > 0, got " + show(ds.spread));
  } else if (ds.kind == "cifar100") {
    if (ds.cifar_train.empty()) errors.push_back("dataset.cifar_train: required for kind cifar100");
    if (ds.cifar_test.empty()) errors.push_back("dataset.cifar_test: required for kind cifar100");
  } else {
    errors.push_back("dataset.kind: must be \"blobs\" or \"cifar100\", got \"" + ds.kind + "\"");
  }
  const int classes = ds.kind == "cifar100" ? kCifarFineClasses : ds.num_classes;

  const auto& sp = cfg.split;
  if (sp.base_classes < 1 || sp.base_classes > classes)
    errors.push_back("split.base_classes: must lie in [1, " + show(classes) + "], got " + show(sp.base_classes));
  if (sp.split_size < 1) errors.push_back("split.split_size: must be >= 1, got " + show(sp.split_size));

  if (cfg.network.feature_dim < 1)
    errors.push_back("network.feature_dim: must be >= 1, got " + show(cfg.network.feature_dim));
  for (std::size_t i = 0; i < cfg.network.hidden.size(); ++i)
    if (cfg.network.hidden[i] < 1) errors.push_back("network.hidden[" + show(i) + "]: must be >= 1");

  check_schedule(cfg.schedule, "schedule", errors);
  check_schedule(cfg.novel_schedule, "novel_schedule", errors);

  if (!(cfg.alpha >= 0)) errors.push_back("alpha: must be >= 0, got " + show(cfg.alpha));
  if (!(cfg.rho > 0 && cfg.rho <= 1)) errors.push_back("rho: must lie in (0, 1], got " + show(cfg.rho));
  const int d = cfg.network.feature_dim;
  if (cfg.alpha > 0 && cfg.regularizer == Regularizer::rfr) {
    if (cfg.schedule.batch_size < 2 * d)
      errors.push_back("schedule.batch_size: must be >= 2 * feature_dim = " + show(2 * d) +
                       " when alpha > 0, got " + show(cfg.schedule.batch_size));
    if (cfg.reg_scope == RegScope::base_and_novel && cfg.novel_schedule.batch_size < 2 * d)
      errors.push_back("novel_schedule.batch_size: must be >= 2 * feature_dim = " + show(2 * d) +
                       " when the regularizer also runs in novel sessions, got " +
                       show(cfg.novel_schedule.batch_size));
  }
  if (cfg.rank_batch_size <= d)
    errors.push_back("rank_batch_size: must exceed feature_dim = " + show(d) + ", got " + show(cfg.rank_batch_size));
  if (cfg.exemplars_per_class < 0)
    errors.push_back("exemplars_per_class: must be >= 0, got " + show(cfg.exemplars_per_class));
  if (!(cfg.distill_temperature > 0))
    errors.push_back("distill_temperature: must be > 0, got " + show(cfg.distill_temperature));
  if (!(cfg.distill_weight >= 0)) errors.push_back("distill_weight: must be >= 0, got " + show(cfg.distill_weight));
  if (cfg.outdir.empty()) errors.push_back("outdir: must not be empty");
  if (cfg.seeds.empty()) errors.push_back("seeds: must list at least one seed");
  if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size())
    errors.push_back("seeds: must not repeat");
  return errors;
}

ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig cfg = default_config();
  std::vector<std::string> errors;
  {
    Reader r(root, "", errors);
    r.get("run_name", cfg.run_name);
    if (const Json* j = r.child("dataset")) {
      Reader d(*j, "dataset", errors);
      d.get("kind", cfg.dataset.kind);
      d.get("num_classes", cfg.dataset.num_classes);
      d.get("dim", cfg.dataset.dim);
      d.get("per_class", cfg.dataset.per_class);
      d.get("spread", cfg.dataset.spread);
      d.get("seed", cfg.dataset.seed);
      d.get("cifar_train", cfg.dataset.cifar_train);
      d.get("cifar_test", cfg.dataset.cifar_test);
      d.get("standardize", cfg.dataset.standardize);
    }
    if (const Json* j = r.child("split")) {
      Reader s(*j, "split", errors);
      s.get("base_classes", cfg.split.base_classes);
      s.get("split_size", cfg.split.split_size);
      s.get("ordering_seed", cfg.split.ordering_seed);
      s.get("ordering_file", cfg.split.ordering_file);
    }
    if (const Json* j = r.child("network")) {
      Reader n(*j, "network", errors);
      n.get("hidden", cfg.network.hidden);
      n.get("feature_dim", cfg.network.feature_dim);
      n.get_enum("feature_activation", cfg.network.feature_activation, &activation_from_string);
      n.get_enum("head_init", cfg.network.head_init, &head_init_from_string);
    }
    read_schedule(r.child("schedule"), "schedule", cfg.schedule, errors);
    read_schedule(r.child("novel_schedule"), "novel_schedule", cfg.novel_schedule, errors);
    r.get_enum("strategy", cfg.strategy, &strategy_from_string);
    r.get_enum("regularizer", cfg.regularizer, &regularizer_from_string);
    r.get("alpha", cfg.alpha);
    r.get_enum("reg_scope", cfg.reg_scope, &reg_scope_from_string);
    r.get("rho", cfg.rho);
    r.get("exemplars_per_class", cfg.exemplars_per_class);
    r.get("distill_temperature", cfg.distill_temperature);
    r.get("distill_weight", cfg.distill_weight);
    r.get("rank_batch_size", cfg.rank_batch_size);
    r.get("outdir", cfg.outdir);
    r.get("seeds", cfg.seeds);
    r.get("plotdata", cfg.plotdata);
    r.get("record_wall_time", cfg.record_wall_time);
  }
  if (errors.empty()) errors = validate_config(cfg);
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["run_name"] = cfg.run_name;
  Json ds;
  ds["kind"] = cfg.dataset.kind;
  ds["num_classes"] = cfg.dataset.num_classes;
  ds["dim"] = cfg.dataset.dim;
  ds["per_class"] = cfg.dataset.per_class;
  ds["spread"] = cfg.dataset.spread;
  ds["seed"] = cfg.dataset.seed;
  ds["cifar_train"] = cfg.dataset.cifar_train;
  ds["cifar_test"] = cfg.dataset.cifar_test;
  ds["standardize"] = cfg.dataset.standardize;
  j["dataset"] = ds;
  Json sp;
  sp["base_classes"] = cfg.split.base_classes;
  sp["split_size"] = cfg.split.split_size;
  sp["ordering_seed"] = cfg.split.ordering_seed;
  sp["ordering_file"] = cfg.split.ordering_file;
  j["split"] = sp;
  Json net;
  net["hidden"] = cfg.network.hidden;
  net["feature_dim"] = cfg.network.feature_dim;
  net["feature_activation"] = to_string(cfg.network.feature_activation);
  net["head_init"] = to_string(cfg.network.head_init);
  j["network"] = net;
  j["schedule"] = schedule_json(cfg.schedule);
  j["novel_schedule"] = schedule_json(cfg.novel_schedule);
  j["strategy"] = to_string(cfg.strategy);
  j["regularizer"] = to_string(cfg.regularizer);
  j["alpha"] = cfg.alpha;
  j["reg_scope"] = to_string(cfg.reg_scope);
  j["rho"] = cfg.rho;
  j["exemplars_per_class"] = cfg.exemplars_per_class;
  j["distill_temperature"] = cfg.distill_temperature;
  j["distill_weight"] = cfg.distill_weight;
  j["rank_batch_size"] = cfg.rank_batch_size;
  j["outdir"] = cfg.outdir;
  j["seeds"] = cfg.seeds;
  j["plotdata"] = cfg.plotdata;
  j["record_wall_time"] = cfg.record_wall_time;
  return j.dump(2) + "\n";
}

}  // namespace rfr
