#include "rfr/app.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rfr/rank_metrics.hpp"

namespace fs = std::filesystem;

namespace rfr {
namespace {

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string percent(double fraction) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * fraction << '%';
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

RunInputs prepare_run(const ExperimentConfig& cfg, std::uint64_t seed) {
  RunInputs in;
  const auto& ds = cfg.dataset;
  if (ds.kind == "cifar100")
    in.data = load_cifar100(ds.cifar_train, ds.cifar_test);
  else
    in.data = make_gaussian_blobs(ds.num_classes, ds.dim, ds.per_class, ds.spread, ds.seed + seed);
  if (ds.standardize) standardize(in.data);
  in.data.validate();

  in.plan.base_classes = cfg.split.base_classes;
  in.plan.split_size = cfg.split.split_size;
  in.plan.class_ordering = cfg.split.ordering_file.empty()
                               ? seeded_ordering(in.data.num_classes, cfg.split.ordering_seed + seed)
                               : read_ordering_file(cfg.split.ordering_file, in.data.num_classes);
  in.plan.strategy = cfg.strategy;
  in.plan.regularizer = cfg.regularizer;
  in.plan.alpha = cfg.alpha;
  in.plan.reg_scope = cfg.reg_scope;
  in.plan.exemplars_per_class = cfg.exemplars_per_class;
  in.plan.distill_temperature = cfg.distill_temperature;
  in.plan.distill_weight = cfg.distill_weight;
  in.plan.head_init = cfg.network.head_init;

  in.spec.input_dim = static_cast<int>(in.data.input_dim());
  in.spec.hidden = cfg.network.hidden;
  in.spec.feature_dim = cfg.network.feature_dim;
  in.spec.feature_activation = cfg.network.feature_activation;
  in.spec.head_init = cfg.network.head_init;

  const Rng root(seed);
  in.base_schedule = cfg.schedule;
  in.base_schedule.seed = root.fork(1).seed();
  in.novel_schedule = cfg.novel_schedule;
  in.novel_schedule.seed = root.fork(2).seed();
  in.diag.rank_batch_size = cfg.rank_batch_size;
  in.diag.seed = seed;
  in.diag.record_wall_time = cfg.record_wall_time;
  return in;
}

ExperimentResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const RunInputs in = prepare_run(cfg, seed);
  return run_incremental(in.data, in.plan, in.spec, in.base_schedule, in.novel_schedule, in.diag);
}

void write_seed_outputs(const std::string& run_dir, std::uint64_t seed, const ExperimentResult& result,
                        bool plotdata) {
  const fs::path dir = fs::path(run_dir) / ("seed" + std::to_string(seed));
  fs::create_directories(dir);
  for (const SessionRecord& rec : result.sessions)
    write_file(dir / ("session" + std::to_string(rec.session_index) + ".json"), session_record_json(rec) + "\n");
  std::ostringstream csv;
  write_metrics_csv(csv, result.log);
  write_file(dir / "metrics.csv", csv.str());
  write_file(dir / "network.json", network_to_json(result.final_network) + "\n");
  if (plotdata) write_plotdata((dir / "plotdata").string(), result.log);
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) throw EmptyInput("mean of nothing");
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

SeedSummary summarize_seed(std::uint64_t seed, const ExperimentResult& result) {
  SeedSummary s;
  s.seed = seed;
  s.aic = result.aic;
  const auto& rows = result.log.rows;
  s.base_erank_pool = rows.front().erank_pool;
  s.final_forgetting = rows.back().forgetting;
  s.final_weight_dist_base = rows.back().weight_dist_base;
  if (rows.size() > 1) {
    double sum = 0;
    for (std::size_t t = 1; t < rows.size(); ++t) sum += rows[t].novel_acc;
    s.mean_novel_acc = sum / static_cast<double>(rows.size() - 1);
  }
  return s;
}

TrainSummary summarize(const std::string& run_name, std::vector<SeedSummary> seeds) {
  TrainSummary out;
  out.run_name = run_name;
  std::vector<double> aic;
  for (const auto& s : seeds) aic.push_back(s.aic);
  std::tie(out.aic_mean, out.aic_std) = mean_std(aic);
  out.seeds = std::move(seeds);
  return out;
}

std::string summary_json(const TrainSummary& summary) {
  nlohmann::ordered_json j;
  j["run_name"] = summary.run_name;
  auto seeds = nlohmann::ordered_json::array();
  for (const auto& s : summary.seeds) {
    nlohmann::ordered_json e;
    e["seed"] = s.seed;
    e["aic"] = s.aic;
    e["base_erank_pool"] = s.base_erank_pool;
    e["final_forgetting"] = s.final_forgetting;
    e["final_weight_dist_base"] = s.final_weight_dist_base;
    e["mean_novel_acc"] = s.mean_novel_acc;
    seeds.push_back(std::move(e));
  }
  j["seeds"] = std::move(seeds);
  j["aic_mean"] = summary.aic_mean;
  j["aic_std"] = summary.aic_std;
  return j.dump(2) + "\n";
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::clamp(jobs, 1, std::max(n, 1));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

int cmd_rank(const std::string& csv_path, double rho, std::ostream& out, std::ostream& err) {
  try {
    const Matrix h = read_matrix_csv_file(csv_path);
    out << rank_report_json(rank_report(h, rho)) << '\n';
    return kExitOk;
  } catch (const BadRho& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << csv_path << ": " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_train(const ExperimentConfig& cfg, int jobs, std::ostream& out, std::ostream& err) {
  if (const auto problems = validate_config(cfg); !problems.empty()) {
    for (const auto& p : problems) err << "error: " << p << '\n';
    return kExitUsage;
  }
  try {
    const RunInputs probe = prepare_run(cfg, cfg.seeds.front());
    probe.plan.validate(probe.data.num_classes, probe.spec.feature_dim, probe.base_schedule.batch_size);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const fs::path run_dir = fs::path(cfg.outdir) / cfg.run_name;
  std::vector<SeedSummary> summaries(cfg.seeds.size());
  try {
    fs::create_directories(run_dir);
    write_file(run_dir / "config.json", config_to_json(cfg));
    parallel_for(static_cast<int>(cfg.seeds.size()), jobs, [&](int i) {
      const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(i)];
      const ExperimentResult result = run_seed(cfg, seed);
      write_seed_outputs(run_dir.string(), seed, result, cfg.plotdata);
      summaries[static_cast<std::size_t>(i)] = summarize_seed(seed, result);
    });
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }

  const TrainSummary summary = summarize(cfg.run_name, summaries);
  write_file(run_dir / "summary.json", summary_json(summary));
  for (const auto& s : summary.seeds) out << "seed " << s.seed << ": AIC " << percent(s.aic) << '\n';
  out << cfg.run_name << ": AIC " << percent(summary.aic_mean) << " +/- " << percent(summary.aic_std) << " over "
      << summary.seeds.size() << " seed(s)\n";
  return kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& parameter, const std::vector<double>& values, int jobs,
              std::ostream& out, std::ostream& err) {
  if (parameter != "alpha" && parameter != "base_classes") {
    err << "error: sweep parameter must be alpha or base_classes, got '" << parameter << "'\n";
    return kExitUsage;
  }
  if (values.empty()) {
    err << "error: sweep needs at least one value\n";
    return kExitUsage;
  }
  const bool with_baseline = parameter == "base_classes";

  // one config per (value, variant); variant 1 is the alpha = 0 baseline
  std::vector<ExperimentConfig> configs;
  std::vector<std::string> problems;
  for (double v : values) {
    ExperimentConfig c = cfg;
    if (parameter == "alpha") {
      c.alpha = v;
    } else {
      if (v != std::floor(v)) problems.push_back("base_classes: sweep value " + shortest(v) + " is not an integer");
      c.split.base_classes = static_cast<int>(v);
    }
    for (const auto& p : validate_config(c)) problems.push_back("value " + shortest(v) + ": " + p);
    configs.push_back(c);
    if (with_baseline) {
      c.alpha = 0;
      configs.push_back(c);
    }
  }
  if (!problems.empty()) {
    for (const auto& p : problems) err << "error: " << p << '\n';
    return kExitUsage;
  }

  const std::size_t per_value = with_baseline ? 2 : 1;
  const std::size_t seeds = cfg.seeds.size();
  std::vector<double> aic(configs.size() * seeds);
  try {
    for (const auto& c : configs) prepare_run(c, c.seeds.front()).plan.validate(
        c.dataset.kind == "cifar100" ? kCifarFineClasses : c.dataset.num_classes, c.network.feature_dim,
        c.schedule.batch_size);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    parallel_for(static_cast<int>(aic.size()), jobs, [&](int i) {
      const auto& c = configs[static_cast<std::size_t>(i) / seeds];
      aic[static_cast<std::size_t>(i)] = run_seed(c, c.seeds[static_cast<std::size_t>(i) % seeds]).aic;
    });
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }

  std::ostringstream rows;
  std::ostringstream table;
  rows << "parameter,value,seed,aic" << (with_baseline ? ",baseline_aic,improvement" : "") << '\n';
  table << "parameter,value,runs,aic_mean,aic_std" << (with_baseline ? ",improvement_mean" : "") << '\n';
  for (std::size_t v = 0; v < values.size(); ++v) {
    std::vector<double> main_aic;
    std::vector<double> gains;
    for (std::size_t s = 0; s < seeds; ++s) {
      const double a = aic[(v * per_value) * seeds + s];
      main_aic.push_back(a);
      rows << parameter << ',' << shortest(values[v]) << ',' << cfg.seeds[s] << ',' << shortest(a);
      if (with_baseline) {
        const double b = aic[(v * per_value + 1) * seeds + s];
        gains.push_back(a - b);
        rows << ',' << shortest(b) << ',' << shortest(a - b);
      }
      rows << '\n';
    }
    const auto [mean, sd] = mean_std(main_aic);
    table << parameter << ',' << shortest(values[v]) << ',' << seeds << ',' << shortest(mean) << ',' << shortest(sd);
    out << parameter << '=' << shortest(values[v]) << ": AIC " << percent(mean) << " +/- " << percent(sd);
    if (with_baseline) {
      const double gain = mean_std(gains).first;
      table << ',' << shortest(gain);
      out << ", improvement over alpha=0 " << percent(gain);
    }
    table << '\n';
    out << '\n';
  }

  const fs::path run_dir = fs::path(cfg.outdir) / cfg.run_name;
  try {
    fs::create_directories(run_dir);
    write_file(run_dir / ("sweep_" + parameter + ".csv"), rows.str());
    write_file(run_dir / ("sweep_" + parameter + "_summary.csv"), table.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_verify(const std::vector<int>& dims, int trials, const std::vector<std::uint64_t>& seeds,
               const CheckOptions& opts, std::ostream& out, std::ostream& err) {
  std::vector<CheckReport> reports;
  try {
    for (int d : dims)
      if (d < 2) throw ConfigError("dims: every dim must be >= 2, got " + std::to_string(d));
    if (trials < 1) throw ConfigError("trials: must be >= 1");
    reports = run_verify_battery(dims, trials, seeds, opts);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  out << check_reports_json(reports) << '\n';
  int failed = 0;
  for (const auto& r : reports) {
    if (r.passed) continue;
    ++failed;
    err << "FAIL " << r.name << " dim=" << r.dim << " seed=" << r.seed << ": " << r.violations << " violation(s)\n";
  }
  return failed == 0 ? kExitOk : kExitFailure;
}

}  // namespace rfr
