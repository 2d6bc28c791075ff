#include "rfr/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "rfr/rank_metrics.hpp"

namespace rfr {
namespace {

struct Column {
  const char* name;
  double MetricsRow::*field;
};

const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      {"overall_acc", &MetricsRow::overall_acc},
      {"novel_acc", &MetricsRow::novel_acc},
      {"base_acc", &MetricsRow::base_acc},
      {"forgetting", &MetricsRow::forgetting},
      {"weight_dist_base", &MetricsRow::weight_dist_base},
      {"weight_dist_prev", &MetricsRow::weight_dist_prev},
      {"cos_sim_base", &MetricsRow::cos_sim_base},
      {"cos_sim_prev", &MetricsRow::cos_sim_prev},
      {"erank_batch_mean", &MetricsRow::erank_batch_mean},
      {"erank_pool", &MetricsRow::erank_pool},
      {"novel_acc_final", &MetricsRow::novel_acc_final},
  };
  return cols;
}

}  // namespace

std::vector<double> MetricsLog::column(double MetricsRow::*field) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const MetricsRow& r : rows) out.push_back(r.*field);
  return out;
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n{"session"};
    for (const Column& c : columns()) n.emplace_back(c.name);
    return n;
  }();
  return names;
}

double average_incremental_accuracy(std::span<const double> overall_acc_per_session) {
  if (overall_acc_per_session.empty()) throw EmptyInput("average incremental accuracy of zero sessions");
  const long double sum =
      std::accumulate(overall_acc_per_session.begin(), overall_acc_per_session.end(), 0.0L);
  return static_cast<double>(sum / static_cast<long double>(overall_acc_per_session.size()));
}

std::vector<double> base_task_forgetting(std::span<const double> base_acc_per_session) {
  if (base_acc_per_session.empty()) throw MissingBaseline("no base-session accuracy recorded");
  std::vector<double> out;
  for (std::size_t t = 1; t < base_acc_per_session.size(); ++t)
    out.push_back(base_acc_per_session[0] - base_acc_per_session[t]);
  return out;
}

double weight_distance(const Network& a, const Network& b) {
  if (a.extractor.size() != b.extractor.size()) throw ShapeMismatch("extractors differ in depth");
  for (std::size_t l = 0; l < a.extractor.size(); ++l) {
    const Affine& x = a.extractor[l].affine;
    const Affine& y = b.extractor[l].affine;
    if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols())
      throw ShapeMismatch("extractor layer " + std::to_string(l) + " shapes differ");
  }
  const auto pa = extractor_parameters(a);
  const auto pb = extractor_parameters(b);
  double sum = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) sum += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  return std::sqrt(sum);
}

double representation_cosine(const Network& a, const Network& b, const Matrix& probe_inputs) {
  if (probe_inputs.rows() == 0) throw EmptyInput("no probe inputs");
  if (a.input_dim() != b.input_dim()) throw ShapeMismatch("networks take different input dims");
  const Matrix fa = row_normalize(extract_features(a, probe_inputs));
  const Matrix fb = row_normalize(extract_features(b, probe_inputs));
  if (fa.cols() != fb.cols()) throw ShapeMismatch("feature dimensions differ");
  return (fa.array() * fb.array()).rowwise().sum().mean();
}

double representation_erank(const Network& net, const Matrix& pool, int batch_size, RankMode mode,
                            std::uint64_t seed) {
  const Matrix features = extract_features(net, pool);
  const Eigen::Index d = features.cols();
  if (mode == RankMode::pool || features.rows() <= batch_size) {
    if (features.rows() <= d)
      throw DimensionError("pool of " + std::to_string(features.rows()) + " rows needs more than d=" +
                           std::to_string(d));
    return effective_rank(features);
  }
  if (batch_size <= d)
    throw DimensionError("batch size " + std::to_string(batch_size) + " must exceed d=" + std::to_string(d));

  Rng rng = Rng(seed).fork(0x72616e6bULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  shuffle(std::span<Eigen::Index>(order), rng);
  const std::size_t batches = order.size() / static_cast<std::size_t>(batch_size);
  double total = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    Matrix batch(batch_size, d);
    for (int k = 0; k < batch_size; ++k)
      batch.row(k) = features.row(order[b * static_cast<std::size_t>(batch_size) + static_cast<std::size_t>(k)]);
    total += effective_rank(batch);
  }
  return total / static_cast<double>(batches);
}

std::vector<double> rank_trajectory(std::span<const Network> nets, const Matrix& pool, int batch_size,
                                    RankMode mode, std::uint64_t seed) {
  std::vector<double> out;
  for (const Network& net : nets) out.push_back(representation_erank(net, pool, batch_size, mode, seed));
  return out;
}

void write_metrics_csv(std::ostream& out, const MetricsLog& log) {
  std::ostringstream buf;
  buf << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto& names = metrics_columns();
  for (std::size_t i = 0; i < names.size(); ++i) buf << (i ? "," : "") << names[i];
  buf << '\n';
  for (const MetricsRow& r : log.rows) {
    buf << r.session;
    for (const Column& c : columns()) buf << ',' << r.*(c.field);
    buf << '\n';
  }
  out << buf.str();
}

std::string metrics_json(const MetricsLog& log) {
  auto rows = nlohmann::ordered_json::array();
  for (const MetricsRow& r : log.rows) {
    nlohmann::ordered_json j;
    j["session"] = r.session;
    for (const Column& c : columns()) j[c.name] = r.*(c.field);
    rows.push_back(std::move(j));
  }
  return rows.dump(2);
}

std::vector<std::string> write_plotdata(const std::string& dir, const MetricsLog& log) {
  struct Figure {
    const char* file;
    double MetricsRow::*field;
  };
  static const Figure figures[] = {
      {"fig_rank.csv", &MetricsRow::erank_pool},
      {"fig_rank_batch.csv", &MetricsRow::erank_batch_mean},
      {"fig_overall_acc.csv", &MetricsRow::overall_acc},
      {"fig_novel_acc.csv", &MetricsRow::novel_acc},
      {"fig_weight_dist_base.csv", &MetricsRow::weight_dist_base},
      {"fig_weight_dist_prev.csv", &MetricsRow::weight_dist_prev},
      {"fig_cos_sim_base.csv", &MetricsRow::cos_sim_base},
      {"fig_cos_sim_prev.csv", &MetricsRow::cos_sim_prev},
      {"fig_forgetting.csv", &MetricsRow::forgetting},
  };
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  for (const Figure& f : figures) {
    const std::string path = (std::filesystem::path(dir) / f.file).string();
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "session,value\n";
    for (const MetricsRow& r : log.rows) out << r.session << ',' << r.*(f.field) << '\n';
    written.push_back(path);
  }
  return written;
}

}  // namespace rfr
