#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rfr/network.hpp"

namespace rfr {

/// Paper-scale reference: UCIR + RFR on CIFAR-100 (B=50, S=10) reached 69.45
/// average incremental accuracy with ResNet-18. Documentation only; the
/// desk-scale benchmarks here are not expected to reproduce it.
inline constexpr double kReferenceUcirRfrCifar100S10Aic = 69.45;

/// One session's diagnostics. Accuracies and forgetting are fractions.
struct MetricsRow {
  int session = 0;
  double overall_acc = 0;
  double novel_acc = 0;  // accuracy on this session's new classes right after the session
  double base_acc = 0;
  double forgetting = 0;  // base_acc(0) - base_acc(t)
  double weight_dist_base = 0;
  double weight_dist_prev = 0;
  double cos_sim_base = 1;
  double cos_sim_prev = 1;
  double erank_batch_mean = 1;
  double erank_pool = 1;
  double novel_acc_final = 0;  // same classes, measured after the last session
};

struct MetricsLog {
  std::vector<MetricsRow> rows;

  std::vector<double> column(double MetricsRow::*field) const;
};

/// Column order of the CSV export; JSON mirrors it.
const std::vector<std::string>& metrics_columns();

/// Mean overall accuracy over all sessions, base session included.
double average_incremental_accuracy(std::span<const double> overall_acc_per_session);

/// base_acc[0] - base_acc[t] for t = 1 .. n-1.
std::vector<double> base_task_forgetting(std::span<const double> base_acc_per_session);

/// L2 norm of the difference of all extractor weights and biases (head excluded).
double weight_distance(const Network& a, const Network& b);

/// Mean cosine similarity between the two networks' features on each probe row.
double representation_cosine(const Network& a, const Network& b, const Matrix& probe_inputs);

enum class RankMode { batch_mean, pool };

/// erank of the network's features on `pool`: either over the whole pool or
/// averaged over disjoint seeded batches of `batch_size` rows (a pool smaller
/// than one batch is used as a single batch).
double representation_erank(const Network& net, const Matrix& pool, int batch_size, RankMode mode,
                            std::uint64_t seed);

/// representation_erank for each network in order.
std::vector<double> rank_trajectory(std::span<const Network> nets, const Matrix& pool, int batch_size,
                                    RankMode mode, std::uint64_t seed);

void write_metrics_csv(std::ostream& out, const MetricsLog& log);
std::string metrics_json(const MetricsLog& log);

/// Writes two-column (session, value) series named after the diagnostic
/// figure they mirror, e.g. fig_forgetting.csv. Returns the written paths.
std::vector<std::string> write_plotdata(const std::string& dir, const MetricsLog& log);

}  // namespace rfr
