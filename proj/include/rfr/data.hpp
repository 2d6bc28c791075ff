#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rfr/linalg.hpp"

namespace rfr {

enum class Split : std::uint8_t { train, eval };

/// Rows of inputs with a class label and a train/eval assignment each.
struct LabeledDataset {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<Split> split;
  int num_classes = 0;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index input_dim() const { return inputs.cols(); }

  /// Throws unless labels lie in [0, num_classes) and every class has at
  /// least one train and one eval row.
  void validate() const;

  /// Row indices with the given split whose label is in `classes` (all classes if empty).
  std::vector<Eigen::Index> rows(Split which, const std::vector<int>& classes = {}) const;
};

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& rows);
std::vector<int> gather_labels(const LabeledDataset& data, const std::vector<Eigen::Index>& rows);

/// Class means uniform on the unit sphere, samples mean + spread * N(0, I),
/// the first 80% of each class's rows for training and the rest for eval.
LabeledDataset make_gaussian_blobs(int num_classes, int dim, int per_class, double spread,
                                   std::uint64_t seed);

/// Per-feature mean/std standardization with statistics from the train rows.
void standardize(LabeledDataset& data);

inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecordBytes = 2 + kCifarPixels;
inline constexpr int kCifarFineClasses = 100;
inline constexpr int kCifarCoarseClasses = 20;

/// One record of the CIFAR-100 binary layout: coarse label, fine label,
/// 3x32x32 channel-major pixels.
struct CifarRecord {
  std::uint8_t coarse_label = 0;
  std::uint8_t fine_label = 0;
  std::array<std::uint8_t, kCifarPixels> pixels{};

  bool operator==(const CifarRecord&) const = default;
};

std::vector<CifarRecord> read_cifar100_records(const std::string& path);
void write_cifar100_records(const std::string& path, const std::vector<CifarRecord>& records);
/// Pixels scaled to [0, 1]; fine labels; every row assigned `split`.
LabeledDataset cifar_records_to_dataset(const std::vector<CifarRecord>& records, Split split);
LabeledDataset parse_cifar100_binary(const std::string& path, Split split = Split::train);
/// The standard train.bin / test.bin pair as one dataset.
LabeledDataset load_cifar100(const std::string& train_path, const std::string& test_path);

/// Base classes followed by equally sized novel tasks, all drawn from `ordering`.
struct TaskSplit {
  std::vector<int> ordering;
  std::vector<int> base;
  std::vector<std::vector<int>> novel_tasks;
  std::vector<int> dropped;  // trailing classes that did not fill a whole task
};

std::vector<int> seeded_ordering(int num_classes, std::uint64_t seed);
/// Whitespace- or comma-separated class ids forming a permutation of [0, num_classes).
std::vector<int> read_ordering_file(const std::string& path, int num_classes);

/// Throws BadSplit on an invalid (base, split_size) pair or a non-permutation ordering.
/// Remainder classes are reported in `dropped` rather than forming a short task.
TaskSplit make_task_split(int num_classes, int base_classes, int split_size, std::vector<int> ordering);

/// CSV matrix at `<prefix>.csv` plus a JSON sidecar `<prefix>.json` holding
/// labels, splits, class count and the caller's `meta` object (config, seed).
void save_dataset(const std::string& prefix, const LabeledDataset& data, const std::string& meta_json = "{}");
LabeledDataset load_dataset(const std::string& prefix);

}  // namespace rfr
