#include "rfr/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rfr/rng.hpp"

namespace rfr {

void LabeledDataset::validate() const {
  if (labels.size() != static_cast<std::size_t>(inputs.rows()) || split.size() != labels.size())
    throw DimensionError("dataset labels/splits do not match the input rows");
  std::vector<int> train(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  std::vector<int> eval(train.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes)
      throw LabelOutOfRange("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    (split[i] == Split::train ? train : eval)[static_cast<std::size_t>(y)]++;
  }
  for (int c = 0; c < num_classes; ++c)
    if (train[static_cast<std::size_t>(c)] == 0 || eval[static_cast<std::size_t>(c)] == 0)
      throw DimensionError("class " + std::to_string(c) + " lacks a train or eval sample");
}

std::vector<Eigen::Index> LabeledDataset::rows(Split which, const std::vector<int>& classes) const {
  std::vector<bool> wanted;
  if (!classes.empty()) {
    wanted.assign(static_cast<std::size_t>(num_classes), false);
    for (int c : classes) wanted.at(static_cast<std::size_t>(c)) = true;
  }
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (split[i] != which) continue;
    if (!classes.empty() && !wanted[static_cast<std::size_t>(labels[i])]) continue;
    out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

std::vector<int> gather_labels(const LabeledDataset& data, const std::vector<Eigen::Index>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (Eigen::Index r : rows) out.push_back(data.labels[static_cast<std::size_t>(r)]);
  return out;
}

LabeledDataset make_gaussian_blobs(int num_classes, int dim, int per_class, double spread,
                                   std::uint64_t seed) {
  if (num_classes < 2) throw DimensionError("need at least 2 classes");
  if (dim < 1) throw DimensionError("dimension must be positive");
  if (per_class < 2) throw DimensionError("need at least 2 samples per class for a train/eval split");
  if (!(spread > 0)) throw BadSpread("spread must be positive");

  const Rng root(seed);
  Rng mean_rng = root.fork(0);
  Matrix means(num_classes, dim);
  for (int c = 0; c < num_classes; ++c) {
    double norm = 0;
    do {
      for (int j = 0; j < dim; ++j) means(c, j) = mean_rng.normal();
      norm = means.row(c).norm();
    } while (norm < 1e-12);
    means.row(c) /= norm;
  }

  const int n_eval = std::max(1, static_cast<int>(std::lround(0.2 * per_class)));
  const int n_train = per_class - n_eval;

  LabeledDataset data;
  data.num_classes = num_classes;
  data.inputs.resize(static_cast<Eigen::Index>(num_classes) * per_class, dim);
  Eigen::Index row = 0;
  for (int c = 0; c < num_classes; ++c) {
    Rng sample_rng = root.fork(1 + static_cast<std::uint64_t>(c));
    for (int k = 0; k < per_class; ++k, ++row) {
      for (int j = 0; j < dim; ++j) data.inputs(row, j) = means(c, j) + spread * sample_rng.normal();
      data.labels.push_back(c);
      data.split.push_back(k < n_train ? Split::train : Split::eval);
    }
  }
  return data;
}

void standardize(LabeledDataset& data) {
  const auto train = data.rows(Split::train);
  if (train.empty()) throw EmptyInput("no train rows to standardize with");
  const Matrix x = gather_rows(data.inputs, train);
  const Vector mean = x.colwise().mean().transpose();
  Vector stddev = ((x.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < stddev.size(); ++j)
    if (stddev[j] < 1e-12) stddev[j] = 1.0;
  data.inputs = ((data.inputs.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array())
                    .matrix();
}

std::vector<CifarRecord> read_cifar100_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecordBytes != 0)
    throw TruncatedFile(path + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                        std::to_string(kCifarRecordBytes));
  std::vector<CifarRecord> records(bytes.size() / kCifarRecordBytes);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data() + r * kCifarRecordBytes);
    CifarRecord& out = records[r];
    out.coarse_label = rec[0];
    out.fine_label = rec[1];
    if (out.coarse_label >= kCifarCoarseClasses || out.fine_label >= kCifarFineClasses)
      throw LabelOutOfRange(path + ": record " + std::to_string(r) + " has labels (" +
                            std::to_string(out.coarse_label) + ", " + std::to_string(out.fine_label) + ")");
    std::copy(rec + 2, rec + kCifarRecordBytes, out.pixels.begin());
  }
  return records;
}

void write_cifar100_records(const std::string& path, const std::vector<CifarRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const CifarRecord& r : records) {
    out.put(static_cast<char>(r.coarse_label));
    out.put(static_cast<char>(r.fine_label));
    out.write(reinterpret_cast<const char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  }
}

LabeledDataset cifar_records_to_dataset(const std::vector<CifarRecord>& records, Split split) {
  LabeledDataset data;
  data.num_classes = kCifarFineClasses;
  data.inputs.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(kCifarPixels));
  for (std::size_t r = 0; r < records.size(); ++r) {
    for (std::size_t p = 0; p < kCifarPixels; ++p)
      data.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) = records[r].pixels[p] / 255.0;
    data.labels.push_back(records[r].fine_label);
    data.split.push_back(split);
  }
  return data;
}

LabeledDataset parse_cifar100_binary(const std::string& path, Split split) {
  return cifar_records_to_dataset(read_cifar100_records(path), split);
}

LabeledDataset load_cifar100(const std::string& train_path, const std::string& test_path) {
  LabeledDataset train = parse_cifar100_binary(train_path, Split::train);
  const LabeledDataset test = parse_cifar100_binary(test_path, Split::eval);
  Matrix inputs(train.size() + test.size(), static_cast<Eigen::Index>(kCifarPixels));
  inputs.topRows(train.size()) = train.inputs;
  inputs.bottomRows(test.size()) = test.inputs;
  train.inputs = std::move(inputs);
  train.labels.insert(train.labels.end(), test.labels.begin(), test.labels.end());
  train.split.insert(train.split.end(), test.split.begin(), test.split.end());
  return train;
}

std::vector<int> seeded_ordering(int num_classes, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(0x6f72646572ULL);
  return random_permutation(num_classes, rng);
}

std::vector<int> read_ordering_file(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open ordering file " + path);
  std::vector<int> ordering;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::string token;
    while (fields >> token) {
      std::size_t used = 0;
      int value = 0;
      try {
        value = std::stoi(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size()) throw ParseError(line_no, "invalid class id '" + token + "'");
      ordering.push_back(value);
    }
  }
  if (static_cast<int>(ordering.size()) != num_classes)
    throw BadSplit("ordering file lists " + std::to_string(ordering.size()) + " classes, expected " +
                   std::to_string(num_classes));
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (int c : ordering) {
    if (c < 0 || c >= num_classes) throw BadSplit("ordering file lists class " + std::to_string(c) + " out of range");
    if (seen[static_cast<std::size_t>(c)]) throw BadSplit("ordering file lists class " + std::to_string(c) + " twice");
    seen[static_cast<std::size_t>(c)] = true;
  }
  return ordering;
}

TaskSplit make_task_split(int num_classes, int base_classes, int split_size, std::vector<int> ordering) {
  if (num_classes < 1 || base_classes < 1 || base_classes > num_classes)
    throw BadSplit("base class count " + std::to_string(base_classes) + " invalid for " +
                   std::to_string(num_classes) + " classes");
  if (base_classes < num_classes && (split_size < 1 || base_classes + split_size > num_classes))
    throw BadSplit("split size " + std::to_string(split_size) + " does not fit after " +
                   std::to_string(base_classes) + " base classes");
  if (static_cast<int>(ordering.size()) != num_classes)
    throw BadSplit("ordering must list every class exactly once");
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (int c : ordering) {
    if (c < 0 || c >= num_classes || seen[static_cast<std::size_t>(c)])
      throw BadSplit("ordering is not a permutation of the class ids");
    seen[static_cast<std::size_t>(c)] = true;
  }

  TaskSplit split;
  split.ordering = std::move(ordering);
  split.base.assign(split.ordering.begin(), split.ordering.begin() + base_classes);
  int next = base_classes;
  if (base_classes < num_classes) {
    while (next + split_size <= num_classes) {
      split.novel_tasks.emplace_back(split.ordering.begin() + next, split.ordering.begin() + next + split_size);
      next += split_size;
    }
  }
  split.dropped.assign(split.ordering.begin() + next, split.ordering.end());
  return split;
}

void save_dataset(const std::string& prefix, const LabeledDataset& data, const std::string& meta_json) {
  write_matrix_csv_file(prefix + ".csv", data.inputs);
  nlohmann::ordered_json j;
  j["num_classes"] = data.num_classes;
  j["labels"] = data.labels;
  std::string splits;
  for (Split s : data.split) splits.push_back(s == Split::train ? 't' : 'e');
  j["splits"] = splits;
  j["meta"] = nlohmann::ordered_json::parse(meta_json);
  std::ofstream out(prefix + ".json");
  if (!out) throw Error("cannot write " + prefix + ".json");
  out << j.dump(2) << '\n';
}

LabeledDataset load_dataset(const std::string& prefix) {
  LabeledDataset data;
  data.inputs = read_matrix_csv_file(prefix + ".csv");
  std::ifstream in(prefix + ".json");
  if (!in) throw ParseError(0, "cannot open " + prefix + ".json");
  try {
    const auto j = nlohmann::json::parse(in);
    data.num_classes = j.at("num_classes").get<int>();
    data.labels = j.at("labels").get<std::vector<int>>();
    for (char c : j.at("splits").get<std::string>()) {
      if (c != 't' && c != 'e') throw ParseError(0, "split codes must be 't' or 'e'");
      data.split.push_back(c == 't' ? Split::train : Split::eval);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, prefix + ".json: " + e.what());
  }
  if (data.labels.size() != static_cast<std::size_t>(data.inputs.rows()) || data.split.size() != data.labels.size())
    throw ParseError(0, "sidecar length does not match the matrix rows");
  return data;
}

}  // namespace rfr
