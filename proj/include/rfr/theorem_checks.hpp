#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rfr/linalg.hpp"

namespace rfr {

struct CheckReport {
  std::string name;
  bool passed = true;
  int dim = 0;
  std::uint64_t seed = 0;
  int trials = 0;
  int violations = 0;
  double tolerance = 0;
  std::vector<std::pair<std::string, double>> measured;

  double value(const std::string& key) const;
};

/// Multiplies every tolerance used by the checks. Values <= 0 make the
/// battery fail, which is how the verify command's failure path is exercised.
struct CheckOptions {
  double tolerance_scale = 1.0;
  int jobs = 1;
};

/// Differential entropy of N(0, sigma): (d/2) log(2 pi e) + 1/2 log det sigma,
/// with log det taken from the eigenvalues and -inf for a singular sigma.
double gaussian_entropy(const Matrix& sigma);

/// Random trace-1 PSD matrices (A A^T over its trace) never beat sigma = I/d.
CheckReport check_gaussian_entropy_max(int dim, int trials, std::uint64_t seed, const CheckOptions& opts = {});

/// entropy(I/2) - entropy(diag(0.9, 0.1)), expected 0.5108 within 1e-3.
CheckReport check_entropy_gap_example(const CheckOptions& opts = {});

/// Projected gradient ascent of -sum lambda log lambda over the simplex.
/// Trial 0 starts at the uniform point, trial 1 at (0.99, 0.01/(d-1), ...),
/// the rest at random points; each must end within 1e-4 of 1/d in the max norm.
CheckReport check_erank_max_uniform(int dim, int trials, int steps, std::uint64_t seed,
                                    const CheckOptions& opts = {});

/// erank <= algebraic rank on random matrices of varied shape, conditioning and rank.
CheckReport check_erank_rank_bound(int trials, int max_dim, std::uint64_t seed, const CheckOptions& opts = {});

/// Euclidean projection onto the probability simplex (sorted-threshold method).
Vector project_to_simplex(const Vector& v);

struct AscentResult {
  Vector lambda;
  int iterations = 0;
};

AscentResult simplex_entropy_ascent(Vector start, int steps);

std::vector<CheckReport> run_verify_battery(const std::vector<int>& dims, int trials, const std::vector<std::uint64_t>& seeds,
                                            const CheckOptions& opts = {});

std::string check_reports_json(const std::vector<CheckReport>& reports);

}  // namespace rfr
