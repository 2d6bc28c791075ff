#include "rfr/theorem_checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "rfr/rank_metrics.hpp"
#include "rfr/rng.hpp"

namespace rfr {
namespace {

constexpr double kEntropyTolerance = 1e-12;
constexpr double kIsotropyRadius = 1e-9;
constexpr double kGapExpected = 0.5108;
constexpr double kGapTolerance = 1e-3;
constexpr double kUniformTolerance = 1e-4;
constexpr double kUniformErankTolerance = 1e-3;
constexpr double kBoundTolerance = 1e-9;
constexpr double kArmijo = 1e-4;

/// Runs fn(trial) for every trial, spread over `jobs` threads; results stay in trial order.
template <typename T>
std::vector<T> run_trials(int trials, int jobs, const std::function<T(int)>& fn) {
  std::vector<T> out(static_cast<std::size_t>(std::max(trials, 0)));
  const int workers = std::clamp(jobs, 1, std::max(trials, 1));
  if (workers == 1) {
    for (int t = 0; t < trials; ++t) out[static_cast<std::size_t>(t)] = fn(t);
    return out;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int t = w; t < trials; t += workers) out[static_cast<std::size_t>(t)] = fn(t);
    });
  for (auto& th : pool) th.join();
  return out;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

double simplex_entropy(const Vector& lambda) {
  double h = 0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda[i] > 0) h -= lambda[i] * std::log(lambda[i]);
  return h;
}

void require_dim(int dim) {
  if (dim < 2) throw DimensionError("check needs dim >= 2, got " + std::to_string(dim));
}

}  // namespace

double CheckReport::value(const std::string& key) const {
  for (const auto& [k, v] : measured)
    if (k == key) return v;
  throw Error("report " + name + " has no value '" + key + "'");
}

double gaussian_entropy(const Matrix& sigma) {
  const Eigen::Index d = sigma.rows();
  const auto spec = sym_eigen(sigma);
  double log_det = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (spec.eigenvalues[i] <= 0) return -std::numeric_limits<double>::infinity();
    log_det += std::log(spec.eigenvalues[i]);
  }
  return 0.5 * static_cast<double>(d) * std::log(2 * std::numbers::pi * std::numbers::e) + 0.5 * log_det;
}

CheckReport check_gaussian_entropy_max(int dim, int trials, std::uint64_t seed, const CheckOptions& opts) {
  require_dim(dim);
  const double d = dim;
  const double tol = kEntropyTolerance * opts.tolerance_scale;
  const Matrix iso = Matrix::Identity(dim, dim) / d;
  const double analytic = 0.5 * d * std::log(2 * std::numbers::pi * std::numbers::e) + 0.5 * d * std::log(1 / d);
  const double max_entropy = gaussian_entropy(iso);

  struct Trial {
    double entropy = 0;
    bool violation = false;
  };
  const Rng root(seed);
  const auto results = run_trials<Trial>(trials, opts.jobs, [&](int t) {
    Rng rng = root.fork(static_cast<std::uint64_t>(t));
    // every tenth draw is rank-deficient to exercise the singular branch
    const Eigen::Index cols = t % 10 == 9 ? std::max(1, dim / 2) : dim;
    const Matrix a = gaussian_matrix(dim, cols, rng);
    Matrix sigma = a * a.transpose();
    sigma /= sigma.trace();
    sigma = (0.5 * (sigma + sigma.transpose())).eval();
    Trial out;
    out.entropy = gaussian_entropy(sigma);
    const bool isotropic = (sigma - iso).norm() < kIsotropyRadius;
    out.violation = out.entropy > max_entropy + tol || (!isotropic && out.entropy >= max_entropy);
    return out;
  });

  CheckReport r;
  r.name = "gaussian_entropy_max";
  r.dim = dim;
  r.seed = seed;
  r.trials = trials;
  r.tolerance = tol;
  double best = -std::numeric_limits<double>::infinity();
  int singular = 0;
  for (const Trial& t : results) {
    r.violations += t.violation ? 1 : 0;
    best = std::max(best, t.entropy);
    singular += std::isinf(t.entropy) ? 1 : 0;
  }
  if (std::abs(max_entropy - analytic) > tol * std::max(1.0, std::abs(analytic))) ++r.violations;
  r.passed = r.violations == 0;
  r.measured = {{"max_entropy", max_entropy},
                {"analytic_max", analytic},
                {"best_sample_entropy", best},
                {"min_gap", max_entropy - best},
                {"singular_samples", singular}};
  return r;
}

CheckReport check_entropy_gap_example(const CheckOptions& opts) {
  Matrix sigma = Matrix::Zero(2, 2);
  sigma(0, 0) = 0.9;
  sigma(1, 1) = 0.1;
  const double gap = gaussian_entropy(Matrix::Identity(2, 2) / 2.0) - gaussian_entropy(sigma);
  CheckReport r;
  r.name = "entropy_gap_example";
  r.dim = 2;
  r.trials = 1;
  r.tolerance = kGapTolerance * opts.tolerance_scale;
  r.violations = std::abs(gap - kGapExpected) <= r.tolerance ? 0 : 1;
  r.passed = r.violations == 0;
  r.measured = {{"gap", gap}, {"expected", kGapExpected}};
  return r;
}

Vector project_to_simplex(const Vector& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumulative = 0;
  double theta = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double candidate = (cumulative - 1) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0) theta = candidate;
  }
  return (v.array() - theta).max(0.0).matrix();
}

AscentResult simplex_entropy_ascent(Vector lambda, int steps) {
  const double d = static_cast<double>(lambda.size());
  AscentResult out;
  for (int it = 0; it < steps; ++it) {
    const Vector grad = (-(1.0 + lambda.array().max(kLogClamp).log())).matrix();
    const double f = simplex_entropy(lambda);
    double t = 1.0 / d;
    Vector next = project_to_simplex(lambda + t * grad);
    while (simplex_entropy(next) < f + kArmijo * grad.dot(next - lambda) && t > 1e-30) {
      t *= 0.5;
      next = project_to_simplex(lambda + t * grad);
    }
    const double moved = (next - lambda).cwiseAbs().maxCoeff();
    lambda = next;
    out.iterations = it + 1;
    if (moved <= 1e-15) break;
  }
  out.lambda = std::move(lambda);
  return out;
}

CheckReport check_erank_max_uniform(int dim, int trials, int steps, std::uint64_t seed, const CheckOptions& opts) {
  require_dim(dim);
  const double d = dim;
  const double tol = kUniformTolerance * opts.tolerance_scale;
  const double erank_tol = kUniformErankTolerance * opts.tolerance_scale;

  struct Trial {
    double distance = 0;
    double erank = 0;
    int iterations = 0;
  };
  const Rng root(seed);
  const auto results = run_trials<Trial>(trials, opts.jobs, [&](int t) {
    Vector start(dim);
    if (t == 0) {
      start.setConstant(1 / d);
    } else if (t == 1) {
      start.setConstant(0.01 / (d - 1));
      start[0] = 0.99;
    } else {
      Rng rng = root.fork(static_cast<std::uint64_t>(t));
      if (t % 2 == 0) {
        for (int i = 0; i < dim; ++i) start[i] = -std::log(1 - rng.uniform());
        start /= start.sum();
      } else {
        // projected Gaussian points sit on faces of the simplex
        for (int i = 0; i < dim; ++i) start[i] = rng.normal();
        start = project_to_simplex(start);
      }
    }
    const AscentResult res = simplex_entropy_ascent(start, steps);
    Trial out;
    out.distance = (res.lambda.array() - 1 / d).abs().maxCoeff();
    out.erank = std::exp(simplex_entropy(res.lambda));
    out.iterations = res.iterations;
    return out;
  });

  CheckReport r;
  r.name = "erank_max_uniform";
  r.dim = dim;
  r.seed = seed;
  r.trials = trials;
  r.tolerance = tol;
  double worst = 0;
  double worst_erank_err = 0;
  int max_iterations = 0;
  for (const Trial& t : results) {
    const double erank_err = std::abs(t.erank - d);
    if (!(t.distance <= tol) || !(erank_err <= erank_tol)) ++r.violations;
    worst = std::max(worst, t.distance);
    worst_erank_err = std::max(worst_erank_err, erank_err);
    max_iterations = std::max(max_iterations, t.iterations);
  }
  r.passed = r.violations == 0;
  r.measured = {{"max_distance", worst}, {"max_erank_error", worst_erank_err}, {"max_iterations", max_iterations},
                {"steps", steps}};
  return r;
}

CheckReport check_erank_rank_bound(int trials, int max_dim, std::uint64_t seed, const CheckOptions& opts) {
  require_dim(max_dim);
  const double tol = kBoundTolerance * opts.tolerance_scale;

  struct Trial {
    double slack = 0;  // rank - erank
    double erank = 0;
    bool violation = false;
  };
  const Rng root(seed);
  const auto results = run_trials<Trial>(trials, opts.jobs, [&](int t) {
    Rng rng = root.fork(static_cast<std::uint64_t>(t));
    const int d = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_dim - 1)));
    const int n = d + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(7 * d)));
    Matrix h;
    switch (t % 4) {
      case 0:
        h = gaussian_matrix(n, d, rng);
        break;
      case 1: {  // columns spread over six decades
        h = gaussian_matrix(n, d, rng);
        for (int j = 0; j < d; ++j) h.col(j) *= std::pow(10.0, -6.0 * rng.uniform());
        break;
      }
      case 2: {  // rank r < d
        const int r = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - 1)));
        h = gaussian_matrix(n, r, rng) * gaussian_matrix(r, d, rng);
        break;
      }
      default: {  // heavy-tailed row scales
        h = gaussian_matrix(n, d, rng);
        for (int i = 0; i < n; ++i) h.row(i) *= std::exp(3.0 * rng.normal());
        break;
      }
    }
    const auto spec = representation_spectrum(h);
    Trial out;
    out.erank = erank(spec);
    out.slack = algebraic_rank(spec) - out.erank;
    out.violation = out.slack < -tol || out.erank < 1 - tol;
    return out;
  });

  CheckReport r;
  r.name = "erank_rank_bound";
  r.dim = max_dim;
  r.seed = seed;
  r.trials = trials;
  r.tolerance = tol;
  double min_slack = std::numeric_limits<double>::infinity();
  for (const Trial& t : results) {
    r.violations += t.violation ? 1 : 0;
    min_slack = std::min(min_slack, t.slack);
  }

  // equality cases: one direction, and an isotropic frame
  Rng rng = root.fork(0xb0u);
  const Vector dir = gaussian_matrix(1, max_dim, rng).row(0).transpose();
  Matrix rank_one(3 * max_dim, max_dim);
  for (int i = 0; i < rank_one.rows(); ++i) rank_one.row(i) = (i % 2 ? 1.0 : -2.5) * dir.transpose();
  Matrix iso(2 * max_dim, max_dim);
  iso << Matrix::Identity(max_dim, max_dim), -Matrix::Identity(max_dim, max_dim);
  const double rank_one_erank = effective_rank(rank_one);
  const double iso_erank = effective_rank(iso);
  if (std::abs(rank_one_erank - 1) > tol) ++r.violations;
  if (std::abs(iso_erank - max_dim) > tol) ++r.violations;

  r.passed = r.violations == 0;
  r.measured = {{"min_slack", trials > 0 ? min_slack : 0.0},
                {"rank_one_erank", rank_one_erank},
                {"isotropic_erank", iso_erank}};
  return r;
}

std::vector<CheckReport> run_verify_battery(const std::vector<int>& dims, int trials,
                                            const std::vector<std::uint64_t>& seeds, const CheckOptions& opts) {
  if (dims.empty()) throw ConfigError("verify needs at least one dim");
  const int max_dim = *std::max_element(dims.begin(), dims.end());
  std::vector<CheckReport> out;
  out.push_back(check_entropy_gap_example(opts));
  for (std::uint64_t seed : seeds) {
    for (int dim : dims) {
      out.push_back(check_gaussian_entropy_max(dim, trials, seed, opts));
      out.push_back(check_erank_max_uniform(dim, trials, 1000, seed, opts));
    }
    out.push_back(check_erank_rank_bound(trials, max_dim, seed, opts));
  }
  return out;
}

std::string check_reports_json(const std::vector<CheckReport>& reports) {
  auto arr = nlohmann::ordered_json::array();
  for (const CheckReport& r : reports) {
    nlohmann::ordered_json j;
    j["check"] = r.name;
    j["dim"] = r.dim;
    j["seed"] = r.seed;
    j["passed"] = r.passed;
    j["trials"] = r.trials;
    j["violations"] = r.violations;
    j["tolerance"] = r.tolerance;
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.measured) {
      if (std::isfinite(v))
        m[k] = v;
      else
        m[k] = v > 0 ? "inf" : "-inf";
    }
    j["measured"] = std::move(m);
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace rfr
