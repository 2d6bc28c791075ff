#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "rfr/rng.hpp"
#include "rfr/theorem_checks.hpp"

using Catch::Matchers::WithinAbs;
using namespace rfr;

TEST_CASE("gaussian entropy at the isotropic point", "[theorem]") {
  for (int d : {2, 5, 16}) {
    const double expected = 0.5 * d * std::log(2 * std::numbers::pi * std::numbers::e) + 0.5 * d * std::log(1.0 / d);
    CHECK_THAT(gaussian_entropy(Matrix::Identity(d, d) / d), WithinAbs(expected, 1e-12));
  }
}

TEST_CASE("entropy gap of diag(0.9, 0.1)", "[theorem]") {
  Matrix sigma = Matrix::Zero(2, 2);
  sigma.diagonal() << 0.9, 0.1;
  // closed form: log det difference only
  const double oracle = 0.5 * (std::log(0.25) - std::log(0.09));
  const double gap = gaussian_entropy(Matrix::Identity(2, 2) / 2.0) - gaussian_entropy(sigma);
  CHECK_THAT(gap, WithinAbs(oracle, 1e-12));
  CHECK_THAT(oracle, WithinAbs(0.5108, 1e-3));
  const auto report = check_entropy_gap_example();
  CHECK(report.passed);
  CHECK_THAT(report.value("gap"), WithinAbs(oracle, 1e-12));
}

TEST_CASE("singular covariances have minus infinite entropy", "[theorem]") {
  Matrix sigma = Matrix::Zero(3, 3);
  sigma.diagonal() << 0.5, 0.5, 0.0;
  CHECK(gaussian_entropy(sigma) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("simplex projection", "[theorem]") {
  Vector v(4);
  v << 0.2, 0.3, 0.1, 0.4;
  CHECK((project_to_simplex(v) - v).cwiseAbs().maxCoeff() < 1e-15);

  v << 2, 0, 0, 0;
  Vector expected(4);
  expected << 1, 0, 0, 0;
  CHECK((project_to_simplex(v) - expected).cwiseAbs().maxCoeff() < 1e-15);

  v << 1, 1, -5, 0.5;
  // threshold 0.5 leaves (0.5, 0.5, 0, 0)
  expected << 0.5, 0.5, 0, 0;
  CHECK((project_to_simplex(v) - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("simplex projection is the closest simplex point", "[theorem]") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Vector v(3);
    for (int i = 0; i < 3; ++i) v[i] = 2 * rng.normal();
    const Vector p = project_to_simplex(v);
    CHECK_THAT(p.sum(), WithinAbs(1.0, 1e-12));
    CHECK(p.minCoeff() >= 0);
    // brute force over a fine grid of the 2-simplex
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a <= 200; ++a)
      for (int b = 0; a + b <= 200; ++b) {
        Vector q(3);
        q << a / 200.0, b / 200.0, (200 - a - b) / 200.0;
        best = std::min(best, (q - v).squaredNorm());
      }
    CHECK((p - v).squaredNorm() <= best + 1e-12);
  }
}

TEST_CASE("entropy ascent reaches the uniform point", "[theorem]") {
  Vector uniform = Vector::Constant(5, 0.2);
  const auto fixed = simplex_entropy_ascent(uniform, 100);
  CHECK((fixed.lambda - uniform).cwiseAbs().maxCoeff() < 1e-15);

  Vector peaked = Vector::Constant(5, 0.0025);
  peaked[0] = 0.99;
  const auto res = simplex_entropy_ascent(peaked, 1000);
  CHECK((res.lambda - uniform).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("checks pass at small scale and are deterministic", "[theorem]") {
  for (int d : {2, 8}) {
    const auto a = check_gaussian_entropy_max(d, 60, 3);
    CHECK(a.passed);
    CHECK(a.violations == 0);
    const auto b = check_gaussian_entropy_max(d, 60, 3);
    CHECK(a.measured == b.measured);
    CHECK(check_erank_max_uniform(d, 30, 1000, 3).passed);
  }
  const auto bound = check_erank_rank_bound(80, 12, 5);
  CHECK(bound.passed);
  CHECK_THAT(bound.value("rank_one_erank"), WithinAbs(1.0, 1e-9));
  CHECK_THAT(bound.value("isotropic_erank"), WithinAbs(12.0, 1e-9));
  CHECK(check_reports_json({bound}) == check_reports_json({check_erank_rank_bound(80, 12, 5)}));
}

TEST_CASE("trial parallelism does not change reports", "[theorem]") {
  CheckOptions serial, threaded;
  threaded.jobs = 3;
  CHECK(check_reports_json({check_gaussian_entropy_max(4, 40, 1, serial)}) ==
        check_reports_json({check_gaussian_entropy_max(4, 40, 1, threaded)}));
  CHECK(check_reports_json({check_erank_rank_bound(40, 8, 1, serial)}) ==
        check_reports_json({check_erank_rank_bound(40, 8, 1, threaded)}));
}

TEST_CASE("a zero tolerance scale breaks the battery", "[theorem]") {
  CheckOptions broken;
  broken.tolerance_scale = 0;
  CHECK_FALSE(check_entropy_gap_example(broken).passed);
  CHECK_FALSE(check_erank_max_uniform(4, 10, 1000, 0, broken).passed);
}

TEST_CASE("checks reject degenerate dimensions", "[theorem]") {
  CHECK_THROWS_AS(check_gaussian_entropy_max(1, 10, 0), DimensionError);
  CHECK_THROWS_AS(check_erank_max_uniform(1, 10, 10, 0), DimensionError);
}
