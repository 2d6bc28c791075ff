#include <catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <sstream>

#include "rfr/linalg.hpp"
#include "rfr/rng.hpp"

using Catch::Matchers::WithinAbs;
using namespace rfr;

namespace {

Matrix random_symmetric(int n, Rng& rng) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  return (0.5 * (a + a.transpose())).eval();
}

}  // namespace

TEST_CASE("jacobi eigenvalues agree with Eigen's self-adjoint solver", "[linalg]") {
  Rng rng(11);
  for (int n : {1, 2, 3, 5, 16, 40}) {
    const Matrix a = random_symmetric(n, rng);
    const auto spec = sym_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(a);
    const Eigen::VectorXd expected = oracle.eigenvalues().reverse();
    for (int i = 0; i < n; ++i) CHECK_THAT(spec.eigenvalues[i], WithinAbs(expected[i], 1e-10));
  }
}

TEST_CASE("jacobi returns an orthonormal basis that reconstructs the input", "[linalg]") {
  Rng rng(3);
  const Matrix a = random_symmetric(24, rng);
  const auto spec = sym_eigen(a);
  const Matrix& v = spec.eigenvectors;
  CHECK((v.transpose() * v - Matrix::Identity(24, 24)).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix rebuilt = v * spec.eigenvalues.asDiagonal() * v.transpose();
  CHECK((rebuilt - a).cwiseAbs().maxCoeff() < 1e-11);
  for (int i = 1; i < 24; ++i) CHECK(spec.eigenvalues[i - 1] >= spec.eigenvalues[i]);
}

TEST_CASE("jacobi handles diagonal and repeated eigenvalues", "[linalg]") {
  Matrix d = Matrix::Zero(4, 4);
  d.diagonal() << 0.5, 3, 3, -1;
  const auto spec = sym_eigen(d);
  CHECK(spec.eigenvalues[0] == 3);
  CHECK(spec.eigenvalues[1] == 3);
  CHECK(spec.eigenvalues[2] == 0.5);
  CHECK(spec.eigenvalues[3] == -1);

  const Matrix iso = Matrix::Identity(6, 6) / 6.0;
  const auto s = sym_eigen(iso);
  for (int i = 0; i < 6; ++i) CHECK(s.eigenvalues[i] == 1.0 / 6.0);
}

TEST_CASE("jacobi works in single precision", "[linalg]") {
  Rng rng(5);
  const Eigen::MatrixXf a = random_symmetric(8, rng).cast<float>();
  const auto spec = sym_eigen(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXf> oracle(a);
  for (int i = 0; i < 8; ++i) CHECK_THAT(spec.eigenvalues[i], WithinAbs(oracle.eigenvalues()[7 - i], 1e-4));
}

TEST_CASE("sym_eigen rejects bad input", "[linalg]") {
  Matrix rect(2, 3);
  rect.setOnes();
  CHECK_THROWS_AS(sym_eigen(rect), DimensionError);

  Matrix asym = Matrix::Identity(3, 3);
  asym(0, 1) = 1e-3;
  CHECK_THROWS_AS(sym_eigen(asym), NotSymmetric);

  Matrix nan = Matrix::Identity(2, 2);
  nan(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sym_eigen(nan), NonFinite);

  CHECK_THROWS_AS(sym_eigen(Matrix::Identity(kMaxEigenDim + 1, kMaxEigenDim + 1)), DimensionError);

  Rng rng(1);
  CHECK_THROWS_AS(sym_eigen(random_symmetric(12, rng), 1), NoConvergence);
}

TEST_CASE("row_normalize gives unit rows and flags zero rows", "[linalg]") {
  Matrix h(3, 2);
  h << 3, 4, -1, 0, 0.5, 0.5;
  const Matrix n = row_normalize(h);
  for (int i = 0; i < 3; ++i) CHECK_THAT(n.row(i).norm(), WithinAbs(1.0, 1e-15));
  CHECK_THAT(n(0, 0), WithinAbs(0.6, 1e-15));

  h.row(1).setZero();
  try {
    row_normalize(h);
    FAIL("expected ZeroRow");
  } catch (const ZeroRow& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("scaled gram of normalized rows has unit trace", "[linalg]") {
  Rng rng(9);
  Matrix h(20, 5);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 5; ++j) h(i, j) = rng.normal();
  const Matrix c = gram_scaled(row_normalize(h));
  CHECK_THAT(c.trace(), WithinAbs(1.0, 1e-14));
  CHECK(c == c.transpose());
  CHECK_THROWS_AS(gram_scaled(row_normalize(h.topRows(1))), DimensionError);
}

TEST_CASE("spectrum clamps round-off negatives but rejects real ones", "[linalg]") {
  const auto ok = Spectrum<double>::from_eigenvalues({0.7, -1e-14, 0.3});
  const Vector clamped = ok.clamped_eigenvalues();
  CHECK(clamped[0] == 0.7);
  CHECK(clamped[2] == 0.0);

  const auto bad = Spectrum<double>::from_eigenvalues({1.0, -1e-6});
  CHECK_THROWS_AS(bad.clamped_eigenvalues(), NotPsd);
}

TEST_CASE("matrix csv round-trips bit-exactly", "[linalg][io]") {
  Rng rng(2);
  Matrix m(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = rng.normal() * 1e3;
  std::stringstream buf;
  write_matrix_csv(buf, m);
  CHECK(read_matrix_csv(buf) == m);
}

TEST_CASE("matrix csv errors carry line numbers", "[linalg][io]") {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_matrix_csv(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("2,2\n1,2\n3\n") == 3);
  CHECK(line_of("2,2\n1,2\n3,abc\n") == 3);
  CHECK(line_of("2,2\n1,2\n") == 2);
  CHECK(line_of("1,2\n1,2\n9,9\n") == 3);
  CHECK(line_of("rows\n") == 1);
  CHECK(line_of("1,1\nnan\n") == 2);

  std::istringstream blank("2,1\n\n5\n\n6\n");
  const Matrix m = read_matrix_csv(blank);
  CHECK(m(1, 0) == 6);
}
