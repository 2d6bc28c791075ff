#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <numeric>
#include <string>
#include <vector>

#include "rfr/errors.hpp"

namespace rfr {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = DenseMatrix<double>;
using Vector = DenseVector<double>;

/// Row norms below this are treated as zero vectors.
inline constexpr double kZeroRowNorm = 1e-12;
/// Eigenvalues at or below this are noise when counting rank.
inline constexpr double kNoiseFloor = 1e-12;
/// Negative eigenvalues of a PSD input within this band are read as zero.
inline constexpr double kPsdTolerance = 1e-10;
inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr int kMaxEigenDim = 512;
inline constexpr int kMaxJacobiSweeps = 100;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NonFinite(std::string(what) + ": matrix contains NaN or Inf");
}

/// Builds a row-major matrix from flat data, validating shape and finiteness.
template <typename Scalar = double>
DenseMatrix<Scalar> make_dense(Eigen::Index rows, Eigen::Index cols, const std::vector<Scalar>& data) {
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    throw DimensionError("data length " + std::to_string(data.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  DenseMatrix<Scalar> m = Eigen::Map<const DenseMatrix<Scalar>>(data.data(), rows, cols);
  require_finite(m, "make_dense");
  return m;
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
template <typename Scalar>
struct Spectrum {
  DenseVector<Scalar> eigenvalues;
  DenseMatrix<Scalar> eigenvectors;  // column i pairs with eigenvalues[i]

  Eigen::Index source_dim() const { return eigenvalues.size(); }

  /// Eigenvalues with the PSD round-off band clamped to zero.
  DenseVector<Scalar> clamped_eigenvalues() const {
    DenseVector<Scalar> out = eigenvalues;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (out[i] < Scalar(0)) {
        if (out[i] < Scalar(-kPsdTolerance))
          throw NotPsd("eigenvalue " + std::to_string(static_cast<double>(out[i])) +
                       " below -" + std::to_string(kPsdTolerance));
        out[i] = Scalar(0);
      }
    }
    return out;
  }

  /// Spectrum with the given eigenvalues (sorted) and the identity basis.
  static Spectrum from_eigenvalues(std::vector<Scalar> values) {
    std::sort(values.begin(), values.end(), std::greater<Scalar>());
    Spectrum s;
    s.eigenvalues = Eigen::Map<const DenseVector<Scalar>>(values.data(),
                                                         static_cast<Eigen::Index>(values.size()));
    s.eigenvectors = DenseMatrix<Scalar>::Identity(s.eigenvalues.size(), s.eigenvalues.size());
    return s;
  }
};

/// Scales every row of H to unit L2 norm. Throws ZeroRow on a (near) zero row.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> row_normalize(const Eigen::MatrixBase<Derived>& h) {
  using Scalar = typename Derived::Scalar;
  require_finite(h, "row_normalize");
  DenseMatrix<Scalar> out = h;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar norm = out.row(i).norm();
    if (!(norm >= Scalar(kZeroRowNorm))) throw ZeroRow(static_cast<std::size_t>(i));
    out.row(i) /= norm;
  }
  return out;
}

/// C = H^T H / N for row-normalized H. Requires N >= 2.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> gram_scaled(const Eigen::MatrixBase<Derived>& h_norm) {
  using Scalar = typename Derived::Scalar;
  if (h_norm.rows() < 2)
    throw DimensionError("gram_scaled needs at least 2 rows, got " + std::to_string(h_norm.rows()));
  DenseMatrix<Scalar> c = h_norm.transpose() * h_norm;
  c /= static_cast<Scalar>(h_norm.rows());
  // Symmetrize away round-off in the product.
  DenseMatrix<Scalar> sym = (c + c.transpose()) * Scalar(0.5);
  return sym;
}

namespace detail {

template <typename Scalar>
Scalar off_diagonal_norm(const DenseMatrix<Scalar>& a) {
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (i != j) sum += a(i, j) * a(i, j);
  return std::sqrt(sum);
}

}  // namespace detail

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps rotate every (p, q) pair until the off-diagonal Frobenius norm
/// falls to 1e-12 of the input norm; throws NoConvergence after
/// `max_sweeps`. Eigenvalues are returned descending.
template <typename Derived>
Spectrum<typename Derived::Scalar> sym_eigen(const Eigen::MatrixBase<Derived>& input,
                                             int max_sweeps = kMaxJacobiSweeps) {
  using Scalar = typename Derived::Scalar;
  using Index = Eigen::Index;
  if (input.rows() != input.cols())
    throw DimensionError("sym_eigen needs a square matrix, got " + std::to_string(input.rows()) +
                         "x" + std::to_string(input.cols()));
  if (input.rows() > kMaxEigenDim)
    throw DimensionError("sym_eigen supports dim <= " + std::to_string(kMaxEigenDim));
  require_finite(input, "sym_eigen");

  DenseMatrix<Scalar> a = input;
  const Index n = a.rows();
  const Scalar scale = std::max(Scalar(1), a.cwiseAbs().maxCoeff());
  if (n > 0 && (a - a.transpose()).cwiseAbs().maxCoeff() > Scalar(kSymmetryTolerance) * scale)
    throw NotSymmetric("sym_eigen input is not symmetric within tolerance");

  DenseMatrix<Scalar> v = DenseMatrix<Scalar>::Identity(n, n);
  const Scalar target = Scalar(1e-12) * a.norm();

  bool converged = detail::off_diagonal_norm(a) <= target;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar tau = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (tau >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(tau) + std::sqrt(Scalar(1) + tau * tau));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = t * c;
        for (Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = Scalar(0);
        a(q, p) = Scalar(0);
        for (Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p);
          const Scalar vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = detail::off_diagonal_norm(a) <= target;
  }
  if (!converged)
    throw NoConvergence("Jacobi did not converge within " + std::to_string(max_sweeps) + " sweeps");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return a(i, i) > a(j, j); });

  Spectrum<Scalar> out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Index k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.eigenvectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

// CSV matrix format: first line "rows,cols", then one comma-separated line per row.
Matrix read_matrix_csv(std::istream& in);
Matrix read_matrix_csv_file(const std::string& path);
void write_matrix_csv(std::ostream& out, const Matrix& m);
void write_matrix_csv_file(const std::string& path, const Matrix& m);

}  // namespace rfr
