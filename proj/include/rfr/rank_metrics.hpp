#pragma once

#include <cmath>
#include <string>

#include "rfr/linalg.hpp"

namespace rfr {

/// Eigenvalues are clamped to this before taking logs in the RFR loss.
inline constexpr double kLogClamp = 1e-12;
/// Allowed deviation of the eigenvalue sum from 1 before erank refuses.
inline constexpr double kSimplexTolerance = 1e-6;

template <typename Scalar>
struct RankReport {
  int algebraic_rank = 0;
  int trank = 0;
  Scalar erank = 1;
  Scalar rho = 1;
  DenseVector<Scalar> eigenvalues;  // descending, PSD-clamped
};

template <typename Scalar>
struct RfrGradient {
  Scalar loss = 0;               // sum_i lambda_i log lambda_i, in [-log d, 0]
  DenseMatrix<Scalar> grad_h;    // d loss / d H_raw
};

namespace detail {

template <typename Scalar>
DenseVector<Scalar> floored(const Spectrum<Scalar>& spec) {
  DenseVector<Scalar> lambda = spec.clamped_eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda[i] <= Scalar(kNoiseFloor)) lambda[i] = Scalar(0);
  return lambda;
}

inline void check_rho(double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw BadRho("rho must lie in (0, 1], got " + std::to_string(rho));
}

}  // namespace detail

/// Number of eigenvalues above the noise floor.
template <typename Scalar>
int algebraic_rank(const Spectrum<Scalar>& spec) {
  const auto lambda = detail::floored(spec);
  int count = 0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda[i] > Scalar(0)) ++count;
  return count;
}

/// Smallest k whose leading eigenvalues hold at least `rho` of the total energy.
template <typename Scalar>
int trank(const Spectrum<Scalar>& spec, Scalar rho) {
  detail::check_rho(static_cast<double>(rho));
  const auto lambda = detail::floored(spec);
  // same summation order as the prefix below, so rho = 1 stops at the last nonzero value
  Scalar total = 0;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) total += lambda[k];
  if (total <= Scalar(0)) return 0;
  const Scalar threshold = rho * total;
  Scalar cumulative = 0;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    cumulative += lambda[k];
    if (cumulative >= threshold) return static_cast<int>(k + 1);
  }
  return static_cast<int>(lambda.size());
}

/// exp(-sum lambda log lambda) with 0 log 0 = 0. The eigenvalues must sum to 1.
template <typename Scalar>
Scalar erank(const Spectrum<Scalar>& spec) {
  const auto lambda = detail::floored(spec);
  const Scalar total = spec.clamped_eigenvalues().sum();
  if (std::abs(total - Scalar(1)) > Scalar(kSimplexTolerance))
    throw BadSimplex("eigenvalues sum to " + std::to_string(static_cast<double>(total)) +
                     ", expected 1");
  Scalar entropy = 0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda[i] > Scalar(0)) entropy -= lambda[i] * std::log(lambda[i]);
  return std::exp(entropy);
}

/// Spectrum of the scaled Gram matrix of the row-normalized representations.
template <typename Derived>
Spectrum<typename Derived::Scalar> representation_spectrum(const Eigen::MatrixBase<Derived>& h_raw) {
  return sym_eigen(gram_scaled(row_normalize(h_raw)));
}

template <typename Derived>
RankReport<typename Derived::Scalar> rank_report(const Eigen::MatrixBase<Derived>& h_raw,
                                                 typename Derived::Scalar rho) {
  using Scalar = typename Derived::Scalar;
  detail::check_rho(static_cast<double>(rho));
  const auto spec = representation_spectrum(h_raw);
  RankReport<Scalar> report;
  report.algebraic_rank = algebraic_rank(spec);
  report.trank = trank(spec, rho);
  report.erank = erank(spec);
  report.rho = rho;
  report.eigenvalues = spec.clamped_eigenvalues();
  return report;
}

template <typename Derived>
typename Derived::Scalar effective_rank(const Eigen::MatrixBase<Derived>& h_raw) {
  return erank(representation_spectrum(h_raw));
}

/// RFR loss sum_i lambda_i log lambda_i of the normalized representations and
/// its exact gradient with respect to the raw (pre-normalization) rows.
///
/// The chain is H -> row normalization -> C = Hn^T Hn / N -> eigenvalues.
/// With C = V diag(lambda) V^T, dLoss/dC = V diag(1 + log lambda) V^T,
/// dLoss/dHn = (2/N) Hn dLoss/dC, and each row is pulled back through
/// (I - hn hn^T) / |h|. Eigenvalues are clamped at 1e-12 inside the log and
/// the clamped loss is what the gradient differentiates.
template <typename Derived>
RfrGradient<typename Derived::Scalar> rfr_loss_and_grad(const Eigen::MatrixBase<Derived>& h_raw) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = h_raw.rows();
  const Eigen::Index d = h_raw.cols();
  if (n <= d)
    throw DimensionError("RFR loss needs more rows than columns (N > d), got N=" +
                         std::to_string(n) + ", d=" + std::to_string(d));

  const DenseMatrix<Scalar> h_norm = row_normalize(h_raw);
  const Spectrum<Scalar> spec = sym_eigen(gram_scaled(h_norm));

  RfrGradient<Scalar> out;
  DenseVector<Scalar> dloss_dlambda(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Scalar lambda = std::max(spec.eigenvalues[i], Scalar(kLogClamp));
    const Scalar log_lambda = std::log(lambda);
    out.loss += lambda * log_lambda;
    dloss_dlambda[i] = Scalar(1) + log_lambda;
  }

  const DenseMatrix<Scalar>& v = spec.eigenvectors;
  const DenseMatrix<Scalar> dloss_dc = v * dloss_dlambda.asDiagonal() * v.transpose();
  const DenseMatrix<Scalar> dloss_dhn = (Scalar(2) / static_cast<Scalar>(n)) * h_norm * dloss_dc;

  out.grad_h.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar norm = h_raw.row(i).norm();
    const auto g = dloss_dhn.row(i);
    const Scalar radial = g.dot(h_norm.row(i));
    out.grad_h.row(i) = (g - radial * h_norm.row(i)) / norm;
  }
  return out;
}

/// Stable-key-order JSON rendering of a report: rank, trank, erank, rho, eigenvalues.
std::string rank_report_json(const RankReport<double>& report);

}  // namespace rfr
