#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "trackfusion/errors.hpp"

namespace trackfusion {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

/// Engine used for every random draw in the library.
using Rng = std::mt19937_64;

/// Relative eigenvalue tolerance for accepting a matrix as PSD: the
/// smallest eigenvalue may be as low as -kPsdRelTol * (largest eigenvalue).
inline constexpr double kPsdRelTol = 1e-10;

template <typename Derived>
Matrix<typename Derived::Scalar> symmetrize(const Eigen::MatrixBase<Derived>& a) {
  return (a + a.transpose()) / typename Derived::Scalar(2);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& a) {
  return a.allFinite();
}

/// True when `a` is square, finite, and its symmetric part passes the
/// relative eigenvalue test.
template <typename Derived>
bool is_psd(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols() || !a.allFinite()) return false;
  if (a.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrize(a), Eigen::EigenvaluesOnly);
  const Scalar max_eig = es.eigenvalues().maxCoeff();
  const Scalar min_eig = es.eigenvalues().minCoeff();
  return min_eig >= -Scalar(kPsdRelTol) * std::max(max_eig, Scalar(0));
}

/// Symmetrizes `a` and throws InvalidArgument naming `what` if it is not PSD.
template <typename Derived>
Matrix<typename Derived::Scalar> checked_psd(const Eigen::MatrixBase<Derived>& a,
                                             const std::string& what) {
  if (!is_psd(a)) throw InvalidArgument(what + " is not symmetric positive semi-definite");
  return symmetrize(a);
}

/// Square-root factor L with L*L^T = a for symmetric PSD `a`. Uses an
/// eigendecomposition so singular matrices are allowed; negative
/// eigenvalues are clamped to zero.
template <typename Derived>
Matrix<typename Derived::Scalar> psd_sqrt(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrize(a));
  const Vector<Scalar> root = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

/// Draws mean + factor * xi with xi standard normal.
template <typename Scalar, typename Engine>
Vector<Scalar> sample_with_factor(const Vector<Scalar>& mean, const Matrix<Scalar>& factor,
                                  Engine& rng) {
  std::normal_distribution<Scalar> standard(Scalar(0), Scalar(1));
  Vector<Scalar> xi(factor.cols());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = standard(rng);
  return mean + factor * xi;
}

template <typename Scalar, typename Engine>
Vector<Scalar> sample_gaussian(const Vector<Scalar>& mean, const Matrix<Scalar>& cov,
                               Engine& rng) {
  return sample_with_factor<Scalar>(mean, psd_sqrt(cov), rng);
}

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for stream `(a, b)` under `master`. Distinct index pairs give
/// statistically independent streams.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0) {
  return mix64(mix64(mix64(master) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.398942280401432677939946;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// Inverse standard normal CDF for p in (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal_quantile: p must lie in (0, 1)");
  // Acklam's rational approximation, then one Halley step against erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace trackfusion
