#pragma once

#include <concepts>
#include <cstdint>
#include <string>

#include <Eigen/QR>

#include "trackfusion/linalg.hpp"

namespace trackfusion {

/// Log-space on-board indices recorded at one time (weeks).
template <typename Scalar>
struct OnboardIndex {
  Vector<Scalar> values;
  Scalar time = Scalar(0);
  std::string segment_id;
};

/// Linear-Gaussian sensor model: y | z ~ N(H z + b, R).
template <typename Scalar>
struct ObservationModel {
  Matrix<Scalar> sensitivity;  // H, m x n
  Vector<Scalar> bias;         // b, m
  Matrix<Scalar> noise_cov;    // R, m x m

  Eigen::Index state_dim() const { return sensitivity.cols(); }
  Eigen::Index index_dim() const { return sensitivity.rows(); }
};

template <typename Scalar>
ObservationModel<Scalar> validated(const ObservationModel<Scalar>& model) {
  const Eigen::Index m = model.sensitivity.rows();
  if (m < 1 || model.sensitivity.cols() < 1) {
    throw InvalidArgument("observation model: empty sensitivity matrix");
  }
  if (model.bias.size() != m || model.noise_cov.rows() != m || model.noise_cov.cols() != m) {
    throw InvalidArgument("observation model: inconsistent dimensions");
  }
  if (!model.sensitivity.allFinite() || !model.bias.allFinite()) {
    throw InvalidArgument("observation model: non-finite sensitivity or bias");
  }
  ObservationModel<Scalar> out = model;
  out.noise_cov = checked_psd(model.noise_cov, "measurement noise covariance");
  return out;
}

/// Paired reference / on-board rows recorded at the same locations and times.
template <typename Scalar>
struct PairedDataset {
  Matrix<Scalar> z_rows;  // N x n
  Matrix<Scalar> y_rows;  // N x m
};

/// Mean on-board indices H z + b.
template <typename Scalar, typename Derived>
Vector<Scalar> predict_indices(const Eigen::MatrixBase<Derived>& z,
                               const ObservationModel<Scalar>& model) {
  if (z.size() != model.state_dim() || model.bias.size() != model.index_dim()) {
    throw InvalidArgument("predict_indices: dimension mismatch");
  }
  return model.sensitivity * z + model.bias;
}

/// Fits H, b by least squares on the augmented design [Z | 1] and R as the
/// maximum-likelihood zero-mean covariance of the residuals (divisor N).
template <typename Scalar>
ObservationModel<Scalar> calibrate(const PairedDataset<Scalar>& data) {
  const Eigen::Index rows = data.z_rows.rows();
  const Eigen::Index n = data.z_rows.cols();
  const Eigen::Index m = data.y_rows.cols();
  if (data.y_rows.rows() != rows) {
    throw InvalidArgument("calibrate: reference and on-board row counts differ");
  }
  if (n < 1 || m < 1) throw InvalidArgument("calibrate: need at least one column on each side");
  if (rows < n + 2) {
    throw InsufficientData("calibrate: need at least " + std::to_string(n + 2) +
                           " rows, got " + std::to_string(rows));
  }
  if (!data.z_rows.allFinite() || !data.y_rows.allFinite()) {
    throw InvalidArgument("calibrate: non-finite entries in dataset");
  }

  Matrix<Scalar> design(rows, n + 1);
  design << data.z_rows, Matrix<Scalar>::Ones(rows, 1);
  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(design);
  if (qr.rank() < n + 1) {
    throw DegenerateDesign("calibrate: design matrix [Z | 1] is rank deficient (rank " +
                           std::to_string(qr.rank()) + " < " + std::to_string(n + 1) + ")");
  }
  const Matrix<Scalar> coeffs = qr.solve(data.y_rows);  // (n+1) x m
  const Matrix<Scalar> residuals = data.y_rows - design * coeffs;

  ObservationModel<Scalar> model;
  model.sensitivity = coeffs.topRows(n).transpose();
  model.bias = coeffs.row(n).transpose();
  model.noise_cov = symmetrize(residuals.transpose() * residuals / Scalar(rows));
  return model;
}

/// One draw of the on-board indices for true state `z`.
template <typename Scalar, typename Derived, std::uniform_random_bit_generator Engine>
Vector<Scalar> sample_index(const Eigen::MatrixBase<Derived>& z,
                            const ObservationModel<Scalar>& model, Engine& rng) {
  Vector<Scalar> mean = predict_indices(z, model);
  return sample_gaussian<Scalar>(mean, model.noise_cov, rng);
}

template <typename Scalar, typename Derived>
Vector<Scalar> sample_index(const Eigen::MatrixBase<Derived>& z,
                            const ObservationModel<Scalar>& model, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  return sample_index(z, model, rng);
}

}  // namespace trackfusion
