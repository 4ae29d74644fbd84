#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "trackfusion/measurement.hpp"

namespace trackfusion {
namespace {

ObservationModel<double> diag_model() {
  ObservationModel<double> model;
  model.sensitivity = MatrixXd(2, 2);
  model.sensitivity << 2, 0, 0, 3;
  model.bias = VectorXd(2);
  model.bias << 1, -1;
  model.noise_cov = MatrixXd::Zero(2, 2);
  return model;
}

TEST(PredictIndices, IdentityAndConstantModels) {
  ObservationModel<double> identity{MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd::Zero(2, 2)};
  const Eigen::Vector2d z(1.2, 0.7);
  EXPECT_EQ(predict_indices(z, identity), VectorXd(z));

  ObservationModel<double> constant{MatrixXd::Zero(3, 2), Eigen::Vector3d(0.1, 0.2, 0.3),
                                    MatrixXd::Zero(3, 3)};
  EXPECT_EQ(predict_indices(z, constant), constant.bias);
}

TEST(PredictIndices, HandExpandedProduct) {
  const Eigen::Vector2d z(0.5, 1.0);
  const auto y = predict_indices(z, diag_model());
  // 2*0.5 + 0*1 + 1 = 2 ; 0*0.5 + 3*1 - 1 = 2
  EXPECT_DOUBLE_EQ(y[0], 2.0 * 0.5 + 0.0 * 1.0 + 1.0);
  EXPECT_DOUBLE_EQ(y[1], 0.0 * 0.5 + 3.0 * 1.0 - 1.0);
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
  EXPECT_THROW(predict_indices(Eigen::Vector3d(1, 2, 3), diag_model()), InvalidArgument);
}

TEST(Calibrate, ScalarClosedFormRegression) {
  PairedDataset<double> data{MatrixXd(3, 1), MatrixXd(3, 1)};
  data.z_rows << 0, 1, 2;
  data.y_rows << 1, 3, 5;
  const auto model = calibrate(data);
  // slope = cov(z, y) / var(z) = (4/3) / (2/3) = 2, intercept = 3 - 2 * 1 = 1
  EXPECT_NEAR(model.sensitivity(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(model.bias[0], 1.0, 1e-12);
  EXPECT_NEAR(model.noise_cov(0, 0), 0.0, 1e-20);
}

TEST(Calibrate, NoiselessRecovery) {
  std::mt19937_64 rng(3);
  const MatrixXd H = testing::random_matrix(3, 2, rng);
  const VectorXd b = testing::random_vector(3, rng);
  PairedDataset<double> data{testing::random_matrix(50, 2, rng), MatrixXd()};
  data.y_rows = (data.z_rows * H.transpose()).rowwise() + b.transpose();
  const auto model = calibrate(data);
  EXPECT_LT((model.sensitivity - H).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((model.bias - b).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(model.noise_cov.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Calibrate, NoisyRecoveryOfNoiseCovariance) {
  std::mt19937_64 rng(4);
  const int rows = 10000;
  const MatrixXd H = testing::random_matrix(2, 2, rng);
  const VectorXd b = testing::random_vector(2, rng);
  const MatrixXd R = testing::random_spd(2, rng, 0.05);
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(R).matrixL();
  PairedDataset<double> data{testing::random_matrix(rows, 2, rng), MatrixXd(rows, 2)};
  std::normal_distribution<double> g;
  for (int r = 0; r < rows; ++r) {
    const Eigen::Vector2d noise = L * Eigen::Vector2d(g(rng), g(rng));
    data.y_rows.row(r) = (H * data.z_rows.row(r).transpose() + b + noise).transpose();
  }
  const auto model = calibrate(data);
  EXPECT_LT((model.noise_cov - R).norm() / R.norm(), 0.05);
  EXPECT_TRUE(model.sensitivity.isApprox(H, 0.05));
  EXPECT_TRUE(is_psd(model.noise_cov));
}

TEST(Calibrate, ResidualsAreOrthogonalToDesign) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + trial % 3;
    const Eigen::Index m = 1 + (trial / 3) % 3;
    PairedDataset<double> data{testing::random_matrix(30, n, rng), testing::random_matrix(30, m, rng)};
    const auto model = calibrate(data);
    MatrixXd design(30, n + 1);
    design << data.z_rows, MatrixXd::Ones(30, 1);
    const MatrixXd residuals =
        data.y_rows - ((data.z_rows * model.sensitivity.transpose()).rowwise() + model.bias.transpose());
    EXPECT_LE((design.transpose() * residuals).norm(), 1e-8 * data.y_rows.norm());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(model.noise_cov);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(Calibrate, AffineEquivarianceInIndices) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 2, m = 2;
    PairedDataset<double> data{testing::random_matrix(40, n, rng), testing::random_matrix(40, m, rng)};
    const MatrixXd A = testing::random_matrix(m, m, rng) + 2.0 * MatrixXd::Identity(m, m);
    const VectorXd c = testing::random_vector(m, rng);
    PairedDataset<double> moved{data.z_rows, (data.y_rows * A.transpose()).rowwise() + c.transpose()};
    const auto base = calibrate(data);
    const auto fit = calibrate(moved);
    EXPECT_TRUE(fit.sensitivity.isApprox(A * base.sensitivity, 1e-8));
    EXPECT_TRUE(fit.bias.isApprox(A * base.bias + c, 1e-8));
    EXPECT_TRUE(fit.noise_cov.isApprox(A * base.noise_cov * A.transpose(), 1e-8));
  }
}

TEST(Calibrate, ErrorPaths) {
  PairedDataset<double> small{MatrixXd::Zero(3, 2), MatrixXd::Zero(3, 1)};
  EXPECT_THROW(calibrate(small), InsufficientData);
  PairedDataset<double> empty{MatrixXd(0, 1), MatrixXd(0, 1)};
  EXPECT_THROW(calibrate(empty), InsufficientData);

  PairedDataset<double> collinear{MatrixXd(6, 2), MatrixXd::Ones(6, 1)};
  collinear.z_rows << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
  EXPECT_THROW(calibrate(collinear), DegenerateDesign);

  PairedDataset<double> constant_z{MatrixXd::Constant(5, 1, 2.0), MatrixXd::Ones(5, 1)};
  EXPECT_THROW(calibrate(constant_z), DegenerateDesign);

  PairedDataset<double> mismatched{MatrixXd::Zero(5, 1), MatrixXd::Zero(4, 1)};
  EXPECT_THROW(calibrate(mismatched), InvalidArgument);
}

TEST(SampleIndex, NoiselessSensorReturnsMean) {
  const Eigen::Vector2d z(0.3, -0.2);
  const auto model = diag_model();
  EXPECT_EQ(sample_index(z, model, std::uint64_t{8}), predict_indices(z, model));
}

TEST(SampleIndex, FixedSeedReproduces) {
  auto model = diag_model();
  model.noise_cov = MatrixXd::Identity(2, 2) * 0.1;
  const Eigen::Vector2d z(0.3, -0.2);
  EXPECT_EQ(sample_index(z, model, std::uint64_t{8}), sample_index(z, model, std::uint64_t{8}));
  EXPECT_NE(sample_index(z, model, std::uint64_t{8}), sample_index(z, model, std::uint64_t{9}));
}

TEST(SampleIndex, MomentsMatchModel) {
  auto model = diag_model();
  model.noise_cov = MatrixXd(2, 2);
  model.noise_cov << 0.04, 0.01, 0.01, 0.09;
  const Eigen::Vector2d z(0.3, -0.2);
  const VectorXd mean = predict_indices(z, model);
  Rng rng(10);
  constexpr int draws = 100000;
  MatrixXd samples(draws, 2);
  for (int i = 0; i < draws; ++i) samples.row(i) = sample_index(z, model, rng).transpose();
  const Eigen::RowVectorXd sample_mean = samples.colwise().mean();
  const MatrixXd centered = samples.rowwise() - sample_mean;
  const MatrixXd cov = centered.transpose() * centered / (draws - 1);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(std::abs(sample_mean[i] - mean[i]), 3.0 * std::sqrt(model.noise_cov(i, i) / draws));
  }
  EXPECT_LT((cov - model.noise_cov).norm() / model.noise_cov.norm(), 0.05);
}

}  // namespace
}  // namespace trackfusion
