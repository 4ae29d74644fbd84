#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Cholesky>

#include "support/oracles.hpp"
#include "trackfusion/degradation.hpp"

namespace trackfusion {
namespace {

DegradationParams<double> two_dim_params() {
  DegradationParams<double> p;
  p.drift = VectorXd(2);
  p.drift << 0.05, 0.03;
  p.diffusion = MatrixXd(2, 2);
  p.diffusion << 0.01, 0.004, 0.004, 0.008;
  p.post_tamping_mean = VectorXd(2);
  p.post_tamping_mean << 1.1, 0.9;
  p.post_tamping_cov = MatrixXd(2, 2);
  p.post_tamping_cov << 0.02, 0.0, 0.0, 0.03;
  return p;
}

GeometryState<double> state(VectorXd v, double t = 0.0) { return {std::move(v), t, "seg"}; }

TEST(StepDistribution, ZeroDriftScalesDiffusion) {
  auto p = two_dim_params();
  p.drift.setZero();
  const auto step = step_distribution(state(VectorXd::Zero(2)), 4.0, p, false);
  EXPECT_TRUE(step.mean.isZero(0.0));
  EXPECT_TRUE(step.cov.isApprox(4.0 * p.diffusion, 1e-15));
}

TEST(StepDistribution, MaintainedBranchRestartsFromPostTampingState) {
  const auto p = two_dim_params();
  const double dt = 3.0;
  VectorXd a(2), b(2);
  a << 2.5, -1.0;
  b << -7.0, 4.0;
  const auto sa = step_distribution(state(a), dt, p, true);
  const auto sb = step_distribution(state(b), dt, p, true);
  const VectorXd expected = p.post_tamping_mean + 0.5 * p.drift * dt;
  EXPECT_TRUE(sa.mean.isApprox(expected, 1e-15));
  EXPECT_TRUE(sa.cov.isApprox(p.post_tamping_cov + 0.5 * dt * p.diffusion, 1e-15));
  // Literal equality: the previous value is discarded.
  EXPECT_EQ(sa.mean, sb.mean);
  EXPECT_EQ(sa.cov, sb.cov);
}

TEST(StepDistribution, RejectsBadInput) {
  auto p = two_dim_params();
  EXPECT_THROW(step_distribution(state(VectorXd::Zero(2)), 0.0, p, false), InvalidArgument);
  EXPECT_THROW(step_distribution(state(VectorXd::Zero(2)), -1.0, p, false), InvalidArgument);
  p.diffusion(0, 0) = -0.1;
  EXPECT_THROW(step_distribution(state(VectorXd::Zero(2)), 1.0, p, false), InvalidArgument);
  EXPECT_THROW(step_distribution(state(VectorXd::Zero(3)), 1.0, two_dim_params(), false),
               InvalidArgument);
}

TEST(StepDistribution, MarkovCompositionIsAdditive) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + trial % 3;
    DegradationParams<double> p{testing::random_vector(n, rng), testing::random_spd(n, rng),
                                testing::random_vector(n, rng), testing::random_spd(n, rng)};
    const auto start = state(testing::random_vector(n, rng));
    const double dt1 = 0.3 + trial * 0.1;
    const double dt2 = 1.7;
    const auto one = step_distribution(start, dt1, p, false);
    const auto two = step_distribution(state(one.mean), dt2, p, false);
    const auto direct = step_distribution(start, dt1 + dt2, p, false);
    EXPECT_TRUE(two.mean.isApprox(direct.mean, 1e-12));
    EXPECT_TRUE((one.cov + two.cov).isApprox(direct.cov, 1e-12));
    EXPECT_TRUE(direct.cov.isApprox(direct.cov.transpose(), 0.0));
    EXPECT_TRUE(is_psd(direct.cov));
  }
}

// Euler-Maruyama with its own Cholesky factor, 10 sub-steps per unit time.
TEST(StepDistribution, MeanMatchesEulerMaruyamaOracle) {
  const auto p = two_dim_params();
  VectorXd v(2);
  v << 1.5, 0.4;
  const auto step = step_distribution(state(v), 1.0, p, false);

  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(p.diffusion).matrixL();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  constexpr int paths = 100000;
  constexpr int substeps = 10;
  const double h = 1.0 / substeps;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < paths; ++i) {
    Eigen::VectorXd x = v;
    for (int s = 0; s < substeps; ++s) {
      Eigen::Vector2d xi(g(rng), g(rng));
      x += p.drift * h + std::sqrt(h) * chol * xi;
    }
    sum += x;
    sum_sq += x.cwiseProduct(x);
  }
  const Eigen::VectorXd mean = sum / paths;
  const Eigen::VectorXd var = sum_sq / paths - mean.cwiseProduct(mean);
  for (int i = 0; i < 2; ++i) {
    const double se = std::sqrt(var[i] / paths);
    EXPECT_LT(std::abs(mean[i] - step.mean[i]), 3.0 * se) << "coordinate " << i;
  }
}

TEST(SimulatePath, NoiselessPathIsDeterministicDrift) {
  auto p = two_dim_params();
  p.diffusion.setZero();
  p.post_tamping_cov.setZero();
  VectorXd z0(2);
  z0 << 0.7, 1.2;
  std::vector<double> times = {1.0, 2.5, 4.0, 10.0};
  const auto path = simulate_path<double>(state(z0), times, p, {}, std::uint64_t{5});
  ASSERT_EQ(path.size(), times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    EXPECT_TRUE(path[k].values.isApprox(z0 + p.drift * times[k], 1e-14));
    EXPECT_EQ(path[k].time, times[k]);
  }
}

TEST(SimulatePath, FixedSeedReproduces) {
  const auto p = two_dim_params();
  std::vector<double> times = {1, 2, 3, 4, 5};
  const auto schedule = MaintenanceSchedule::from_interval_indices(times, {3});
  const auto a = simulate_path<double>(state(VectorXd::Zero(2)), times, p, schedule, std::uint64_t{99});
  const auto b = simulate_path<double>(state(VectorXd::Zero(2)), times, p, schedule, std::uint64_t{99});
  const auto c = simulate_path<double>(state(VectorXd::Zero(2)), times, p, schedule, std::uint64_t{100});
  for (std::size_t k = 0; k < times.size(); ++k) {
    EXPECT_EQ(a[k].values, b[k].values);
  }
  EXPECT_NE(a.back().values, c.back().values);
}

TEST(SimulatePath, TampingResetsTowardsPostTampingState) {
  auto p = two_dim_params();
  p.diffusion.setZero();
  p.post_tamping_cov.setZero();
  std::vector<double> times = {1, 2, 3, 4};
  const auto schedule = MaintenanceSchedule::from_interval_indices(times, {3});
  VectorXd z0(2);
  z0 << 3.0, 3.0;
  const auto path = simulate_path<double>(state(z0), times, p, schedule, std::uint64_t{1});
  EXPECT_TRUE(path[2].values.isApprox(p.post_tamping_mean + 0.5 * p.drift, 1e-14));
  EXPECT_TRUE(path[3].values.isApprox(p.post_tamping_mean + 1.5 * p.drift, 1e-14));
}

TEST(SimulatePath, RejectsNonAscendingTimes) {
  const auto p = two_dim_params();
  std::vector<double> times = {1, 3, 2};
  EXPECT_THROW(simulate_path<double>(state(VectorXd::Zero(2)), times, p, {}, std::uint64_t{1}),
               InvalidArgument);
  std::vector<double> before_start = {0.0, 1.0};
  EXPECT_THROW(simulate_path<double>(state(VectorXd::Zero(2)), before_start, p, {}, std::uint64_t{1}),
               InvalidArgument);
}

TEST(MaintenanceSchedule, OneEventPerInterval) {
  const MaintenanceSchedule schedule({4.0, 6.0});
  EXPECT_TRUE(schedule.maintained(3.0, 4.0));
  EXPECT_FALSE(schedule.maintained(4.0, 5.0));
  EXPECT_THROW(schedule.maintained(3.0, 7.0), InvalidArgument);
  EXPECT_THROW(MaintenanceSchedule({2.0, 2.0}), InvalidArgument);
  std::vector<double> times = {1, 2};
  EXPECT_THROW(MaintenanceSchedule::from_interval_indices(times, {3}), InvalidArgument);
}

// Moment-matching oracle over the replication ensemble.
TEST(SimulatePath, IncrementMomentsMatchWienerModel) {
  DegradationParams<double> p;
  p.drift = Eigen::Vector2d(0.05, 0.03);
  p.diffusion = Eigen::Vector2d(0.01, 0.01).asDiagonal();
  p.post_tamping_mean = VectorXd::Zero(2);
  p.post_tamping_cov = MatrixXd::Zero(2, 2);
  std::vector<double> times;
  for (int k = 1; k <= 52; ++k) times.push_back(k);
  constexpr int reps = 10000;
  Eigen::MatrixXd inc(reps, 2);
  for (int r = 0; r < reps; ++r) {
    const auto path = simulate_path<double>(state(VectorXd::Zero(2)), times, p, {},
                                            derive_seed(42, r));
    inc.row(r) = path.back().values.transpose();
  }
  const Eigen::RowVectorXd mean = inc.colwise().mean();
  const Eigen::MatrixXd centered = inc.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / (reps - 1);
  const Eigen::MatrixXd expected_cov = 52.0 * p.diffusion;
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(std::abs(mean[i] - 52.0 * p.drift[i]), 3.0 * std::sqrt(cov(i, i) / reps));
  }
  EXPECT_LT((cov - expected_cov).norm() / expected_cov.norm(), 0.05);
}

TEST(SimulatePath, FloatScalarInstantiates) {
  DegradationParams<float> p{Eigen::VectorXf::Constant(1, 0.1f), Eigen::MatrixXf::Zero(1, 1),
                             Eigen::VectorXf::Zero(1), Eigen::MatrixXf::Zero(1, 1)};
  GeometryState<float> s{Eigen::VectorXf::Zero(1), 0.0f, "f"};
  std::vector<float> times = {1.0f, 2.0f};
  const auto path = simulate_path<float>(s, times, p, {}, std::uint64_t{3});
  EXPECT_NEAR(path.back().values[0], 0.2f, 1e-6f);
}

}  // namespace
}  // namespace trackfusion
