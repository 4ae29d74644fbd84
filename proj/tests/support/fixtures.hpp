#pragma once

#include "trackfusion/montecarlo.hpp"

namespace trackfusion::testing {

/// Two-indicator synthetic setup (Top, Alignment in log-mm).
inline DegradationParams<double> synthetic_params() {
  DegradationParams<double> p;
  p.drift = Eigen::Vector2d(0.012, 0.008);
  p.diffusion = MatrixXd(2, 2);
  p.diffusion << 0.010, 0.002, 0.002, 0.008;
  p.post_tamping_mean = Eigen::Vector2d(std::log(8.0), std::log(7.0));
  p.post_tamping_cov = MatrixXd(2, 2);
  p.post_tamping_cov << 0.02, 0.0, 0.0, 0.02;
  return p;
}

inline ObservationModel<double> synthetic_model() {
  ObservationModel<double> m;
  m.sensitivity = MatrixXd(2, 2);
  m.sensitivity << 0.9, 0.1, 0.05, 0.85;
  m.bias = Eigen::Vector2d(-0.3, -0.2);
  m.noise_cov = MatrixXd(2, 2);
  m.noise_cov << 0.012, 0.002, 0.002, 0.010;
  return m;
}

inline ExperimentConfig synthetic_experiment(int replications = 4, std::uint64_t seed = 2024) {
  ExperimentConfig cfg;
  cfg.horizon = 52.0;
  cfg.measurement_interval = 1.0;
  cfg.n_replications = replications;
  cfg.initial_state = {Eigen::Vector2d(std::log(12.0), std::log(10.0)), 0.0, "synthetic"};
  cfg.params = {synthetic_params()};
  cfg.observation_model = synthetic_model();
  cfg.rng_master_seed = seed;
  cfg.threads = 2;
  return cfg;
}

}  // namespace trackfusion::testing
