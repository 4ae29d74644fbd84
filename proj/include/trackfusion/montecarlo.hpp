#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trackfusion/fusion.hpp"

namespace trackfusion {

/// Settings of one synthetic measurement-frequency experiment. A single
/// entry in `params` runs plain filters; several entries are treated as
/// posterior samples and reduced to mixture moments.
struct ExperimentConfig {
  double horizon = 52.0;
  double measurement_interval = 1.0;
  int n_replications = 1;
  GeometryState<double> initial_state;
  std::vector<DegradationParams<double>> params;
  ObservationModel<double> observation_model;
  std::uint64_t rng_master_seed = 0;
  MaintenanceSchedule maintenance;
  /// Grid times at which an exact reference record (the simulated truth)
  /// replaces the on-board event.
  std::vector<double> extra_reference_times;
  double level = 0.95;
  /// Worker threads for replications; 0 picks the hardware concurrency.
  unsigned threads = 0;
};

/// Every violated field of `cfg`, one message each; empty when valid.
std::vector<std::string> validate(const ExperimentConfig& cfg);

/// Measurement grid t_0 + k * interval, k = 1..floor(horizon / interval).
std::vector<double> measurement_grid(double start, double horizon, double interval);

struct FilteredPoint {
  double time = 0.0;
  EventKind kind = EventKind::Update;
  VectorXd estimate;
  MatrixXd cov;
  double width = 0.0;
};

struct Replication {
  std::vector<GeometryState<double>> truth;
  std::vector<OnboardIndex<double>> signals;
  std::vector<FilteredPoint> filtered;
};

struct ExperimentResult {
  std::vector<double> times;
  std::vector<Replication> replications;
  /// Across-replication averages per grid time.
  std::vector<double> mean_width;
  std::vector<MatrixXd> mean_cov;
  /// Degradation model alone, predicted from the initial record.
  std::vector<double> baseline_width;
  std::vector<MatrixXd> baseline_cov;
};

/// Simulates truth paths and sensor signals, filters them and collects the
/// credible-zone widths. `stream` separates the seed streams of different
/// experiments sharing one master seed.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t stream = 0);

struct IntervalSummary {
  double interval = 0.0;
  std::vector<double> times;
  std::vector<double> mean_width;
  std::vector<MatrixXd> mean_cov;
  std::vector<double> baseline_width;
  std::vector<MatrixXd> baseline_cov;
  /// Fixed point of the covariance recursion (single-parameter mode) or
  /// the terminal mean width (posterior-sample mode).
  double steady_width = 0.0;
  MatrixXd steady_cov;
  /// First grid time within 1% of the steady width; NaN when none is.
  double time_to_stabilize = 0.0;
  /// Last 10% of the series varies by less than 0.5% relative.
  bool stabilized = false;
};

struct SweepResult {
  std::vector<IntervalSummary> intervals;
  double horizon = 0.0;
  /// Model-only width at the horizon.
  double baseline_width_at_horizon = 0.0;
  MatrixXd baseline_cov_at_horizon;
};

SweepResult sweep_intervals(const ExperimentConfig& base_cfg, const std::vector<double>& intervals);

/// Relative spread (max - min) / max over the trailing 10% of `series`
/// (at least two points).
double tail_variation(const std::vector<double>& series);

/// Width in mm of the central `level` interval of a lognormal marginal
/// with log-space variance `log_var`, anchored at median `mean_mm`.
double mm_interval_width(double mean_mm, double log_var, double level);

/// Table of mm-space interval widths per series, time and coordinate
/// around the display means. Columns: series,time,width_mm_1..n.
std::string width_report(const SweepResult& sweep, const std::vector<double>& display_means,
                         double level = 0.95);

}  // namespace trackfusion
