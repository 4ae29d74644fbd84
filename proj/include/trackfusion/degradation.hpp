#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "trackfusion/linalg.hpp"

namespace trackfusion {

/// Log-space geometry indicators of one segment at one time (weeks).
template <typename Scalar>
struct GeometryState {
  Vector<Scalar> values;
  Scalar time = Scalar(0);
  std::string segment_id;
};

/// One sample of the multivariate Wiener degradation model with tamping.
/// Drift is per week, diffusion per week; the post-tamping pair describes
/// the indicator distribution right after a tamping event.
template <typename Scalar>
struct DegradationParams {
  Vector<Scalar> drift;
  Matrix<Scalar> diffusion;
  Vector<Scalar> post_tamping_mean;
  Matrix<Scalar> post_tamping_cov;

  Eigen::Index dim() const { return drift.size(); }
};

/// Returns a copy with symmetrized covariances after checking shapes,
/// finiteness and positive semi-definiteness.
template <typename Scalar>
DegradationParams<Scalar> validated(const DegradationParams<Scalar>& p) {
  const Eigen::Index n = p.drift.size();
  if (n < 1) throw InvalidArgument("degradation params: dimension must be at least 1");
  if (p.diffusion.rows() != n || p.diffusion.cols() != n || p.post_tamping_mean.size() != n ||
      p.post_tamping_cov.rows() != n || p.post_tamping_cov.cols() != n) {
    throw InvalidArgument("degradation params: inconsistent dimensions");
  }
  if (!p.drift.allFinite() || !p.post_tamping_mean.allFinite()) {
    throw InvalidArgument("degradation params: non-finite drift or post-tamping mean");
  }
  DegradationParams<Scalar> out = p;
  out.diffusion = checked_psd(p.diffusion, "diffusion");
  out.post_tamping_cov = checked_psd(p.post_tamping_cov, "post-tamping covariance");
  return out;
}

/// Tamping events, each identified by the end time of the interval
/// (t_{k-1}, t_k] it falls in. The event is taken to happen at the interval
/// midpoint; at most one event may fall in any interval.
class MaintenanceSchedule {
 public:
  MaintenanceSchedule() = default;

  explicit MaintenanceSchedule(std::vector<double> interval_end_times)
      : ends_(std::move(interval_end_times)) {
    std::sort(ends_.begin(), ends_.end());
    for (std::size_t i = 0; i < ends_.size(); ++i) {
      if (!std::isfinite(ends_[i])) throw InvalidArgument("maintenance: non-finite time");
      if (i > 0 && ends_[i] == ends_[i - 1]) {
        throw InvalidArgument("maintenance: duplicate tamping interval");
      }
    }
  }

  /// Builds a schedule from interval indices k over the grid
  /// t_0 = start_time, t_k = times[k-1]; k in [1, times.size()].
  static MaintenanceSchedule from_interval_indices(std::span<const double> times,
                                                   const std::set<int>& indices) {
    std::vector<double> ends;
    for (const int k : indices) {
      if (k < 1 || static_cast<std::size_t>(k) > times.size()) {
        throw InvalidArgument("maintenance: interval index " + std::to_string(k) +
                              " outside the timeline");
      }
      ends.push_back(times[static_cast<std::size_t>(k) - 1]);
    }
    return MaintenanceSchedule(std::move(ends));
  }

  /// True when a tamping event is scheduled in (from, to]. More than one
  /// event in that interval is an error.
  bool maintained(double from, double to) const {
    const auto lo = std::upper_bound(ends_.begin(), ends_.end(), from);
    const auto hi = std::upper_bound(ends_.begin(), ends_.end(), to);
    const auto count = std::distance(lo, hi);
    if (count > 1) {
      throw InvalidArgument("maintenance: more than one tamping event in one interval");
    }
    return count == 1;
  }

  const std::vector<double>& interval_end_times() const { return ends_; }
  bool empty() const { return ends_.empty(); }

  bool operator==(const MaintenanceSchedule&) const = default;

 private:
  std::vector<double> ends_;
};

template <typename Scalar>
struct StepDistribution {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;
};

namespace detail {

template <typename Scalar>
StepDistribution<Scalar> step_unchecked(const Vector<Scalar>& prev, Scalar dt,
                                        const DegradationParams<Scalar>& p, bool maintained) {
  if (maintained) {
    return {p.post_tamping_mean + Scalar(0.5) * dt * p.drift,
            p.post_tamping_cov + Scalar(0.5) * dt * p.diffusion};
  }
  return {prev + dt * p.drift, dt * p.diffusion};
}

}  // namespace detail

/// Distribution of the indicators after `dt` weeks given the previous
/// value. A maintained interval restarts from the post-tamping state at
/// the midpoint, so the result no longer depends on `prev`.
template <typename Scalar>
StepDistribution<Scalar> step_distribution(const GeometryState<Scalar>& prev, Scalar dt,
                                           const DegradationParams<Scalar>& params,
                                           bool maintained) {
  if (!(dt > Scalar(0)) || !std::isfinite(dt)) {
    throw InvalidArgument("step_distribution: dt must be positive");
  }
  const auto p = validated(params);
  if (prev.values.size() != p.dim()) {
    throw InvalidArgument("step_distribution: state dimension does not match params");
  }
  return detail::step_unchecked<Scalar>(prev.values, dt, p, maintained);
}

/// Simulates the indicator path at `times` starting from `start`.
template <typename Scalar, std::uniform_random_bit_generator Engine>
std::vector<GeometryState<Scalar>> simulate_path(const GeometryState<Scalar>& start,
                                                 std::span<const Scalar> times,
                                                 const DegradationParams<Scalar>& params,
                                                 const MaintenanceSchedule& schedule,
                                                 Engine& rng) {
  const auto p = validated(params);
  if (start.values.size() != p.dim()) {
    throw InvalidArgument("simulate_path: start dimension does not match params");
  }
  Scalar prev_time = start.time;
  for (const Scalar t : times) {
    if (!(t > prev_time)) throw InvalidArgument("simulate_path: times must be strictly ascending");
    prev_time = t;
  }

  // Unmaintained steps share one factor scaled by sqrt(dt).
  const Matrix<Scalar> diffusion_root = psd_sqrt(p.diffusion);
  std::vector<GeometryState<Scalar>> path;
  path.reserve(times.size());
  GeometryState<Scalar> current = start;
  for (const Scalar t : times) {
    const Scalar dt = t - current.time;
    const bool tamped = schedule.maintained(static_cast<double>(current.time),
                                            static_cast<double>(t));
    auto step = detail::step_unchecked<Scalar>(current.values, dt, p, tamped);
    const Matrix<Scalar> factor =
        tamped ? psd_sqrt(step.cov) : Matrix<Scalar>(std::sqrt(dt) * diffusion_root);
    current.values = sample_with_factor<Scalar>(step.mean, factor, rng);
    current.time = t;
    path.push_back(current);
  }
  return path;
}

template <typename Scalar>
std::vector<GeometryState<Scalar>> simulate_path(const GeometryState<Scalar>& start,
                                                 std::span<const Scalar> times,
                                                 const DegradationParams<Scalar>& params,
                                                 const MaintenanceSchedule& schedule,
                                                 std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  return simulate_path(start, times, params, schedule, rng);
}

}  // namespace trackfusion
