#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "trackfusion/degradation.hpp"
#include "trackfusion/measurement.hpp"

namespace trackfusion {

enum class EventKind { Reference, Update, Predict };

inline const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Reference: return "reference";
    case EventKind::Update: return "update";
    case EventKind::Predict: return "predict";
  }
  return "?";
}

/// Filtered indicator distribution N(estimate, cov) at `time`.
/// `last_reference_index` is the index of the reference record the filter
/// was last restarted from; `kind` records which event produced the state.
template <typename Scalar>
struct FilterState {
  Vector<Scalar> estimate;
  Matrix<Scalar> cov;
  Scalar time = Scalar(0);
  int last_reference_index = 0;
  EventKind kind = EventKind::Reference;
};

/// Time-stepped propagation through the degradation model.
template <typename Scalar>
FilterState<Scalar> predict(const FilterState<Scalar>& state, Scalar dt,
                            const DegradationParams<Scalar>& params, bool maintained) {
  if (!(dt > Scalar(0)) || !std::isfinite(dt)) throw InvalidArgument("predict: dt must be positive");
  const auto p = validated(params);
  if (state.estimate.size() != p.dim() || state.cov.rows() != p.dim() ||
      state.cov.cols() != p.dim()) {
    throw InvalidArgument("predict: state dimension does not match params");
  }
  FilterState<Scalar> out = state;
  if (maintained) {
    out.estimate = p.post_tamping_mean + Scalar(0.5) * dt * p.drift;
    out.cov = p.post_tamping_cov + Scalar(0.5) * dt * p.diffusion;
  } else {
    out.estimate = state.estimate + dt * p.drift;
    out.cov = state.cov + dt * p.diffusion;
  }
  out.time = state.time + dt;
  out.kind = EventKind::Predict;
  return out;
}

/// Measurement update with the on-board indices `y`. Covariance in Joseph
/// form (I - K H) P (I - K H)^T + K R K^T.
template <typename Scalar>
FilterState<Scalar> update(const FilterState<Scalar>& state, const OnboardIndex<Scalar>& y,
                           const ObservationModel<Scalar>& model) {
  const Eigen::Index n = state.estimate.size();
  const Eigen::Index m = model.index_dim();
  if (model.state_dim() != n || y.values.size() != m || state.cov.rows() != n ||
      state.cov.cols() != n || model.bias.size() != m || model.noise_cov.rows() != m) {
    throw InvalidArgument("update: dimension mismatch");
  }
  const Matrix<Scalar>& H = model.sensitivity;
  const Matrix<Scalar> PHt = state.cov * H.transpose();
  const Matrix<Scalar> S = symmetrize(H * PHt + model.noise_cov);

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(S, Eigen::EigenvaluesOnly);
  const Scalar floor = Scalar(1e-12) * S.trace() / Scalar(m);
  if (!(es.eigenvalues().minCoeff() > floor)) {
    throw SingularInnovation("update: innovation covariance is singular");
  }
  Eigen::LDLT<Matrix<Scalar>> s_solver(S);
  const Matrix<Scalar> gain = s_solver.solve(PHt.transpose()).transpose();  // n x m

  const Vector<Scalar> innovation = y.values - H * state.estimate - model.bias;
  const Matrix<Scalar> I_KH = Matrix<Scalar>::Identity(n, n) - gain * H;

  FilterState<Scalar> out = state;
  out.estimate = state.estimate + gain * innovation;
  out.cov = symmetrize(I_KH * state.cov * I_KH.transpose() +
                       gain * model.noise_cov * gain.transpose());
  out.kind = EventKind::Update;
  return out;
}

/// Reference records, on-board records and tamping events of one segment.
/// `forecast_times` adds prediction-only output points; a forecast time
/// equal to a measurement time is dropped.
template <typename Scalar>
struct MeasurementTimeline {
  std::vector<GeometryState<Scalar>> reference_events;
  std::vector<OnboardIndex<Scalar>> onboard_events;
  MaintenanceSchedule maintenance;
  std::vector<Scalar> forecast_times;
};

struct TimelineEvent {
  double time;
  EventKind kind;
  std::size_t index;
};

/// Merges the timeline into one strictly ascending event sequence,
/// enforcing the ordering rules. Throws TimelineError citing the
/// offending time.
template <typename Scalar>
std::vector<TimelineEvent> merge_events(const MeasurementTimeline<Scalar>& timeline) {
  auto fail = [](const std::string& what, double t) {
    std::ostringstream os;
    os.precision(17);
    os << "timeline: " << what << " at t=" << t;
    throw TimelineError(os.str());
  };
  if (timeline.reference_events.empty()) throw InvalidArgument("timeline: no reference events");

  std::vector<TimelineEvent> events;
  auto check_ascending = [&](auto const& list, auto time_of, const char* label) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      const double t = static_cast<double>(time_of(list[i]));
      if (!std::isfinite(t)) fail(std::string(label) + " time is not finite", t);
      if (i > 0 && !(t > static_cast<double>(time_of(list[i - 1])))) {
        fail(std::string(label) + " times are not strictly ascending", t);
      }
    }
  };
  check_ascending(timeline.reference_events, [](auto const& e) { return e.time; }, "reference");
  check_ascending(timeline.onboard_events, [](auto const& e) { return e.time; }, "on-board");
  check_ascending(timeline.forecast_times, [](Scalar t) { return t; }, "forecast");

  for (std::size_t i = 0; i < timeline.reference_events.size(); ++i) {
    events.push_back({static_cast<double>(timeline.reference_events[i].time),
                      EventKind::Reference, i});
  }
  for (std::size_t i = 0; i < timeline.onboard_events.size(); ++i) {
    events.push_back({static_cast<double>(timeline.onboard_events[i].time), EventKind::Update, i});
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const TimelineEvent& a, const TimelineEvent& b) { return a.time < b.time; });
  const double first = events.front().time;
  if (events.front().kind != EventKind::Reference) {
    fail("on-board event precedes the first reference record", first);
  }
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].time == events[i - 1].time) {
      fail("on-board event coincides with a reference record", events[i].time);
    }
  }

  std::vector<TimelineEvent> merged;
  merged.reserve(events.size() + timeline.forecast_times.size());
  std::size_t e = 0;
  for (std::size_t f = 0; f < timeline.forecast_times.size(); ++f) {
    const double t = static_cast<double>(timeline.forecast_times[f]);
    if (t < first) fail("forecast time precedes the first reference record", t);
    while (e < events.size() && events[e].time <= t) merged.push_back(events[e++]);
    if (merged.back().time != t) merged.push_back({t, EventKind::Predict, f});
  }
  while (e < events.size()) merged.push_back(events[e++]);
  return merged;
}

/// Options of the restarted filter. `reference_noise` is the covariance
/// assigned at each reference reset; empty means exact references.
template <typename Scalar>
struct FilterOptions {
  Matrix<Scalar> reference_noise;
};

/// Runs the restarted Kalman filter over the timeline. The returned
/// trajectory holds one state per event: reference resets, on-board
/// updates, and forecast-only predictions.
template <typename Scalar>
std::vector<FilterState<Scalar>> run_filter(const MeasurementTimeline<Scalar>& timeline,
                                            const DegradationParams<Scalar>& params,
                                            const ObservationModel<Scalar>& model,
                                            const FilterOptions<Scalar>& options = {}) {
  const auto p = validated(params);
  const auto obs = validated(model);
  const Eigen::Index n = p.dim();
  if (obs.state_dim() != n) {
    throw InvalidArgument("run_filter: observation model state dimension does not match params");
  }
  Matrix<Scalar> reset_cov = Matrix<Scalar>::Zero(n, n);
  if (options.reference_noise.size() != 0) {
    if (options.reference_noise.rows() != n) {
      throw InvalidArgument("run_filter: reference noise has the wrong dimension");
    }
    reset_cov = checked_psd(options.reference_noise, "reference noise covariance");
  }
  const auto events = merge_events(timeline);

  std::vector<FilterState<Scalar>> trajectory;
  trajectory.reserve(events.size());
  FilterState<Scalar> state;
  for (const auto& ev : events) {
    try {
      switch (ev.kind) {
        case EventKind::Reference: {
          const auto& ref = timeline.reference_events[ev.index];
          if (ref.values.size() != n) throw InvalidArgument("reference record has wrong dimension");
          if (!ref.values.allFinite()) throw InvalidArgument("reference record is not finite");
          state.estimate = ref.values;
          state.cov = reset_cov;
          state.time = ref.time;
          state.last_reference_index = static_cast<int>(ev.index);
          state.kind = EventKind::Reference;
          break;
        }
        case EventKind::Update: {
          const auto& y = timeline.onboard_events[ev.index];
          const Scalar t = y.time;
          const bool tamped =
              timeline.maintenance.maintained(static_cast<double>(state.time), ev.time);
          state = update(predict(state, t - state.time, p, tamped), y, obs);
          state.time = t;
          break;
        }
        case EventKind::Predict: {
          const Scalar t = timeline.forecast_times[ev.index];
          const bool tamped =
              timeline.maintenance.maintained(static_cast<double>(state.time), ev.time);
          state = predict(state, t - state.time, p, tamped);
          state.time = t;
          break;
        }
      }
    } catch (const SingularInnovation& err) {
      throw SingularInnovation(std::string(err.what()) + " (event at t=" +
                               std::to_string(ev.time) + ")");
    } catch (const InvalidArgument& err) {
      throw InvalidArgument(std::string(err.what()) + " (event at t=" +
                            std::to_string(ev.time) + ")");
    }
    trajectory.push_back(state);
  }
  return trajectory;
}

template <typename Scalar>
struct GaussianComponent {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;
};

/// Equal-weight Gaussian mixture over posterior parameter samples.
template <typename Scalar>
struct MixtureEstimate {
  std::vector<GaussianComponent<Scalar>> components;
  Scalar time = Scalar(0);
  EventKind kind = EventKind::Reference;
};

/// Runs one filter per parameter sample and pairs their outputs by event.
template <typename Scalar>
std::vector<MixtureEstimate<Scalar>> run_filter_mixture(
    const MeasurementTimeline<Scalar>& timeline,
    const std::vector<DegradationParams<Scalar>>& posterior_samples,
    const ObservationModel<Scalar>& model, const FilterOptions<Scalar>& options = {}) {
  if (posterior_samples.empty()) throw InvalidArgument("run_filter_mixture: no parameter samples");
  std::vector<MixtureEstimate<Scalar>> out;
  for (std::size_t j = 0; j < posterior_samples.size(); ++j) {
    const auto trajectory = run_filter(timeline, posterior_samples[j], model, options);
    if (j == 0) {
      out.resize(trajectory.size());
      for (std::size_t k = 0; k < trajectory.size(); ++k) {
        out[k].time = trajectory[k].time;
        out[k].kind = trajectory[k].kind;
        out[k].components.reserve(posterior_samples.size());
      }
    }
    for (std::size_t k = 0; k < trajectory.size(); ++k) {
      out[k].components.push_back({trajectory[k].estimate, trajectory[k].cov});
    }
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> mixture_mean(const MixtureEstimate<Scalar>& mix) {
  Vector<Scalar> mean = Vector<Scalar>::Zero(mix.components.front().mean.size());
  for (const auto& c : mix.components) mean += c.mean;
  return mean / Scalar(mix.components.size());
}

/// Mixture covariance by the law of total variance.
template <typename Scalar>
Matrix<Scalar> mixture_cov(const MixtureEstimate<Scalar>& mix) {
  const Vector<Scalar> mean = mixture_mean(mix);
  Matrix<Scalar> cov = Matrix<Scalar>::Zero(mean.size(), mean.size());
  for (const auto& c : mix.components) {
    const Vector<Scalar> d = c.mean - mean;
    cov += c.cov + d * d.transpose();
  }
  return symmetrize(cov / Scalar(mix.components.size()));
}

/// Gaussian density; singular covariances get +1e-12 I.
template <typename Scalar, typename Derived>
Scalar gaussian_pdf(const GaussianComponent<Scalar>& c, const Eigen::MatrixBase<Derived>& z) {
  const Eigen::Index n = c.mean.size();
  Eigen::LLT<Matrix<Scalar>> llt(c.cov);
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0)) {
    llt.compute(c.cov + Scalar(1e-12) * Matrix<Scalar>::Identity(n, n));
  }
  const Vector<Scalar> d = z - c.mean;
  const Vector<Scalar> w = llt.matrixL().solve(d);
  const Scalar log_det = Scalar(2) * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Scalar log_norm = Scalar(0.5) * (Scalar(n) * std::log(Scalar(2 * M_PI)) + log_det);
  return std::exp(Scalar(-0.5) * w.squaredNorm() - log_norm);
}

template <typename Scalar, typename Derived>
Scalar mixture_pdf(const MixtureEstimate<Scalar>& mix, const Eigen::MatrixBase<Derived>& z) {
  if (mix.components.empty()) throw InvalidArgument("mixture_pdf: empty mixture");
  if (z.size() != mix.components.front().mean.size()) {
    throw InvalidArgument("mixture_pdf: dimension mismatch");
  }
  Scalar sum = Scalar(0);
  for (const auto& c : mix.components) sum += gaussian_pdf(c, z);
  return sum / Scalar(mix.components.size());
}

/// Generalized-variance width det(cov)^(1/n); zero for singular cov.
template <typename Derived>
typename Derived::Scalar credible_width(const Eigen::MatrixBase<Derived>& cov) {
  using Scalar = typename Derived::Scalar;
  if (cov.rows() != cov.cols() || cov.rows() == 0) {
    throw InvalidArgument("credible_width: covariance must be square and non-empty");
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrize(cov), Eigen::EigenvaluesOnly);
  const auto& eig = es.eigenvalues();
  if (!eig.allFinite() || eig.minCoeff() < -Scalar(kPsdRelTol) * std::max(eig.maxCoeff(), Scalar(0))) {
    throw NumericError("credible_width: covariance has a negative determinant");
  }
  const Scalar det = eig.cwiseMax(Scalar(0)).prod();
  return std::pow(det, Scalar(1) / Scalar(cov.rows()));
}

struct Interval {
  double lo;
  double hi;
};

inline void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("credible level must lie in (0, 1)");
}

/// Central marginal interval of coordinate `i` of N(mean, cov).
template <typename DerivedMean, typename DerivedCov>
Interval credible_interval(const Eigen::MatrixBase<DerivedMean>& mean,
                           const Eigen::MatrixBase<DerivedCov>& cov, double level, Eigen::Index i) {
  check_level(level);
  if (i < 0 || i >= mean.size() || cov.rows() != mean.size()) {
    throw InvalidArgument("credible_interval: coordinate out of range");
  }
  const double q = normal_quantile(0.5 * (1.0 + level));
  const double sd = std::sqrt(std::max(static_cast<double>(cov(i, i)), 0.0));
  const double m = static_cast<double>(mean[i]);
  return {m - q * sd, m + q * sd};
}

/// Central marginal interval of coordinate `i` of the equal-weight mixture,
/// found by bisection on the marginal CDF.
template <typename Scalar>
Interval credible_interval(const MixtureEstimate<Scalar>& mix, double level, Eigen::Index i) {
  check_level(level);
  if (mix.components.empty()) throw InvalidArgument("credible_interval: empty mixture");
  if (i < 0 || i >= mix.components.front().mean.size()) {
    throw InvalidArgument("credible_interval: coordinate out of range");
  }
  std::vector<std::pair<double, double>> marginals;  // (mean, sd)
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double max_sd = 0.0;
  for (const auto& c : mix.components) {
    const double m = static_cast<double>(c.mean[i]);
    const double sd = std::sqrt(std::max(static_cast<double>(c.cov(i, i)), 0.0));
    marginals.emplace_back(m, sd);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    max_sd = std::max(max_sd, sd);
  }
  if (max_sd == 0.0 && lo == hi) return {lo, hi};

  auto cdf = [&](double x) {
    double sum = 0.0;
    for (const auto& [m, sd] : marginals) {
      sum += sd > 0.0 ? normal_cdf((x - m) / sd) : (x >= m ? 1.0 : 0.0);
    }
    return sum / static_cast<double>(marginals.size());
  };
  const double left = lo - 40.0 * max_sd - 1.0;
  const double right = hi + 40.0 * max_sd + 1.0;
  // Smallest x with cdf(x) >= target.
  auto solve = [&](double target) {
    double a = left;
    double b = right;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      (cdf(mid) < target ? a : b) = mid;
    }
    return b;
  };
  return {solve(0.5 * (1.0 - level)), solve(0.5 * (1.0 + level))};
}

/// Result of iterating one predict + update cycle of fixed spacing to its
/// fixed point.
template <typename Scalar>
struct RiccatiResult {
  Matrix<Scalar> cov;
  int iterations = 0;
  Scalar residual = Scalar(0);
};

/// Iterates P <- update(predict(P, interval)) starting from `start` until
/// successive iterates differ by at most `tol` in Frobenius norm.
template <typename Scalar>
RiccatiResult<Scalar> riccati_fixed_point(const DegradationParams<Scalar>& params,
                                          const ObservationModel<Scalar>& model, Scalar interval,
                                          Matrix<Scalar> start, int max_iterations = 1000,
                                          Scalar tol = Scalar(1e-13)) {
  const auto p = validated(params);
  const auto obs = validated(model);
  FilterState<Scalar> state{Vector<Scalar>::Zero(p.dim()), std::move(start), Scalar(0), 0,
                            EventKind::Reference};
  OnboardIndex<Scalar> y{Vector<Scalar>::Zero(obs.index_dim()), Scalar(0), {}};
  RiccatiResult<Scalar> result;
  for (int it = 1; it <= max_iterations; ++it) {
    const auto next = update(predict(state, interval, p, false), y, obs);
    result.residual = (next.cov - state.cov).norm();
    result.iterations = it;
    state = next;
    if (result.residual <= tol) break;
  }
  result.cov = state.cov;
  return result;
}

}  // namespace trackfusion
