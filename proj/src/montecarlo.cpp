#include "trackfusion/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "trackfusion/io.hpp"

namespace trackfusion {

namespace {

bool on_grid(const std::vector<double>& grid, double t) {
  return std::find(grid.begin(), grid.end(), t) != grid.end();
}

FilteredPoint reduce(const MixtureEstimate<double>& mix) {
  FilteredPoint point;
  point.time = mix.time;
  point.kind = mix.kind;
  point.estimate = mixture_mean(mix);
  point.cov = mixture_cov(mix);
  point.width = credible_width(point.cov);
  return point;
}

MeasurementTimeline<double> base_timeline(const ExperimentConfig& cfg) {
  MeasurementTimeline<double> timeline;
  timeline.reference_events.push_back(cfg.initial_state);
  timeline.maintenance = cfg.maintenance;
  return timeline;
}

Replication run_replication(const ExperimentConfig& cfg, const std::vector<double>& grid,
                            std::uint64_t seed) {
  Rng rng(seed);
  Replication rep;
  // Posterior-sample mode: each truth path comes from one randomly drawn sample.
  std::size_t sample = 0;
  if (cfg.params.size() > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, cfg.params.size() - 1);
    sample = pick(rng);
  }
  rep.truth = simulate_path<double>(cfg.initial_state, grid, cfg.params[sample],
                                    cfg.maintenance, rng);

  auto timeline = base_timeline(cfg);
  for (const auto& z : rep.truth) {
    OnboardIndex<double> y{sample_index(z.values, cfg.observation_model, rng), z.time,
                           cfg.initial_state.segment_id};
    rep.signals.push_back(y);
    if (on_grid(cfg.extra_reference_times, z.time)) {
      timeline.reference_events.push_back(z);
    } else {
      timeline.onboard_events.push_back(std::move(y));
    }
  }

  for (const auto& mix : run_filter_mixture(timeline, cfg.params, cfg.observation_model)) {
    if (mix.time == cfg.initial_state.time) continue;
    rep.filtered.push_back(reduce(mix));
  }
  return rep;
}

}  // namespace

std::vector<std::string> validate(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  if (!(cfg.horizon > 0.0) || !std::isfinite(cfg.horizon)) {
    errors.emplace_back("horizon: must be positive and finite");
  }
  if (!(cfg.measurement_interval > 0.0) || !(cfg.measurement_interval <= cfg.horizon)) {
    errors.emplace_back("measurement_interval: must satisfy 0 < interval <= horizon");
  }
  if (cfg.n_replications < 1) errors.emplace_back("n_replications: must be at least 1");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) errors.emplace_back("level: must lie in (0, 1)");
  if (cfg.initial_state.values.size() == 0 || !cfg.initial_state.values.allFinite()) {
    errors.emplace_back("initial_state: must be a non-empty finite vector");
  }
  if (!std::isfinite(cfg.initial_state.time) || cfg.initial_state.time < 0.0) {
    errors.emplace_back("initial_state.time: must be finite and non-negative");
  }
  if (cfg.params.empty()) errors.emplace_back("params: at least one parameter sample required");
  for (std::size_t j = 0; j < cfg.params.size(); ++j) {
    try {
      const auto p = validated(cfg.params[j]);
      if (p.dim() != cfg.initial_state.values.size()) {
        errors.emplace_back("params[" + std::to_string(j) +
                            "]: dimension differs from initial_state");
      }
    } catch (const Error& e) {
      errors.emplace_back("params[" + std::to_string(j) + "]: " + e.what());
    }
  }
  try {
    const auto model = validated(cfg.observation_model);
    if (model.state_dim() != cfg.initial_state.values.size()) {
      errors.emplace_back("observation_model: state dimension differs from initial_state");
    }
  } catch (const Error& e) {
    errors.emplace_back(std::string("observation_model: ") + e.what());
  }
  if (errors.empty()) {
    const auto grid = measurement_grid(cfg.initial_state.time, cfg.horizon, cfg.measurement_interval);
    for (const double t : cfg.extra_reference_times) {
      if (!on_grid(grid, t)) {
        std::ostringstream os;
        os << "extra_reference_times: " << t << " is not a measurement grid time";
        errors.push_back(os.str());
      }
    }
  }
  return errors;
}

std::vector<double> measurement_grid(double start, double horizon, double interval) {
  const auto steps = static_cast<long>(std::floor(horizon / interval + 1e-9));
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(std::max(steps, 0L)));
  for (long k = 1; k <= steps; ++k) grid.push_back(start + static_cast<double>(k) * interval);
  return grid;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t stream) {
  if (const auto errors = validate(cfg); !errors.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  ExperimentResult result;
  result.times = measurement_grid(cfg.initial_state.time, cfg.horizon, cfg.measurement_interval);
  const auto reps = static_cast<std::size_t>(cfg.n_replications);
  result.replications.resize(reps);

  unsigned workers = cfg.threads != 0 ? cfg.threads : std::thread::hardware_concurrency();
  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(reps));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::size_t failed_rep = reps;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t r = next++; r < reps; r = next++) {
      try {
        result.replications[r] =
            run_replication(cfg, result.times, derive_seed(cfg.rng_master_seed, stream, r));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (r < failed_rep) {
          failed_rep = r;
          failure = std::current_exception();
        }
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) {
    const std::string where = " (replication " + std::to_string(failed_rep) + ")";
    try {
      std::rethrow_exception(failure);
    } catch (const NumericError& e) {
      throw NumericError(e.what() + where);
    } catch (const Error& e) {
      throw InvalidArgument(e.what() + where);
    }
  }

  const Eigen::Index n = cfg.initial_state.values.size();
  const std::size_t steps = result.times.size();
  result.mean_width.assign(steps, 0.0);
  result.mean_cov.assign(steps, MatrixXd::Zero(n, n));
  for (const auto& rep : result.replications) {
    for (std::size_t k = 0; k < steps; ++k) {
      result.mean_width[k] += rep.filtered[k].width;
      result.mean_cov[k] += rep.filtered[k].cov;
    }
  }
  for (std::size_t k = 0; k < steps; ++k) {
    result.mean_width[k] /= static_cast<double>(reps);
    result.mean_cov[k] /= static_cast<double>(reps);
  }

  auto open_loop = base_timeline(cfg);
  open_loop.forecast_times = result.times;
  for (const auto& mix : run_filter_mixture(open_loop, cfg.params, cfg.observation_model)) {
    if (mix.kind != EventKind::Predict) continue;
    auto point = reduce(mix);
    result.baseline_width.push_back(point.width);
    result.baseline_cov.push_back(std::move(point.cov));
  }
  return result;
}

double tail_variation(const std::vector<double>& series) {
  if (series.size() < 2) return 0.0;
  const auto tail = std::max<std::size_t>(2, (series.size() + 9) / 10);
  const auto first = series.end() - static_cast<std::ptrdiff_t>(tail);
  const auto [lo, hi] = std::minmax_element(first, series.end());
  if (*hi == 0.0) return 0.0;
  return (*hi - *lo) / *hi;
}

SweepResult sweep_intervals(const ExperimentConfig& base_cfg, const std::vector<double>& intervals) {
  if (intervals.empty()) throw InvalidArgument("sweep_intervals: no intervals given");
  SweepResult sweep;
  sweep.horizon = base_cfg.horizon;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    ExperimentConfig cfg = base_cfg;
    cfg.measurement_interval = intervals[i];
    const auto exp = run_experiment(cfg, i);

    IntervalSummary summary;
    summary.interval = intervals[i];
    summary.times = exp.times;
    summary.mean_width = exp.mean_width;
    summary.mean_cov = exp.mean_cov;
    summary.baseline_width = exp.baseline_width;
    summary.baseline_cov = exp.baseline_cov;
    if (cfg.params.size() == 1) {
      const auto fixed = riccati_fixed_point<double>(cfg.params.front(), cfg.observation_model,
                                                     intervals[i], exp.mean_cov.back());
      summary.steady_cov = fixed.cov;
      summary.steady_width = credible_width(fixed.cov);
    } else {
      summary.steady_cov = exp.mean_cov.back();
      summary.steady_width = exp.mean_width.back();
    }
    summary.time_to_stabilize = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < exp.times.size(); ++k) {
      if (std::abs(exp.mean_width[k] - summary.steady_width) < 0.01 * summary.steady_width) {
        summary.time_to_stabilize = exp.times[k];
        break;
      }
    }
    summary.stabilized = tail_variation(exp.mean_width) < 0.005;
    sweep.intervals.push_back(std::move(summary));
  }

  auto open_loop = base_timeline(base_cfg);
  open_loop.forecast_times = {base_cfg.initial_state.time + base_cfg.horizon};
  const auto mixes = run_filter_mixture(open_loop, base_cfg.params, base_cfg.observation_model);
  const auto end = reduce(mixes.back());
  sweep.baseline_cov_at_horizon = end.cov;
  sweep.baseline_width_at_horizon = end.width;
  return sweep;
}

double mm_interval_width(double mean_mm, double log_var, double level) {
  check_level(level);
  if (!(mean_mm > 0.0)) throw InvalidArgument("display mean must be positive");
  const double q = normal_quantile(0.5 * (1.0 + level));
  const double spread = q * std::sqrt(std::max(log_var, 0.0));
  return mean_mm * (std::exp(spread) - std::exp(-spread));
}

std::string width_report(const SweepResult& sweep, const std::vector<double>& display_means,
                         double level) {
  check_level(level);
  for (const double m : display_means) {
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw InvalidArgument("width_report: display means must be positive");
    }
  }
  if (sweep.intervals.empty()) throw InvalidArgument("width_report: empty sweep");
  const auto n = static_cast<std::size_t>(sweep.intervals.front().mean_cov.front().rows());
  if (display_means.size() != n) {
    throw InvalidArgument("width_report: expected " + std::to_string(n) + " display means");
  }

  std::ostringstream os;
  os << "series,time";
  for (std::size_t i = 1; i <= n; ++i) os << ",width_mm_" << i;
  os << '\n';
  auto emit = [&](const std::string& series, double t, const MatrixXd& cov) {
    os << series << ',' << format_double(t);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      os << ',' << format_double(mm_interval_width(display_means[i], cov(ii, ii), level));
    }
    os << '\n';
  };
  for (const auto& s : sweep.intervals) {
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      emit("interval_" + format_double(s.interval), s.times[k], s.mean_cov[k]);
    }
  }
  const auto& finest = *std::min_element(
      sweep.intervals.begin(), sweep.intervals.end(),
      [](const IntervalSummary& a, const IntervalSummary& b) { return a.interval < b.interval; });
  for (std::size_t k = 0; k < finest.times.size(); ++k) {
    emit("baseline", finest.times[k], finest.baseline_cov[k]);
  }
  return os.str();
}

}  // namespace trackfusion
