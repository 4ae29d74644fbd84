#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "trackfusion/io.hpp"

namespace trackfusion::cli {

namespace fs = std::filesystem;

namespace {

/// Settings shared by every subcommand.
struct RunManifest {
  std::string command;
  fs::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> level;
  double floor_mm = kDefaultFloorMm;
  std::optional<std::string> segment;
};

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  return out;
}

std::string interval_tag(double interval) { return format_double(interval); }

void validate_manifest(const RunManifest& manifest) {
  if (manifest.level && !(*manifest.level > 0.0 && *manifest.level < 1.0)) {
    throw ConfigError("--level must lie in (0, 1)");
  }
  if (!(manifest.floor_mm > 0.0)) throw ConfigError("--floor-mm must be positive");
}

struct CalibrateArgs {
  fs::path paired;
  std::optional<fs::path> out;
};

void cmd_calibrate(const RunManifest& manifest, const CalibrateArgs& args, std::ostream& out) {
  const auto table = read_csv(args.paired);
  const auto data = read_paired(table, manifest.floor_mm, manifest.segment);
  const auto model = calibrate(data);

  const fs::path target = args.out.value_or(manifest.out_dir / "model.json");
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  save_model(target, model);

  MatrixXd design(data.z_rows.rows(), data.z_rows.cols() + 1);
  design << data.z_rows, MatrixXd::Ones(data.z_rows.rows(), 1);
  MatrixXd coeffs(model.sensitivity.cols() + 1, model.sensitivity.rows());
  coeffs << model.sensitivity.transpose(), model.bias.transpose();
  const MatrixXd residuals = data.y_rows - design * coeffs;
  out << "calibrated N=" << data.z_rows.rows() << " n=" << data.z_rows.cols()
      << " m=" << data.y_rows.cols() << '\n'
      << "residual rms per index:";
  for (Eigen::Index i = 0; i < residuals.cols(); ++i) {
    out << ' ' << format_double(std::sqrt(residuals.col(i).squaredNorm() /
                                          static_cast<double>(residuals.rows())));
  }
  out << "\nwrote " << target.string() << '\n';
}

struct FilterArgs {
  fs::path refs;
  std::optional<fs::path> onboard;
  std::optional<fs::path> maintenance;
  fs::path params;
  fs::path model;
  std::optional<fs::path> out;
  double forecast_step = 1.0;
  std::optional<double> forecast_until;
};

void cmd_filter(const RunManifest& manifest, const FilterArgs& args, std::ostream& out) {
  MeasurementTimeline<double> timeline;
  timeline.reference_events = read_references(read_csv(args.refs), manifest.floor_mm, manifest.segment);
  if (args.onboard) {
    timeline.onboard_events = read_onboard(read_csv(*args.onboard), manifest.floor_mm, manifest.segment);
  }
  if (args.maintenance) timeline.maintenance = read_maintenance(read_csv(*args.maintenance), manifest.segment);
  if (timeline.reference_events.empty()) throw InvalidArgument(args.refs.string() + ": no reference records");

  const auto samples = load_params(args.params);
  const auto model = load_model(args.model);

  if (!(args.forecast_step >= 0.0)) throw ConfigError("--forecast-step must be non-negative");
  if (args.forecast_step > 0.0) {
    double last = timeline.reference_events.back().time;
    if (!timeline.onboard_events.empty()) last = std::max(last, timeline.onboard_events.back().time);
    const double until = args.forecast_until.value_or(last);
    const double start = timeline.reference_events.front().time;
    for (long k = 1;; ++k) {
      const double t = start + static_cast<double>(k) * args.forecast_step;
      if (t > until + 1e-9) break;
      timeline.forecast_times.push_back(t);
    }
  }

  const double level = manifest.level.value_or(0.95);
  std::vector<TrajectoryRow> rows;
  if (samples.size() == 1) {
    for (const auto& s : run_filter(timeline, samples.front(), model)) rows.push_back(make_row(s, level));
  } else {
    for (const auto& m : run_filter_mixture(timeline, samples, model)) rows.push_back(make_row(m, level));
  }
  const fs::path target = args.out.value_or(manifest.out_dir / "trajectory.csv");
  auto file = open_output(target);
  write_trajectory(file, rows);
  out << "filtered " << rows.size() << " events with " << samples.size()
      << " parameter sample(s); wrote " << target.string() << '\n';
}

struct ExperimentArgs {
  fs::path config;
  int paths = 0;
};

ExperimentFile load_for_run(const RunManifest& manifest, const ExperimentArgs& args) {
  auto file = load_experiment(args.config, manifest.floor_mm);
  if (manifest.seed) file.config.rng_master_seed = *manifest.seed;
  if (manifest.level) file.config.level = *manifest.level;
  return file;
}

void cmd_simulate(const RunManifest& manifest, const ExperimentArgs& args, std::ostream& out) {
  const auto file = load_for_run(manifest, args);
  const auto result = run_experiment(file.config);
  fs::create_directories(manifest.out_dir);
  const auto widths_path =
      manifest.out_dir / ("widths_" + interval_tag(file.config.measurement_interval) + ".csv");
  {
    auto f = open_output(widths_path);
    write_widths(f, result.times, result.mean_width, result.baseline_width);
  }
  const auto n_paths = std::min<std::size_t>(static_cast<std::size_t>(std::max(args.paths, 0)),
                                             result.replications.size());
  for (std::size_t r = 0; r < n_paths; ++r) {
    auto f = open_output(manifest.out_dir / ("paths_" + std::to_string(r) + ".csv"));
    write_path(f, result.times, result.replications[r]);
  }
  out << "simulated " << result.replications.size() << " replications over "
      << result.times.size() << " steps; final mean W=" << format_double(result.mean_width.back())
      << " baseline W=" << format_double(result.baseline_width.back()) << "; wrote "
      << widths_path.string() << '\n';
}

void cmd_sweep(const RunManifest& manifest, const ExperimentArgs& args, std::ostream& out,
               std::ostream& err) {
  const auto file = load_for_run(manifest, args);
  const std::vector<double> intervals =
      file.intervals.empty() ? std::vector<double>{1.0, 2.0, 4.0, 8.0} : file.intervals;
  const auto sweep = sweep_intervals(file.config, intervals);
  fs::create_directories(manifest.out_dir);
  for (const auto& s : sweep.intervals) {
    auto f = open_output(manifest.out_dir / ("widths_" + interval_tag(s.interval) + ".csv"));
    write_widths(f, s.times, s.mean_width, s.baseline_width);
  }
  {
    auto f = open_output(manifest.out_dir / "sweep_summary.csv");
    write_sweep_summary(f, sweep);
  }

  std::vector<double> means = file.display_means;
  const auto n = static_cast<std::size_t>(file.config.initial_state.values.size());
  if (means.empty() && n == 2) means = {12.0, 10.0};
  if (means.size() == n) {
    auto f = open_output(manifest.out_dir / "width_report.csv");
    f << width_report(sweep, means, file.config.level);
  } else {
    err << "note: width_report.csv skipped; display_means_mm must list " << n << " values\n";
  }

  for (const auto& s : sweep.intervals) {
    out << "interval " << format_double(s.interval) << ": steady W=" << format_double(s.steady_width)
        << " stabilizes at t=" << format_double(s.time_to_stabilize) << '\n';
  }
  out << "baseline W at horizon=" << format_double(sweep.baseline_width_at_horizon) << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Track geometry fusion of reference records and on-board indices"};
  app.require_subcommand(1);
  RunManifest manifest;
  std::uint64_t seed = 0;
  double level = 0.95;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", manifest.out_dir, "Directory for outputs");
    sub->add_option("--seed", seed, "Override the master random seed");
    sub->add_option("--level", level, "Credible level (default 0.95)");
    sub->add_option("--floor-mm", manifest.floor_mm, "Floor applied before taking logs (mm)");
    sub->add_option("--segment", manifest.segment, "Only use rows of this segment id");
  };

  CalibrateArgs cal;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Fit H, b, R from paired data");
  calibrate_cmd->add_option("paired_csv", cal.paired, "time,segment_id,z_1..z_n,y_1..y_m")->required();
  calibrate_cmd->add_option("-o,--out", cal.out, "Output model JSON");
  add_common(calibrate_cmd);

  FilterArgs fil;
  auto* filter_cmd = app.add_subcommand("filter", "Run the restarted Kalman filter");
  filter_cmd->add_option("--refs", fil.refs, "Reference records CSV")->required();
  filter_cmd->add_option("--onboard", fil.onboard, "On-board indices CSV");
  filter_cmd->add_option("--maintenance", fil.maintenance, "Tamping intervals CSV");
  filter_cmd->add_option("--params", fil.params, "Degradation params JSON")->required();
  filter_cmd->add_option("--model", fil.model, "Observation model JSON")->required();
  filter_cmd->add_option("-o,--out", fil.out, "Output trajectory CSV");
  filter_cmd->add_option("--forecast-step", fil.forecast_step, "Prediction-only output spacing, 0 disables");
  filter_cmd->add_option("--forecast-until", fil.forecast_until, "Last prediction-only output time");
  add_common(filter_cmd);

  ExperimentArgs exp;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run one Monte Carlo experiment");
  simulate_cmd->add_option("config", exp.config, "Experiment JSON")->required();
  simulate_cmd->add_option("--paths", exp.paths, "Write paths_<rep>.csv for the first N replications");
  add_common(simulate_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep measurement intervals");
  sweep_cmd->add_option("config", exp.config, "Experiment JSON")->required();
  add_common(sweep_cmd);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }

  auto* active = app.get_subcommands().front();
  manifest.command = active->get_name();
  if (active->count("--seed") > 0) manifest.seed = seed;
  if (active->count("--level") > 0) manifest.level = level;

  try {
    validate_manifest(manifest);
    if (manifest.command == "calibrate") {
      cmd_calibrate(manifest, cal, out);
    } else if (manifest.command == "filter") {
      cmd_filter(manifest, fil, out);
    } else if (manifest.command == "simulate") {
      cmd_simulate(manifest, exp, out);
    } else {
      cmd_sweep(manifest, exp, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_numeric() ? kNumericError : kValidationError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }
  return kSuccess;
}

}  // namespace trackfusion::cli
