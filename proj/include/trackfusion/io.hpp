#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackfusion/fusion.hpp"
#include "trackfusion/montecarlo.hpp"

namespace trackfusion {

inline constexpr double kDefaultFloorMm = 0.01;

/// Shortest decimal text that parses back to exactly `x`.
std::string format_double(double x);

/// Natural log of a raw millimetre value clamped below at `floor_mm`.
double log_mm(double value_mm, double floor_mm);

// JSON (matrices row-major).
nlohmann::json to_json(const DegradationParams<double>& p);
nlohmann::json to_json(const ObservationModel<double>& m);
DegradationParams<double> params_from_json(const nlohmann::json& j);
ObservationModel<double> model_from_json(const nlohmann::json& j);

/// A params file holds either one object or an array of posterior samples.
std::vector<DegradationParams<double>> load_params(const std::filesystem::path& path);
ObservationModel<double> load_model(const std::filesystem::path& path);
void save_params(const std::filesystem::path& path, const std::vector<DegradationParams<double>>& p);
void save_model(const std::filesystem::path& path, const ObservationModel<double>& m);

/// Parsed comma-separated file; `line_numbers[r]` is the 1-based source
/// line of data row r.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string source;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
};

CsvTable read_csv(std::istream& in, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

/// Rows of `time,segment_id,z_1..z_n,y_1..y_m` in raw mm, logged on load.
/// When `segment` is set only its rows are kept; otherwise all rows pool.
PairedDataset<double> read_paired(const CsvTable& table, double floor_mm,
                                  const std::optional<std::string>& segment = std::nullopt);

/// Reference rows `time,segment_id,z_1..z_n` in raw mm. Without `segment`
/// the file must hold a single segment.
std::vector<GeometryState<double>> read_references(
    const CsvTable& table, double floor_mm, const std::optional<std::string>& segment = std::nullopt);

/// On-board rows `time,segment_id,y_1..y_m` in raw mm.
std::vector<OnboardIndex<double>> read_onboard(
    const CsvTable& table, double floor_mm, const std::optional<std::string>& segment = std::nullopt);

/// Maintenance rows `segment_id,interval_end_time`.
MaintenanceSchedule read_maintenance(const CsvTable& table,
                                     const std::optional<std::string>& segment = std::nullopt);

/// One output row of a filter trajectory, in log space.
struct TrajectoryRow {
  double time = 0.0;
  EventKind kind = EventKind::Reference;
  VectorXd estimate;
  MatrixXd cov;
  double width = 0.0;
  std::vector<Interval> intervals;
};

TrajectoryRow make_row(const FilterState<double>& state, double level);
TrajectoryRow make_row(const MixtureEstimate<double>& mix, double level);

/// `time,kind,z_hat_1..n,P_1_1..P_n_n,W,lo_1,hi_1,...,lo_n,hi_n`.
void write_trajectory(std::ostream& out, const std::vector<TrajectoryRow>& rows);
std::vector<TrajectoryRow> read_trajectory(std::istream& in);

/// Experiment file as loaded from JSON, with referenced files resolved.
struct ExperimentFile {
  ExperimentConfig config;
  std::vector<double> intervals;
  std::vector<double> display_means;
};

/// Loads and validates an experiment config. Relative file references are
/// resolved against the config's directory. Every problem found is listed
/// in the thrown ConfigError.
ExperimentFile load_experiment(const std::filesystem::path& path, double floor_mm);

/// Writes `widths_<interval>.csv` (time,mean_W,baseline_W,relative_W).
void write_widths(std::ostream& out, const std::vector<double>& times,
                  const std::vector<double>& mean_width, const std::vector<double>& baseline_width);

/// `sweep_summary.csv`: interval,steady_W,t_stabilize plus a baseline row.
void write_sweep_summary(std::ostream& out, const SweepResult& sweep);

/// `paths_<rep>.csv`: time, truth, signal, estimate and width per grid time.
void write_path(std::ostream& out, const std::vector<double>& times, const Replication& rep);

}  // namespace trackfusion
