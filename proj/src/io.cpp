#include "trackfusion/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace trackfusion {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double log_mm(double value_mm, double floor_mm) {
  if (!(floor_mm > 0.0)) throw InvalidArgument("log floor must be positive");
  return std::log(std::max(value_mm, floor_mm));
}

namespace {

json row_major(const MatrixXd& a) {
  json out = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.push_back(a(i, j));
  }
  return out;
}

json as_array(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

VectorXd vector_field(const json& j, const char* key, Eigen::Index size) {
  const auto& a = j.at(key);
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != size) {
    throw InvalidArgument(std::string("field '") + key + "' must be an array of " +
                          std::to_string(size) + " numbers");
  }
  VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = a.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

MatrixXd matrix_field(const json& j, const char* key, Eigen::Index rows, Eigen::Index cols) {
  const auto flat = vector_field(j, key, rows * cols);
  MatrixXd a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) a(i, c) = flat[i * cols + c];
  }
  return a;
}

Eigen::Index dim_field(const json& j, const char* key) {
  const auto v = j.at(key).get<long>();
  if (v < 1) throw InvalidArgument(std::string("field '") + key + "' must be at least 1");
  return static_cast<Eigen::Index>(v);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << text;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Indices of columns named `<prefix>1`, `<prefix>2`, ... in order.
std::vector<std::size_t> numbered_columns(const CsvTable& table, const std::string& prefix) {
  std::vector<std::size_t> cols;
  for (std::size_t k = 1;; ++k) {
    const auto it = std::find(table.header.begin(), table.header.end(), prefix + std::to_string(k));
    if (it == table.header.end()) break;
    cols.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }
  if (cols.empty()) {
    throw IngestionError(table.source + ": header has no '" + prefix + "1' column");
  }
  return cols;
}

/// Rows belonging to the selected segment. Without a selection and with
/// `single_segment` set, more than one segment id is an error.
std::vector<std::size_t> select_rows(const CsvTable& table, const std::optional<std::string>& segment,
                                     bool single_segment) {
  const auto seg_col = table.column("segment_id");
  std::vector<std::size_t> rows;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& id = table.rows[r][seg_col];
    seen.insert(id);
    if (!segment || id == *segment) rows.push_back(r);
  }
  if (!segment && single_segment && seen.size() > 1) {
    throw IngestionError(table.source + ": holds " + std::to_string(seen.size()) +
                         " segments; select one with --segment");
  }
  return rows;
}

VectorXd logged_row(const CsvTable& table, std::size_t r, const std::vector<std::size_t>& cols,
                    double floor_mm) {
  VectorXd v(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = log_mm(table.number(r, cols[i]), floor_mm);
  }
  return v;
}

}  // namespace

json to_json(const DegradationParams<double>& p) {
  return json{{"n", p.dim()},
              {"drift", as_array(p.drift)},
              {"diffusion", row_major(p.diffusion)},
              {"post_tamping_mean", as_array(p.post_tamping_mean)},
              {"post_tamping_cov", row_major(p.post_tamping_cov)}};
}

json to_json(const ObservationModel<double>& m) {
  return json{{"n", m.state_dim()},
              {"m", m.index_dim()},
              {"H", row_major(m.sensitivity)},
              {"b", as_array(m.bias)},
              {"R", row_major(m.noise_cov)}};
}

DegradationParams<double> params_from_json(const json& j) {
  try {
    const auto n = dim_field(j, "n");
    DegradationParams<double> p{vector_field(j, "drift", n), matrix_field(j, "diffusion", n, n),
                                vector_field(j, "post_tamping_mean", n),
                                matrix_field(j, "post_tamping_cov", n, n)};
    return validated(p);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("degradation params: ") + e.what());
  }
}

ObservationModel<double> model_from_json(const json& j) {
  try {
    const auto n = dim_field(j, "n");
    const auto m = dim_field(j, "m");
    ObservationModel<double> model{matrix_field(j, "H", m, n), vector_field(j, "b", m),
                                   matrix_field(j, "R", m, m)};
    return validated(model);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("observation model: ") + e.what());
  }
}

std::vector<DegradationParams<double>> load_params(const fs::path& path) {
  const auto j = read_json(path);
  std::vector<DegradationParams<double>> out;
  try {
    if (j.is_array()) {
      for (const auto& item : j) out.push_back(params_from_json(item));
    } else {
      out.push_back(params_from_json(j));
    }
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  if (out.empty()) throw InvalidArgument(path.string() + ": no parameter samples");
  return out;
}

ObservationModel<double> load_model(const fs::path& path) {
  try {
    return model_from_json(read_json(path));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void save_params(const fs::path& path, const std::vector<DegradationParams<double>>& p) {
  json j;
  if (p.size() == 1) {
    j = to_json(p.front());
  } else {
    j = json::array();
    for (const auto& s : p) j.push_back(to_json(s));
  }
  write_text(path, j.dump(2) + "\n");
}

void save_model(const fs::path& path, const ObservationModel<double>& m) {
  write_text(path, to_json(m).dump(2) + "\n");
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw IngestionError(source + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  const auto& cell = rows.at(row).at(col);
  double value = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() ||
      !std::isfinite(value)) {
    throw IngestionError(source + ": row " + std::to_string(line_numbers.at(row)) + ", column " +
                         std::to_string(col + 1) + " ('" + header.at(col) +
                         "'): not a finite number: '" + cell + "'");
  }
  return value;
}

CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  table.source = source;
  std::string line;
  std::size_t line_no = 0;
  auto split = [](const std::string& text) {
    std::vector<std::string> cells;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!text.empty() && text.back() == ',') cells.emplace_back();
    return cells;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw IngestionError(source + ": row " + std::to_string(line_no) + " has " +
                           std::to_string(cells.size()) + " cells, header has " +
                           std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  return table;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  return read_csv(in, path.string());
}

PairedDataset<double> read_paired(const CsvTable& table, double floor_mm,
                                  const std::optional<std::string>& segment) {
  if (table.header.empty()) throw InsufficientData(table.source + ": empty file");
  const auto z_cols = numbered_columns(table, "z_");
  const auto y_cols = numbered_columns(table, "y_");
  table.column("time");
  const auto rows = select_rows(table, segment, false);
  PairedDataset<double> data;
  data.z_rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(z_cols.size()));
  data.y_rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(y_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    table.number(rows[i], table.column("time"));
    data.z_rows.row(r) = logged_row(table, rows[i], z_cols, floor_mm).transpose();
    data.y_rows.row(r) = logged_row(table, rows[i], y_cols, floor_mm).transpose();
  }
  return data;
}

std::vector<GeometryState<double>> read_references(const CsvTable& table, double floor_mm,
                                                   const std::optional<std::string>& segment) {
  if (table.header.empty()) return {};
  const auto z_cols = numbered_columns(table, "z_");
  const auto t_col = table.column("time");
  const auto seg_col = table.column("segment_id");
  std::vector<GeometryState<double>> out;
  for (const auto r : select_rows(table, segment, true)) {
    out.push_back({logged_row(table, r, z_cols, floor_mm), table.number(r, t_col),
                   table.rows[r][seg_col]});
  }
  return out;
}

std::vector<OnboardIndex<double>> read_onboard(const CsvTable& table, double floor_mm,
                                               const std::optional<std::string>& segment) {
  if (table.header.empty()) return {};
  const auto y_cols = numbered_columns(table, "y_");
  const auto t_col = table.column("time");
  const auto seg_col = table.column("segment_id");
  std::vector<OnboardIndex<double>> out;
  for (const auto r : select_rows(table, segment, true)) {
    out.push_back({logged_row(table, r, y_cols, floor_mm), table.number(r, t_col),
                   table.rows[r][seg_col]});
  }
  return out;
}

MaintenanceSchedule read_maintenance(const CsvTable& table,
                                     const std::optional<std::string>& segment) {
  if (table.header.empty()) return {};
  const auto t_col = table.column("interval_end_time");
  std::vector<double> ends;
  for (const auto r : select_rows(table, segment, true)) ends.push_back(table.number(r, t_col));
  return MaintenanceSchedule(std::move(ends));
}

TrajectoryRow make_row(const FilterState<double>& state, double level) {
  TrajectoryRow row{state.time, state.kind, state.estimate, state.cov, credible_width(state.cov), {}};
  for (Eigen::Index i = 0; i < state.estimate.size(); ++i) {
    row.intervals.push_back(credible_interval(state.estimate, state.cov, level, i));
  }
  return row;
}

TrajectoryRow make_row(const MixtureEstimate<double>& mix, double level) {
  const MatrixXd cov = mixture_cov(mix);
  TrajectoryRow row{mix.time, mix.kind, mixture_mean(mix), cov, credible_width(cov), {}};
  for (Eigen::Index i = 0; i < row.estimate.size(); ++i) {
    row.intervals.push_back(credible_interval(mix, level, i));
  }
  return row;
}

void write_trajectory(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  const Eigen::Index n = rows.empty() ? 0 : rows.front().estimate.size();
  out << "time,kind";
  for (Eigen::Index i = 1; i <= n; ++i) out << ",z_hat_" << i;
  for (Eigen::Index i = 1; i <= n; ++i) {
    for (Eigen::Index j = 1; j <= n; ++j) out << ",P_" << i << '_' << j;
  }
  out << ",W";
  for (Eigen::Index i = 1; i <= n; ++i) out << ",lo_" << i << ",hi_" << i;
  out << '\n';
  for (const auto& row : rows) {
    out << format_double(row.time) << ',' << to_string(row.kind);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(row.estimate[i]);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) out << ',' << format_double(row.cov(i, j));
    }
    out << ',' << format_double(row.width);
    for (const auto& iv : row.intervals) {
      out << ',' << format_double(iv.lo) << ',' << format_double(iv.hi);
    }
    out << '\n';
  }
}

std::vector<TrajectoryRow> read_trajectory(std::istream& in) {
  const auto table = read_csv(in, "trajectory");
  std::vector<TrajectoryRow> rows;
  if (table.header.empty()) return rows;
  const auto z_cols = numbered_columns(table, "z_hat_");
  const auto n = static_cast<Eigen::Index>(z_cols.size());
  const auto kind_col = table.column("kind");
  const std::map<std::string, EventKind> kinds{{"reference", EventKind::Reference},
                                               {"update", EventKind::Update},
                                               {"predict", EventKind::Predict}};
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    TrajectoryRow row;
    row.time = table.number(r, table.column("time"));
    const auto it = kinds.find(table.rows[r][kind_col]);
    if (it == kinds.end()) {
      throw IngestionError("trajectory: row " + std::to_string(table.line_numbers[r]) +
                           ": unknown kind '" + table.rows[r][kind_col] + "'");
    }
    row.kind = it->second;
    row.estimate.resize(n);
    row.cov.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      row.estimate[i] = table.number(r, z_cols[static_cast<std::size_t>(i)]);
      const auto si = std::to_string(i + 1);
      row.intervals.push_back({table.number(r, table.column("lo_" + si)),
                               table.number(r, table.column("hi_" + si))});
      for (Eigen::Index j = 0; j < n; ++j) {
        row.cov(i, j) = table.number(r, table.column("P_" + si + "_" + std::to_string(j + 1)));
      }
    }
    row.width = table.number(r, table.column("W"));
    rows.push_back(std::move(row));
  }
  return rows;
}

ExperimentFile load_experiment(const fs::path& path, double floor_mm) {
  const auto j = read_json(path);
  if (!j.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
  const fs::path base = path.parent_path();
  std::vector<std::string> errors;
  ExperimentFile file;
  auto& cfg = file.config;

  auto number = [&](const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) {
      errors.push_back(std::string(key) + ": must be a number");
      return fallback;
    }
    return j[key].get<double>();
  };
  auto numbers = [&](const char* key) {
    std::vector<double> out;
    if (!j.contains(key)) return out;
    if (!j[key].is_array()) {
      errors.push_back(std::string(key) + ": must be an array of numbers");
      return out;
    }
    for (const auto& v : j[key]) {
      if (!v.is_number()) {
        errors.push_back(std::string(key) + ": must be an array of numbers");
        return std::vector<double>{};
      }
      out.push_back(v.get<double>());
    }
    return out;
  };
  auto resolve = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key) || !j[key].is_string()) {
      errors.push_back(std::string(key) + ": required file path missing");
      return std::nullopt;
    }
    fs::path p = j[key].get<std::string>();
    return p.is_absolute() ? p : base / p;
  };

  cfg.horizon = number("horizon_weeks", 52.0);
  cfg.measurement_interval = number("measurement_interval_weeks", 1.0);
  const double reps = number("n_replications", 1.0);
  if (reps != std::floor(reps)) errors.emplace_back("n_replications: must be an integer");
  cfg.n_replications = static_cast<int>(reps);
  if (j.contains("seed")) {
    if (j["seed"].is_number_unsigned()) {
      cfg.rng_master_seed = j["seed"].get<std::uint64_t>();
    } else {
      errors.emplace_back("seed: must be a non-negative integer");
    }
  }
  cfg.level = number("level", 0.95);
  const double threads = number("threads", 0.0);
  cfg.threads = threads >= 0.0 ? static_cast<unsigned>(threads) : 0U;
  if (threads < 0.0) errors.emplace_back("threads: must be non-negative");

  if (!(cfg.horizon > 0.0) || !std::isfinite(cfg.horizon)) {
    errors.emplace_back("horizon_weeks: must be positive and finite");
  }
  if (!(cfg.measurement_interval > 0.0) || !(cfg.measurement_interval <= cfg.horizon)) {
    errors.emplace_back("measurement_interval_weeks: must satisfy 0 < interval <= horizon");
  }
  if (cfg.n_replications < 1) errors.emplace_back("n_replications: must be at least 1");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) errors.emplace_back("level: must lie in (0, 1)");

  if (!j.contains("initial_state") || !j["initial_state"].is_object()) {
    errors.emplace_back("initial_state: required object missing");
  } else {
    const auto& s = j["initial_state"];
    cfg.initial_state.time = s.value("time", 0.0);
    cfg.initial_state.segment_id = s.value("segment_id", std::string("synthetic"));
    if (!s.contains("values_mm") || !s["values_mm"].is_array() || s["values_mm"].empty()) {
      errors.emplace_back("initial_state.values_mm: required non-empty array");
    } else {
      VectorXd v(static_cast<Eigen::Index>(s["values_mm"].size()));
      for (std::size_t i = 0; i < s["values_mm"].size(); ++i) {
        const auto& x = s["values_mm"][i];
        if (!x.is_number()) {
          errors.emplace_back("initial_state.values_mm: must hold numbers");
          break;
        }
        v[static_cast<Eigen::Index>(i)] = log_mm(x.get<double>(), floor_mm);
      }
      cfg.initial_state.values = v;
    }
  }

  auto load_with = [&](const char* key, auto loader) {
    const auto p = resolve(key);
    if (!p) return;
    try {
      loader(*p);
    } catch (const Error& e) {
      errors.push_back(std::string(key) + ": " + e.what());
    }
  };
  load_with("params_file", [&](const fs::path& p) { cfg.params = load_params(p); });
  load_with("model_file", [&](const fs::path& p) { cfg.observation_model = load_model(p); });

  try {
    cfg.maintenance = MaintenanceSchedule(numbers("maintenance_interval_ends"));
  } catch (const Error& e) {
    errors.push_back(std::string("maintenance_interval_ends: ") + e.what());
  }
  cfg.extra_reference_times = numbers("extra_reference_times");
  file.intervals = numbers("intervals_weeks");
  for (const double d : file.intervals) {
    if (!(d > 0.0) || d > cfg.horizon) {
      errors.emplace_back("intervals_weeks: every interval must satisfy 0 < interval <= horizon");
      break;
    }
  }
  file.display_means = numbers("display_means_mm");
  for (const double m : file.display_means) {
    if (!(m > 0.0)) {
      errors.emplace_back("display_means_mm: must be positive");
      break;
    }
  }

  if (errors.empty()) {
    for (auto& e : validate(cfg)) errors.push_back(std::move(e));
  }
  if (!errors.empty()) {
    std::string msg = path.string() + ": invalid experiment config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return file;
}

void write_widths(std::ostream& out, const std::vector<double>& times,
                  const std::vector<double>& mean_width, const std::vector<double>& baseline_width) {
  out << "time,mean_W,baseline_W,relative_W\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double rel = baseline_width[k] > 0.0 ? mean_width[k] / baseline_width[k]
                                               : std::numeric_limits<double>::quiet_NaN();
    out << format_double(times[k]) << ',' << format_double(mean_width[k]) << ','
        << format_double(baseline_width[k]) << ',' << format_double(rel) << '\n';
  }
}

void write_sweep_summary(std::ostream& out, const SweepResult& sweep) {
  out << "interval,steady_W,t_stabilize\n";
  for (const auto& s : sweep.intervals) {
    out << format_double(s.interval) << ',' << format_double(s.steady_width) << ','
        << format_double(s.time_to_stabilize) << '\n';
  }
  out << "baseline," << format_double(sweep.baseline_width_at_horizon) << ",inf\n";
}

void write_path(std::ostream& out, const std::vector<double>& times, const Replication& rep) {
  const Eigen::Index n = rep.truth.empty() ? 0 : rep.truth.front().values.size();
  const Eigen::Index m = rep.signals.empty() ? 0 : rep.signals.front().values.size();
  out << "time";
  for (Eigen::Index i = 1; i <= n; ++i) out << ",z_" << i;
  for (Eigen::Index i = 1; i <= m; ++i) out << ",y_" << i;
  for (Eigen::Index i = 1; i <= n; ++i) out << ",z_hat_" << i;
  out << ",W\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    out << format_double(times[k]);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(rep.truth[k].values[i]);
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << format_double(rep.signals[k].values[i]);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(rep.filtered[k].estimate[i]);
    out << ',' << format_double(rep.filtered[k].width) << '\n';
  }
}

}  // namespace trackfusion
