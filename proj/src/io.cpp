#include "ctot/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace ctot::io {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) ensure_directory(p.parent_path().string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError(path + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<std::size_t> CsvTable::indexed_columns(const std::string& prefix) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0;; ++k) {
    const auto it = std::find(header.begin(), header.end(), prefix + std::to_string(k));
    if (it == header.end()) break;
    out.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  if (out.empty()) throw ValidationError(path + ": no '" + prefix + "0' column");
  return out;
}

Index CsvTable::integer(std::size_t row, std::size_t col) const {
  const double v = rows[row][col];
  if (v < 0.0 || v != std::floor(v) || v > 9e15) fail(row, "column '" + header[col] + "' must be a non-negative integer");
  return static_cast<Index>(v);
}

void CsvTable::fail(std::size_t row, const std::string& message) const {
  throw ValidationError(path + ":" + std::to_string(lines[row]) + ": " + message);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  CsvTable t;
  t.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      if (!t.header.empty()) throw ValidationError(path + ":" + std::to_string(lineno) + ": metadata after header");
      const std::string body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;  // free-form comment
      try {
        t.meta[trim(body.substr(0, eq))] = nlohmann::ordered_json::parse(body.substr(eq + 1));
      } catch (const nlohmann::json::exception&) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": bad metadata value");
      }
      continue;
    }
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& s = cells[c];
      const char* first = s.data();
      if (!s.empty() && s[0] == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), row[c]);
      if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(row[c]))
        throw ValidationError(path + ":" + std::to_string(lineno) + ": field '" + t.header[c] +
                              "' is not a finite number: '" + s + "'");
    }
    t.rows.push_back(std::move(row));
    t.lines.push_back(lineno);
  }
  if (in.bad()) throw IoError("read failed for " + path);
  if (t.header.empty()) throw ValidationError(path + ": no header line");
  return t;
}

void write_csv(const std::string& path, const Metadata& meta, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out = open_out(path);
  for (const auto& [key, value] : meta.items()) out << "# " << key << '=' << value.dump() << '\n';
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_number(row[c]);
    out << '\n';
  }
  finish(out, path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  finish(out, path);
}

void ensure_directory(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

std::vector<std::string> coordinate_columns(const std::string& prefix, Index dim) {
  std::vector<std::string> out;
  for (Index k = 0; k < dim; ++k) out.push_back(prefix + std::to_string(k));
  return out;
}

void write_snapshots(const std::string& path, const std::vector<Snapshot>& snapshots, const Metadata& meta) {
  require(!snapshots.empty(), "snapshots: nothing to write");
  const Index d = snapshots.front().dim();
  std::vector<std::string> header{"point_id", "interval_index", "interval_start", "interval_end"};
  for (const auto& c : coordinate_columns("x_", d)) header.push_back(c);
  std::vector<std::vector<double>> rows;
  Index id = 0;
  for (std::size_t j = 0; j < snapshots.size(); ++j) {
    const Snapshot& s = snapshots[j];
    require(s.dim() == d, "snapshots: dimensions differ");
    for (Index i = 0; i < s.size(); ++i) {
      std::vector<double> row{static_cast<double>(id++), static_cast<double>(j), s.interval.start, s.interval.end};
      for (Index k = 0; k < d; ++k) row.push_back(s.points(i, k));
      rows.push_back(std::move(row));
    }
  }
  write_csv(path, meta, header, rows);
}

std::vector<Snapshot> read_snapshots(const std::string& path, Metadata* meta) {
  const CsvTable t = read_csv(path);
  const auto c_id = t.column("point_id");
  const auto c_iv = t.column("interval_index");
  const auto c_s = t.column("interval_start");
  const auto c_e = t.column("interval_end");
  const auto xs = t.indexed_columns("x_");
  if (t.rows.empty()) throw ValidationError(path + ": no data rows");

  std::vector<std::size_t> order(t.rows.size());
  for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t.rows[a][c_id] < t.rows[b][c_id]; });

  std::vector<Snapshot> out;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t r = order[k];
    if (t.integer(r, c_id) != static_cast<Index>(k)) t.fail(r, "point ids must be 0..N-1 without gaps or repeats");
    const Index iv = t.integer(r, c_iv);
    const Interval interval{t.rows[r][c_s], t.rows[r][c_e]};
    if (iv == static_cast<Index>(out.size())) {
      if (!(interval.start < interval.end)) t.fail(r, "interval_start must be < interval_end");
      out.push_back({PointSet(), interval});
      members.emplace_back();
    } else if (iv + 1 != static_cast<Index>(out.size())) {
      t.fail(r, "interval_index must be non-decreasing in point_id order and start at 0");
    }
    if (interval.start != out.back().interval.start || interval.end != out.back().interval.end)
      t.fail(r, "interval bounds differ within one interval_index");
    members.back().push_back(r);
  }
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j].points.resize(static_cast<Index>(members[j].size()), static_cast<Index>(xs.size()));
    for (std::size_t i = 0; i < members[j].size(); ++i)
      for (std::size_t k = 0; k < xs.size(); ++k)
        out[j].points(static_cast<Index>(i), static_cast<Index>(k)) = t.rows[members[j][i]][xs[k]];
  }
  if (meta) *meta = t.meta;
  return out;
}

void write_labels(const std::string& path, const LabeledDataset& dataset, const Metadata& meta) {
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(dataset.size()));
  for (Index i = 0; i < dataset.size(); ++i)
    rows.push_back({static_cast<double>(i), static_cast<double>(dataset.interval_index[static_cast<std::size_t>(i)]),
                    dataset.labels[i]});
  write_csv(path, meta, {"point_id", "interval_index", "t_tilde"}, rows);
}

Eigen::VectorXd read_labels(const std::string& path, const std::vector<Snapshot>& snapshots, Metadata* meta) {
  const CsvTable t = read_csv(path);
  const auto c_id = t.column("point_id");
  const auto c_iv = t.column("interval_index");
  const auto c_t = t.column("t_tilde");
  std::vector<Index> owner;
  for (std::size_t j = 0; j < snapshots.size(); ++j)
    for (Index i = 0; i < snapshots[j].size(); ++i) owner.push_back(static_cast<Index>(j));
  const Index n = static_cast<Index>(owner.size());
  if (static_cast<Index>(t.rows.size()) != n)
    throw ValidationError(path + ": " + std::to_string(t.rows.size()) + " labels for " + std::to_string(n) +
                          " points");
  Eigen::VectorXd labels(n);
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const Index id = t.integer(r, c_id);
    if (id >= n || seen[static_cast<std::size_t>(id)]) t.fail(r, "point_id out of range or repeated");
    if (t.integer(r, c_iv) != owner[static_cast<std::size_t>(id)]) t.fail(r, "interval_index disagrees with snapshots");
    seen[static_cast<std::size_t>(id)] = true;
    labels[id] = t.rows[r][c_t];
  }
  if (meta) *meta = t.meta;
  return labels;
}

void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories, const Metadata& meta) {
  require(!trajectories.empty(), "trajectories: nothing to write");
  const Index d = trajectories.front().dim();
  std::vector<std::string> header{"traj_id", "step", "t"};
  for (const auto& c : coordinate_columns("x_", d)) header.push_back(c);
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < trajectories.size(); ++j) {
    const Trajectory& tr = trajectories[j];
    require(tr.dim() == d, "trajectories: dimensions differ");
    for (Index k = 0; k <= tr.steps(); ++k) {
      std::vector<double> row{static_cast<double>(j), static_cast<double>(k), tr.time(k)};
      for (Index c = 0; c < d; ++c) row.push_back(tr.states(k, c));
      rows.push_back(std::move(row));
    }
  }
  write_csv(path, meta, header, rows);
}

std::vector<Trajectory> read_trajectories(const std::string& path, Metadata* meta) {
  const CsvTable t = read_csv(path);
  const auto c_id = t.column("traj_id");
  const auto c_step = t.column("step");
  const auto c_t = t.column("t");
  const auto xs = t.indexed_columns("x_");
  std::map<Index, std::map<Index, std::size_t>> by_traj;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto& steps = by_traj[t.integer(r, c_id)];
    if (!steps.emplace(t.integer(r, c_step), r).second) t.fail(r, "repeated (traj_id, step)");
  }
  if (by_traj.empty()) throw ValidationError(path + ": no data rows");
  std::vector<Trajectory> out;
  for (const auto& [id, steps] : by_traj) {
    if (id != static_cast<Index>(out.size())) throw ValidationError(path + ": traj_id values must be 0..M-1");
    const Index n = static_cast<Index>(steps.size());
    if (steps.rbegin()->first != n - 1) t.fail(steps.rbegin()->second, "steps must be 0..T without gaps");
    Trajectory tr;
    tr.states.resize(n, static_cast<Index>(xs.size()));
    for (const auto& [k, r] : steps)
      for (std::size_t c = 0; c < xs.size(); ++c) tr.states(k, static_cast<Index>(c)) = t.rows[r][xs[c]];
    tr.t_start = t.rows[steps.begin()->second][c_t];
    tr.t_end = t.rows[steps.rbegin()->second][c_t];
    out.push_back(std::move(tr));
  }
  if (meta) *meta = t.meta;
  return out;
}

void write_truth(const std::string& dir, const GroundTruth& truth, const Metadata& meta) {
  ensure_directory(dir);
  write_trajectories((fs::path(dir) / "truth_trajectories.csv").string(), truth.trajectories, meta);
  require(!truth.distributions.empty(), "truth: no distributions");
  const Index d = truth.distributions.front().cols();
  std::vector<std::string> header{"step", "t", "sample_id"};
  for (const auto& c : coordinate_columns("x_", d)) header.push_back(c);
  std::vector<std::vector<double>> rows;
  for (Index k = 0; k <= truth.steps(); ++k) {
    const PointSet& p = truth.distributions[static_cast<std::size_t>(k)];
    for (Index i = 0; i < p.rows(); ++i) {
      std::vector<double> row{static_cast<double>(k), truth.time(k), static_cast<double>(i)};
      for (Index c = 0; c < d; ++c) row.push_back(p(i, c));
      rows.push_back(std::move(row));
    }
  }
  write_csv((fs::path(dir) / "truth_distributions.csv").string(), meta, header, rows);
}

bool truth_present(const std::string& dir) {
  return fs::exists(fs::path(dir) / "truth_trajectories.csv") && fs::exists(fs::path(dir) / "truth_distributions.csv");
}

GroundTruth read_truth(const std::string& dir) {
  GroundTruth g;
  g.trajectories = read_trajectories((fs::path(dir) / "truth_trajectories.csv").string());
  const CsvTable t = read_csv((fs::path(dir) / "truth_distributions.csv").string());
  const auto c_step = t.column("step");
  const auto c_t = t.column("t");
  const auto xs = t.indexed_columns("x_");
  std::map<Index, std::vector<std::size_t>> by_step;
  for (std::size_t r = 0; r < t.rows.size(); ++r) by_step[t.integer(r, c_step)].push_back(r);
  if (by_step.empty()) throw ValidationError(t.path + ": no data rows");
  for (const auto& [k, rows] : by_step) {
    if (k != static_cast<Index>(g.distributions.size())) throw ValidationError(t.path + ": steps must be 0..T*");
    PointSet p(static_cast<Index>(rows.size()), static_cast<Index>(xs.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < xs.size(); ++c) p(static_cast<Index>(i), static_cast<Index>(c)) = t.rows[rows[i]][xs[c]];
    g.distributions.push_back(std::move(p));
  }
  g.t_start = t.rows[by_step.begin()->second.front()][c_t];
  g.t_end = t.rows[by_step.rbegin()->second.front()][c_t];
  return g;
}

void write_true_times(const std::string& path, const GeneratedDataset& data, const Metadata& meta) {
  std::vector<std::vector<double>> rows;
  for (Index i = 0; i < data.size(); ++i)
    rows.push_back({static_cast<double>(i), data.true_times[i], data.noisy_times[i],
                    static_cast<double>(data.branch.empty() ? 0 : data.branch[static_cast<std::size_t>(i)])});
  write_csv(path, meta, {"point_id", "true_time", "noisy_time", "branch"}, rows);
}

Eigen::VectorXd read_true_times(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto c_id = t.column("point_id");
  const auto c_t = t.column("true_time");
  Eigen::VectorXd out(static_cast<Index>(t.rows.size()));
  std::vector<bool> seen(t.rows.size(), false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const Index id = t.integer(r, c_id);
    if (id >= out.size() || seen[static_cast<std::size_t>(id)]) t.fail(r, "point_id out of range or repeated");
    seen[static_cast<std::size_t>(id)] = true;
    out[id] = t.rows[r][c_t];
  }
  return out;
}

void write_loss_curve(const std::string& path, const std::vector<double>& loss, const Metadata& meta) {
  std::vector<std::vector<double>> rows;
  rows.reserve(loss.size());
  for (std::size_t i = 0; i < loss.size(); ++i) rows.push_back({static_cast<double>(i), loss[i]});
  write_csv(path, meta, {"iteration", "loss"}, rows);
}

}  // namespace ctot::io
