#pragma once

#include "ctot/labels.hpp"
#include "ctot/synth.hpp"
#include "ctot/trajectory.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace ctot::io {

/// Metadata written as "# key=<json>" lines above the CSV header.
using Metadata = nlohmann::ordered_json;

/// Plain numeric CSV: metadata, one header line, then rows of numbers.
struct CsvTable {
  std::string path;
  Metadata meta = Metadata::object();
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> lines;  // source line of each row, 1-based

  /// Column position by name; ValidationError if missing.
  std::size_t column(const std::string& name) const;
  /// Names starting with `prefix` followed by 0, 1, ... in order.
  std::vector<std::size_t> indexed_columns(const std::string& prefix) const;
  /// Value at (row, col) that must be a non-negative integer.
  Index integer(std::size_t row, std::size_t col) const;
  [[noreturn]] void fail(std::size_t row, const std::string& message) const;
};

/// Decimal text of v with 17 significant digits, which reads back to the same double.
std::string format_number(double v);

/// Throws IoError if the file cannot be opened, ValidationError with "path:line:" on bad content.
CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const Metadata& meta, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);
/// Creates the directory (and parents) if needed; IoError when that fails or it is not writable.
void ensure_directory(const std::string& dir);

std::vector<std::string> coordinate_columns(const std::string& prefix, Index dim);

// snapshots.csv: point_id, interval_index, interval_start, interval_end, x_0..x_{d-1}
void write_snapshots(const std::string& path, const std::vector<Snapshot>& snapshots, const Metadata& meta);
std::vector<Snapshot> read_snapshots(const std::string& path, Metadata* meta = nullptr);

// labels.csv: point_id, interval_index, t_tilde
void write_labels(const std::string& path, const LabeledDataset& dataset, const Metadata& meta);
/// Labels in point_id order; ids must be exactly 0..N-1 and agree with `snapshots`.
Eigen::VectorXd read_labels(const std::string& path, const std::vector<Snapshot>& snapshots,
                            Metadata* meta = nullptr);

// trajectories.csv: traj_id, step, t, x_0..x_{d-1}
void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories, const Metadata& meta);
std::vector<Trajectory> read_trajectories(const std::string& path, Metadata* meta = nullptr);

// truth_trajectories.csv (trajectory format) and truth_distributions.csv: step, t, sample_id, x_*
void write_truth(const std::string& dir, const GroundTruth& truth, const Metadata& meta);
GroundTruth read_truth(const std::string& dir);
bool truth_present(const std::string& dir);

// true_times.csv: point_id, true_time, noisy_time, branch
void write_true_times(const std::string& path, const GeneratedDataset& data, const Metadata& meta);
Eigen::VectorXd read_true_times(const std::string& path);

// loss.csv: iteration, loss
void write_loss_curve(const std::string& path, const std::vector<double>& loss, const Metadata& meta);

}  // namespace ctot::io
