#pragma once

#include "ctot/core.hpp"
#include "ctot/labels.hpp"
#include "ctot/time_density.hpp"
#include "ctot/trajectory.hpp"

#include <string>
#include <vector>

namespace ctot {

enum class DatasetKind { Spiral, YShaped, Arch, Line1d };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Spiral;
  Index n_per_interval = 1000;
  std::vector<Interval> intervals;  // empty: the kind's default layout
  double time_noise_sigma = 0.1;
  double feature_noise_sigma = 0.1;
  TimeDensity p_t;
  std::uint64_t rng_seed = 0;
  Index truth_steps = 100;
  Index truth_samples = 200;  // points of p*_t per step

  /// Defaults for a kind: intervals, and no feature or time noise for line1d.
  static DatasetSpec defaults(DatasetKind kind);
  void validate() const;
  std::vector<Interval> resolved_intervals() const;
};

struct GeneratedDataset {
  std::vector<Snapshot> snapshots;
  GroundTruth truth;
  // Per point, in snapshot concatenation order.
  Eigen::VectorXd true_times;
  Eigen::VectorXd noisy_times;
  std::vector<int> branch;  // Y-shaped branch (+1/-1), 0 otherwise

  Index size() const { return true_times.size(); }
};

/// Mean path of a kind at time t (`branch` selects the Y-shaped arm after the split).
Eigen::VectorXd mean_path(DatasetKind kind, double t, int branch = 1);

GeneratedDataset generate(const DatasetSpec& spec);
GeneratedDataset gen_spiral(const DatasetSpec& spec);
GeneratedDataset gen_y_shaped(const DatasetSpec& spec);
GeneratedDataset gen_arch(const DatasetSpec& spec);
GeneratedDataset gen_line1d(const DatasetSpec& spec);

/// Interval index for a time: half-open [start, end) except the last interval,
/// which is closed; times outside every interval go to the nearest one.
Index interval_of(double t, const std::vector<Interval>& intervals);

/// Bins points by time. `order` receives, per emitted point, its input row.
std::vector<Snapshot> aggregate_to_snapshots(const PointSet& points, const Eigen::VectorXd& times,
                                             const std::vector<Interval>& intervals, IndexList* order = nullptr);

}  // namespace ctot
