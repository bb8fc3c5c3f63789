#pragma once

#include "ctot/core.hpp"
#include "ctot/pot.hpp"
#include "ctot/random.hpp"
#include "ctot/time_density.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace ctot {

/// Points observed somewhere inside one coarse interval.
struct Snapshot {
  PointSet points;
  Interval interval;

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

enum class Direction { Backward, Forward };

/// Ordered subsets S_1..S_K of one snapshot; S_1 touches the shared boundary.
struct SubsetPartition {
  std::vector<IndexList> subsets;
  Direction direction = Direction::Backward;
};

struct InferenceOptions {
  Index K = 100;
  SolverOptions solver;
  std::optional<double> screening_c;
  std::optional<Index> minibatch_m;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// All points with their inferred time labels.
struct LabeledDataset {
  PointSet points;
  Eigen::VectorXd labels;
  std::vector<Index> interval_index;  // source snapshot per point
  std::vector<Interval> intervals;
  /// Set when no neighbouring pair existed and labels fell back to midpoints.
  bool midpoint_fallback = false;

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

/// S_1^- (rows of `left`) and S_1^+ (rows of `right`) from POT_(K,K).
std::pair<IndexList, IndexList> boundary_subsets(const PointSet& left, const PointSet& right, Index K,
                                                 const SolverOptions& solver = {});

/// Peels S_2..S_K off `points`, starting from the boundary subset `seed`.
/// Each S_{k+1} takes ceil(r / (K - k)) of the r points still unassigned, which
/// is ceil(N/K) whenever K divides N; S_K is whatever remains.
SubsetPartition iterate_partition(const PointSet& points, const IndexList& seed, Index K,
                                  Direction direction, const SolverOptions& solver = {});

/// Label of every point in S_k is the inverse CDF at k / (K + 1), measured from
/// the shared boundary: the interval end for Backward, the start for Forward.
Eigen::VectorXd assign_labels(const SubsetPartition& partition, Index n_points, const Interval& interval,
                              const TimeDensity& density = {});

/// Per-point mean of the available candidate labels; midpoint when there are none.
Eigen::VectorXd merge_labels(const std::vector<std::optional<double>>& backward,
                             const std::vector<std::optional<double>>& forward, const Interval& interval);

/// Keeps ceil(c * ceil(N / K)) points per side with the smallest nearest-neighbour
/// distance to the other side, returned in ascending index order.
std::pair<IndexList, IndexList> screen_candidates(const PointSet& left, const PointSet& right, double c,
                                                  Index K);

/// Labels for one pair of neighbouring snapshots: backward labels for `left`,
/// forward labels for `right`. Applies screening and mini-batching per `options`.
std::pair<Eigen::VectorXd, Eigen::VectorXd> infer_pair(const Snapshot& left, const Snapshot& right,
                                                       const InferenceOptions& options,
                                                       const TimeDensity& density, Rng rng);

/// Mini-batched variant of infer_pair; `options.minibatch_m` must be set.
std::pair<Eigen::VectorXd, Eigen::VectorXd> minibatch_infer(const Snapshot& left, const Snapshot& right,
                                                            const InferenceOptions& options,
                                                            const TimeDensity& density, Rng rng);

/// Step 1 over every neighbouring pair of an ordered snapshot list. When given,
/// `pair_seconds` receives the wall time of each pair.
LabeledDataset infer_labels_dataset(const std::vector<Snapshot>& snapshots, const InferenceOptions& options,
                                    const TimeDensity& density = {}, std::vector<double>* pair_seconds = nullptr);

/// Concatenates snapshots into one dataset with the given labels.
LabeledDataset make_dataset(const std::vector<Snapshot>& snapshots, const Eigen::VectorXd& labels);

}  // namespace ctot
