#include "ctot/labels.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace ctot {

void InferenceOptions::validate() const {
  require(K >= 1, "inference: K must be >= 1");
  if (screening_c) require(std::isfinite(*screening_c) && *screening_c >= 1.0, "inference: screening c must be >= 1");
  if (minibatch_m) require(*minibatch_m >= K, "inference: minibatch m must be >= K");
  if (solver.kind == SolverKind::Entropic)
    require(solver.entropic.epsilon > 0.0, "inference: epsilon must be > 0");
}

namespace {

PointSet rows_of(const PointSet& points, const IndexList& idx) { return points(idx, Eigen::all); }

IndexList complement(Index n, const std::vector<char>& taken) {
  IndexList out;
  for (Index i = 0; i < n; ++i)
    if (!taken[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

IndexList map_back(const IndexList& local, const IndexList& global) {
  IndexList out;
  out.reserve(local.size());
  for (Index i : local) out.push_back(global[static_cast<std::size_t>(i)]);
  std::sort(out.begin(), out.end());
  return out;
}

// Boundary subsets, optionally after screening. Screened sides keep the
// per-point capacity K / N of the full problem, i.e. tau' = K * N' / N.
std::pair<IndexList, IndexList> boundary_with_screening(const PointSet& left, const PointSet& right, Index K,
                                                        const SolverOptions& solver,
                                                        std::optional<double> screening_c) {
  if (!screening_c) return boundary_subsets(left, right, K, solver);
  const auto [keep_l, keep_r] = screen_candidates(left, right, *screening_c, K);
  const Index nl = left.rows();
  const Index nr = right.rows();
  if (static_cast<Index>(keep_l.size()) == nl && static_cast<Index>(keep_r.size()) == nr)
    return boundary_subsets(left, right, K, solver);
  const PotBounds bounds{static_cast<double>(K) * static_cast<double>(keep_l.size()) / static_cast<double>(nl),
                         static_cast<double>(K) * static_cast<double>(keep_r.size()) / static_cast<double>(nr)};
  const auto plan =
      solve_pot(CostMatrix::squared_euclidean(rows_of(left, keep_l), rows_of(right, keep_r)), bounds, solver);
  return {map_back(top_mass_indices(plan, PlanSide::Rows, ceil_div(nl, K)), keep_l),
          map_back(top_mass_indices(plan, PlanSide::Cols, ceil_div(nr, K)), keep_r)};
}

void check_pair(const PointSet& left, const PointSet& right, Index K) {
  require(left.rows() > 0 && right.rows() > 0, "label inference: empty snapshot");
  require(left.cols() == right.cols(), "label inference: snapshots differ in dimension");
  require(K >= 1, "label inference: K must be >= 1");
  require(K <= std::min(left.rows(), right.rows()), "label inference: K exceeds snapshot size");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> infer_full(const Snapshot& left, const Snapshot& right,
                                                       const InferenceOptions& options,
                                                       const TimeDensity& density) {
  check_pair(left.points, right.points, options.K);
  const auto [seed_l, seed_r] =
      boundary_with_screening(left.points, right.points, options.K, options.solver, options.screening_c);
  const auto part_l = iterate_partition(left.points, seed_l, options.K, Direction::Backward, options.solver);
  const auto part_r = iterate_partition(right.points, seed_r, options.K, Direction::Forward, options.solver);
  return {assign_labels(part_l, left.size(), left.interval, density),
          assign_labels(part_r, right.size(), right.interval, density)};
}

// Splits a shuffled index list into `groups` contiguous batches whose sizes differ by at most one.
std::vector<IndexList> split_batches(IndexList idx, Index groups, Rng rng) {
  std::shuffle(idx.begin(), idx.end(), rng);
  const Index n = static_cast<Index>(idx.size());
  std::vector<IndexList> out(static_cast<std::size_t>(groups));
  Index pos = 0;
  for (Index g = 0; g < groups; ++g) {
    const Index size = n / groups + (g < n % groups ? 1 : 0);
    out[g].assign(idx.begin() + pos, idx.begin() + pos + size);
    pos += size;
  }
  return out;
}

}  // namespace

std::pair<IndexList, IndexList> boundary_subsets(const PointSet& left, const PointSet& right, Index K,
                                                 const SolverOptions& solver) {
  check_pair(left, right, K);
  const Index nl = left.rows();
  const Index nr = right.rows();
  if (K == 1) {
    IndexList all_l(static_cast<std::size_t>(nl));
    IndexList all_r(static_cast<std::size_t>(nr));
    std::iota(all_l.begin(), all_l.end(), Index{0});
    std::iota(all_r.begin(), all_r.end(), Index{0});
    return {all_l, all_r};
  }
  const double k = static_cast<double>(K);
  const auto plan = solve_pot(CostMatrix::squared_euclidean(left, right), PotBounds{k, k}, solver);
  return {top_mass_indices(plan, PlanSide::Rows, ceil_div(nl, K)),
          top_mass_indices(plan, PlanSide::Cols, ceil_div(nr, K))};
}

SubsetPartition iterate_partition(const PointSet& points, const IndexList& seed, Index K, Direction direction,
                                  const SolverOptions& solver) {
  const Index n = points.rows();
  require(K >= 1, "iterate_partition: K must be >= 1");
  require(n > 0, "iterate_partition: empty snapshot");
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  for (Index i : seed) {
    require(i >= 0 && i < n, "iterate_partition: seed index out of range");
    require(!taken[static_cast<std::size_t>(i)], "iterate_partition: duplicate seed index");
    taken[static_cast<std::size_t>(i)] = 1;
  }
  SubsetPartition out;
  out.direction = direction;
  out.subsets.reserve(static_cast<std::size_t>(K));
  IndexList first = seed;
  std::sort(first.begin(), first.end());
  out.subsets.push_back(first);
  if (K == 1) {
    require(static_cast<Index>(seed.size()) == n, "iterate_partition: with K=1 the seed must cover the snapshot");
    return out;
  }

  for (Index k = 1; k <= K - 2; ++k) {
    IndexList remaining = complement(n, taken);
    const IndexList& current = out.subsets.back();
    // Spread what is left evenly over the K - k subsets still to fill, so the
    // partition never runs out early when K does not divide n.
    const Index count = ceil_div(static_cast<Index>(remaining.size()), K - k);
    IndexList next;
    if (count == static_cast<Index>(remaining.size())) {
      next = remaining;
    } else if (current.empty()) {
      next.assign(remaining.begin(), remaining.begin() + count);
    } else {
      const PotBounds bounds{1.0, static_cast<double>(K - k)};
      const auto plan = solve_pot(CostMatrix::squared_euclidean(rows_of(points, current), rows_of(points, remaining)),
                                  bounds, solver);
      next = map_back(top_mass_indices(plan, PlanSide::Cols, count), remaining);
    }
    for (Index i : next) taken[static_cast<std::size_t>(i)] = 1;
    out.subsets.push_back(std::move(next));
  }
  out.subsets.push_back(complement(n, taken));
  return out;
}

Eigen::VectorXd assign_labels(const SubsetPartition& partition, Index n_points, const Interval& interval,
                              const TimeDensity& density) {
  require(interval.start < interval.end, "assign_labels: interval must have start < end");
  const double z = density.mass(interval);
  require(z > 0.0 && std::isfinite(z), "assign_labels: time density has no mass on the interval");
  const Index K = static_cast<Index>(partition.subsets.size());
  Eigen::VectorXd labels = Eigen::VectorXd::Constant(n_points, std::numeric_limits<double>::quiet_NaN());
  for (Index k = 1; k <= K; ++k) {
    const double q = static_cast<double>(k) / static_cast<double>(K + 1);
    const double t = partition.direction == Direction::Backward ? density.quantile_from_end(interval, q)
                                                                : density.quantile(interval, q);
    for (Index i : partition.subsets[static_cast<std::size_t>(k - 1)]) {
      require(i >= 0 && i < n_points, "assign_labels: partition index out of range");
      labels[i] = t;
    }
  }
  require(labels.allFinite(), "assign_labels: partition does not cover the snapshot");
  return labels;
}

Eigen::VectorXd merge_labels(const std::vector<std::optional<double>>& backward,
                             const std::vector<std::optional<double>>& forward, const Interval& interval) {
  require(backward.size() == forward.size(), "merge_labels: label lists differ in length");
  Eigen::VectorXd out(static_cast<Index>(backward.size()));
  for (std::size_t i = 0; i < backward.size(); ++i) {
    if (backward[i] && forward[i])
      out[static_cast<Index>(i)] = 0.5 * (*backward[i] + *forward[i]);
    else if (backward[i])
      out[static_cast<Index>(i)] = *backward[i];
    else if (forward[i])
      out[static_cast<Index>(i)] = *forward[i];
    else
      out[static_cast<Index>(i)] = interval.midpoint();
  }
  return out;
}

std::pair<IndexList, IndexList> screen_candidates(const PointSet& left, const PointSet& right, double c,
                                                  Index K) {
  require(std::isfinite(c) && c >= 1.0, "screening: c must be >= 1");
  require(K >= 1, "screening: K must be >= 1");
  require(left.rows() > 0 && right.rows() > 0, "screening: empty snapshot");
  require(left.cols() == right.cols(), "screening: snapshots differ in dimension");
  const Index nl = left.rows();
  const Index nr = right.rows();
  Eigen::VectorXd near_l = Eigen::VectorXd::Constant(nl, std::numeric_limits<double>::infinity());
  Eigen::VectorXd near_r = Eigen::VectorXd::Constant(nr, std::numeric_limits<double>::infinity());
  for (Index i = 0; i < nl; ++i) {
    for (Index j = 0; j < nr; ++j) {
      const double d = (left.row(i) - right.row(j)).squaredNorm();
      near_l[i] = std::min(near_l[i], d);
      near_r[j] = std::min(near_r[j], d);
    }
  }
  auto keep = [&](const Eigen::VectorXd& near, Index n) {
    const double wanted = std::ceil(c * static_cast<double>(ceil_div(n, K)));
    IndexList idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    if (wanted >= static_cast<double>(n)) return idx;
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return near[a] < near[b]; });
    idx.resize(static_cast<std::size_t>(wanted));
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  return {keep(near_l, nl), keep(near_r, nr)};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> minibatch_infer(const Snapshot& left, const Snapshot& right,
                                                            const InferenceOptions& options,
                                                            const TimeDensity& density, Rng rng) {
  options.validate();
  require(options.minibatch_m.has_value(), "minibatch_infer: minibatch m not set");
  const Index m = *options.minibatch_m;
  const Index nl = left.size();
  const Index nr = right.size();
  const Index groups = std::max(ceil_div(nl, m), ceil_div(nr, m));
  InferenceOptions inner = options;
  inner.minibatch_m.reset();
  if (groups == 1) return infer_full(left, right, inner, density);

  IndexList all_l(static_cast<std::size_t>(nl));
  IndexList all_r(static_cast<std::size_t>(nr));
  std::iota(all_l.begin(), all_l.end(), Index{0});
  std::iota(all_r.begin(), all_r.end(), Index{0});
  const auto batches_l = split_batches(all_l, groups, rng.split(0));
  const auto batches_r = split_batches(all_r, groups, rng.split(1));

  Eigen::VectorXd labels_l(nl);
  Eigen::VectorXd labels_r(nr);
  for (Index g = 0; g < groups; ++g) {
    const Snapshot sub_l{rows_of(left.points, batches_l[g]), left.interval};
    const Snapshot sub_r{rows_of(right.points, batches_r[g]), right.interval};
    const auto [bl, br] = infer_full(sub_l, sub_r, inner, density);
    for (std::size_t i = 0; i < batches_l[g].size(); ++i) labels_l[batches_l[g][i]] = bl[static_cast<Index>(i)];
    for (std::size_t i = 0; i < batches_r[g].size(); ++i) labels_r[batches_r[g][i]] = br[static_cast<Index>(i)];
  }
  return {labels_l, labels_r};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> infer_pair(const Snapshot& left, const Snapshot& right,
                                                       const InferenceOptions& options,
                                                       const TimeDensity& density, Rng rng) {
  options.validate();
  if (options.minibatch_m) return minibatch_infer(left, right, options, density, rng);
  return infer_full(left, right, options, density);
}

LabeledDataset make_dataset(const std::vector<Snapshot>& snapshots, const Eigen::VectorXd& labels) {
  require(!snapshots.empty(), "dataset: no snapshots");
  const Index d = snapshots.front().dim();
  Index total = 0;
  for (const auto& s : snapshots) {
    require(s.size() > 0, "dataset: empty snapshot");
    require(s.dim() == d, "dataset: snapshots differ in dimension");
    total += s.size();
  }
  require(labels.size() == total, "dataset: label count differs from point count");
  LabeledDataset out;
  out.points.resize(total, d);
  out.labels = labels;
  out.interval_index.reserve(static_cast<std::size_t>(total));
  Index offset = 0;
  for (std::size_t j = 0; j < snapshots.size(); ++j) {
    out.points.middleRows(offset, snapshots[j].size()) = snapshots[j].points;
    out.interval_index.insert(out.interval_index.end(), static_cast<std::size_t>(snapshots[j].size()),
                              static_cast<Index>(j));
    out.intervals.push_back(snapshots[j].interval);
    offset += snapshots[j].size();
  }
  return out;
}

LabeledDataset infer_labels_dataset(const std::vector<Snapshot>& snapshots, const InferenceOptions& options,
                                    const TimeDensity& density, std::vector<double>* pair_seconds) {
  options.validate();
  require(!snapshots.empty(), "label inference: no snapshots");
  for (std::size_t j = 0; j < snapshots.size(); ++j) {
    require(snapshots[j].interval.start < snapshots[j].interval.end, "label inference: interval must have start < end");
    if (j > 0) {
      require(snapshots[j - 1].interval.start < snapshots[j].interval.start,
              "label inference: snapshots must be ordered by interval start");
      require(snapshots[j - 1].interval.end <= snapshots[j].interval.start, "label inference: intervals overlap");
    }
  }

  const std::size_t T = snapshots.size();
  std::vector<std::vector<std::optional<double>>> backward(T), forward(T);
  for (std::size_t j = 0; j < T; ++j) {
    backward[j].resize(static_cast<std::size_t>(snapshots[j].size()));
    forward[j].resize(static_cast<std::size_t>(snapshots[j].size()));
  }
  const Rng root(options.rng_seed);
  if (pair_seconds) pair_seconds->clear();
  for (std::size_t j = 0; j + 1 < T; ++j) {
    const auto start = std::chrono::steady_clock::now();
    const auto [bl, fr] = infer_pair(snapshots[j], snapshots[j + 1], options, density, root.split(j));
    if (pair_seconds)
      pair_seconds->push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    for (Index i = 0; i < bl.size(); ++i) backward[j][static_cast<std::size_t>(i)] = bl[i];
    for (Index i = 0; i < fr.size(); ++i) forward[j + 1][static_cast<std::size_t>(i)] = fr[i];
  }

  Index total = 0;
  for (const auto& s : snapshots) total += s.size();
  Eigen::VectorXd labels(total);
  Index offset = 0;
  for (std::size_t j = 0; j < T; ++j) {
    labels.segment(offset, snapshots[j].size()) = merge_labels(backward[j], forward[j], snapshots[j].interval);
    offset += snapshots[j].size();
  }
  LabeledDataset out = make_dataset(snapshots, labels);
  out.midpoint_fallback = T == 1;
  return out;
}

}  // namespace ctot
