#include "ctot/synth.hpp"

#include <cmath>
#include <random>

namespace ctot {

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Spiral:
      return "spiral";
    case DatasetKind::YShaped:
      return "y_shaped";
    case DatasetKind::Arch:
      return "arch";
    case DatasetKind::Line1d:
      return "line1d";
  }
  return "spiral";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "spiral") return DatasetKind::Spiral;
  if (name == "y_shaped") return DatasetKind::YShaped;
  if (name == "arch") return DatasetKind::Arch;
  if (name == "line1d") return DatasetKind::Line1d;
  throw ValidationError("unknown dataset kind: " + name);
}

DatasetSpec DatasetSpec::defaults(DatasetKind kind) {
  DatasetSpec spec;
  spec.kind = kind;
  spec.intervals = kind == DatasetKind::Arch ? std::vector<Interval>{{0, 1}, {2, 3}}
                                             : std::vector<Interval>{{0, 1}, {1, 2}};
  if (kind == DatasetKind::Line1d) {
    spec.feature_noise_sigma = 0.0;
    spec.time_noise_sigma = 0.0;
  }
  return spec;
}

std::vector<Interval> DatasetSpec::resolved_intervals() const {
  return intervals.empty() ? defaults(kind).intervals : intervals;
}

void DatasetSpec::validate() const {
  require(n_per_interval >= 1, "dataset: n_per_interval must be >= 1");
  require(time_noise_sigma >= 0.0 && std::isfinite(time_noise_sigma), "dataset: time noise must be >= 0");
  require(feature_noise_sigma >= 0.0 && std::isfinite(feature_noise_sigma), "dataset: feature noise must be >= 0");
  require(truth_steps >= 1, "dataset: truth_steps must be >= 1");
  require(truth_samples >= 1, "dataset: truth_samples must be >= 1");
  const auto iv = resolved_intervals();
  require(!iv.empty(), "dataset: no intervals");
  for (std::size_t j = 0; j < iv.size(); ++j) {
    require(iv[j].start < iv[j].end, "dataset: interval must have start < end");
    if (j > 0) require(iv[j - 1].end <= iv[j].start, "dataset: intervals must be ordered and non-overlapping");
    require(p_t.mass(iv[j]) > 0.0, "dataset: p_t has no mass on an interval");
  }
}

Eigen::VectorXd mean_path(DatasetKind kind, double t, int branch) {
  switch (kind) {
    case DatasetKind::Spiral: {
      const double r = 0.5 + t;
      return Eigen::Vector2d(r * std::cos(M_PI * t), r * std::sin(M_PI * t));
    }
    case DatasetKind::YShaped: {
      if (t < 1.0) return Eigen::Vector2d(t, 0.0);
      const double s = (t - 1.0) * std::sqrt(0.5);
      return Eigen::Vector2d(1.0 + s, branch >= 0 ? s : -s);
    }
    case DatasetKind::Arch: {
      const double angle = M_PI * t / 3.0;
      return Eigen::Vector2d(std::cos(angle), std::sin(angle));
    }
    case DatasetKind::Line1d:
      return Eigen::VectorXd::Constant(1, t);
  }
  return {};
}

Index interval_of(double t, const std::vector<Interval>& intervals) {
  require(!intervals.empty(), "interval_of: no intervals");
  const Index n = static_cast<Index>(intervals.size());
  for (Index j = 0; j < n; ++j) {
    const Interval& iv = intervals[static_cast<std::size_t>(j)];
    if (t >= iv.start && (t < iv.end || (j == n - 1 && t <= iv.end))) return j;
  }
  Index best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < n; ++j) {
    const Interval& iv = intervals[static_cast<std::size_t>(j)];
    const double gap = t < iv.start ? iv.start - t : t - iv.end;
    if (gap < best_gap) {
      best_gap = gap;
      best = j;
    }
  }
  return best;
}

std::vector<Snapshot> aggregate_to_snapshots(const PointSet& points, const Eigen::VectorXd& times,
                                             const std::vector<Interval>& intervals, IndexList* order) {
  require(points.rows() == times.size(), "aggregate: one time per point required");
  std::vector<IndexList> members(intervals.size());
  for (Index i = 0; i < times.size(); ++i)
    members[static_cast<std::size_t>(interval_of(times[i], intervals))].push_back(i);
  std::vector<Snapshot> out;
  if (order) order->clear();
  for (std::size_t j = 0; j < intervals.size(); ++j) {
    out.push_back({points(members[j], Eigen::all), intervals[j]});
    if (order) order->insert(order->end(), members[j].begin(), members[j].end());
  }
  return out;
}

namespace {

GeneratedDataset generate_impl(const DatasetSpec& spec) {
  spec.validate();
  const auto intervals = spec.resolved_intervals();
  const DatasetKind kind = spec.kind;
  const Index d = kind == DatasetKind::Line1d ? 1 : 2;
  const Rng root(spec.rng_seed);
  Rng time_rng = root.split(1);
  Rng feature_rng = root.split(2);
  Rng noise_rng = root.split(3);
  Rng branch_rng = root.split(4);
  Rng truth_rng = root.split(5);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Index total = spec.n_per_interval * static_cast<Index>(intervals.size());
  PointSet points(total, d);
  Eigen::VectorXd true_t(total);
  Eigen::VectorXd noisy_t(total);
  std::vector<int> branch(static_cast<std::size_t>(total), 0);
  Index row = 0;
  for (const Interval& iv : intervals) {
    for (Index n = 0; n < spec.n_per_interval; ++n, ++row) {
      const double t = spec.p_t.sample(iv, time_rng);
      int b = 0;
      if (kind == DatasetKind::YShaped) b = branch_rng.uniform() < 0.5 ? 1 : -1;
      Eigen::VectorXd x = mean_path(kind, t, b);
      for (Index k = 0; k < d; ++k) x[k] += spec.feature_noise_sigma * normal(feature_rng);
      points.row(row) = x.transpose();
      true_t[row] = t;
      noisy_t[row] = t + spec.time_noise_sigma * normal(noise_rng);
      branch[static_cast<std::size_t>(row)] = b;
    }
  }

  GeneratedDataset out;
  IndexList order;
  out.snapshots = aggregate_to_snapshots(points, noisy_t, intervals, &order);
  for (const auto& s : out.snapshots) require(s.size() > 0, "dataset: an interval received no points");
  out.true_times = true_t(order);
  out.noisy_times = noisy_t(order);
  out.branch.reserve(order.size());
  for (Index i : order) out.branch.push_back(branch[static_cast<std::size_t>(i)]);

  GroundTruth& truth = out.truth;
  truth.t_start = intervals.front().start;
  truth.t_end = intervals.back().end;
  const Index steps = spec.truth_steps;
  const std::vector<int> arms = kind == DatasetKind::YShaped ? std::vector<int>{1, -1} : std::vector<int>{0};
  for (int arm : arms) {
    Trajectory tr;
    tr.t_start = truth.t_start;
    tr.t_end = truth.t_end;
    tr.states.resize(steps + 1, d);
    for (Index k = 0; k <= steps; ++k) tr.states.row(k) = mean_path(kind, tr.time(k), arm).transpose();
    truth.trajectories.push_back(std::move(tr));
  }
  for (Index k = 0; k <= steps; ++k) {
    const double t = truth.t_start + (truth.t_end - truth.t_start) * static_cast<double>(k) / static_cast<double>(steps);
    PointSet sample(spec.truth_samples, d);
    for (Index i = 0; i < spec.truth_samples; ++i) {
      const int arm = kind == DatasetKind::YShaped ? (truth_rng.uniform() < 0.5 ? 1 : -1) : 0;
      Eigen::VectorXd x = mean_path(kind, t, arm);
      for (Index c = 0; c < d; ++c) x[c] += spec.feature_noise_sigma * normal(truth_rng);
      sample.row(i) = x.transpose();
    }
    truth.distributions.push_back(std::move(sample));
  }
  return out;
}

GeneratedDataset generate_kind(DatasetSpec spec, DatasetKind kind) {
  require(spec.kind == kind, "dataset: generator called with a different kind");
  return generate_impl(spec);
}

}  // namespace

GeneratedDataset generate(const DatasetSpec& spec) { return generate_impl(spec); }
GeneratedDataset gen_spiral(const DatasetSpec& spec) { return generate_kind(spec, DatasetKind::Spiral); }
GeneratedDataset gen_y_shaped(const DatasetSpec& spec) { return generate_kind(spec, DatasetKind::YShaped); }
GeneratedDataset gen_arch(const DatasetSpec& spec) { return generate_kind(spec, DatasetKind::Arch); }
GeneratedDataset gen_line1d(const DatasetSpec& spec) { return generate_kind(spec, DatasetKind::Line1d); }

}  // namespace ctot
