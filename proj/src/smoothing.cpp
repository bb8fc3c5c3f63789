#include "ctot/smoothing.hpp"

#include "ctot/pot.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace ctot {

void SmoothingConfig::validate() const {
  require(gamma > 0.0 && !std::isnan(gamma), "smoothing: gamma must be > 0");
}

namespace {

constexpr double kFloor = 1e-300;

// Relative kernel values exp(-((t - l)^2 - dmin^2) / gamma), with dmin the distance to the nearest label.
template <typename Labels, typename Out>
void relative_kernel(const Labels& labels, Index n, double t, double gamma, Out& out) {
  double dmin = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) dmin = std::min(dmin, std::abs(t - labels[i]));
  for (Index i = 0; i < n; ++i) {
    const double d = std::abs(t - labels[i]);
    double w = std::isinf(gamma) ? 1.0 : std::exp(-(d - dmin) * (d + dmin) / gamma);
    if (d == dmin) w = 1.0;
    out[i] = w < kFloor ? 0.0 : w;
  }
}

}  // namespace

Eigen::VectorXd smoothed_weights(const Eigen::Ref<const Eigen::VectorXd>& labels, double t,
                                 const SmoothingConfig& config) {
  config.validate();
  require(labels.size() > 0, "smoothing: empty dataset");
  require(std::isfinite(t), "smoothing: query time must be finite");
  require(labels.allFinite(), "smoothing: labels must be finite");
  Eigen::VectorXd w(labels.size());
  relative_kernel(labels, labels.size(), t, config.gamma, w);
  return w / w.sum();
}

TimeSlice smoothed_weights(const LabeledDataset& dataset, double t, const SmoothingConfig& config) {
  return {t, smoothed_weights(dataset.labels, t, config)};
}

SmoothedSampler::SmoothedSampler(const LabeledDataset& dataset, SmoothingConfig config)
    : dataset_(&dataset), config_(config) {
  config_.validate();
  require(dataset.size() > 0, "smoothing: empty dataset");
  require(dataset.labels.size() == dataset.size(), "smoothing: label count differs from point count");
  require(dataset.labels.allFinite(), "smoothing: labels must be finite");
  std::map<double, IndexList> groups;
  for (Index i = 0; i < dataset.size(); ++i) groups[dataset.labels[i]].push_back(i);
  for (auto& [label, idx] : groups) {
    unique_.push_back(label);
    members_.push_back(std::move(idx));
  }
}

Eigen::VectorXd SmoothedSampler::weights(double t) const {
  return smoothed_weights(dataset_->labels, t, config_);
}

IndexList SmoothedSampler::sample_indices(double t, Index n, Rng& rng) const {
  require(n >= 1, "smoothing: sample count must be >= 1");
  require(std::isfinite(t), "smoothing: query time must be finite");
  const Index g = static_cast<Index>(unique_.size());
  std::vector<double> w(static_cast<std::size_t>(g));
  relative_kernel(unique_, g, t, config_.gamma, w);
  for (Index k = 0; k < g; ++k) w[k] *= static_cast<double>(members_[k].size());
  std::discrete_distribution<Index> pick_group(w.begin(), w.end());
  IndexList out(static_cast<std::size_t>(n));
  for (auto& idx : out) {
    const IndexList& group = members_[static_cast<std::size_t>(pick_group(rng))];
    std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
    idx = group[pick(rng)];
  }
  return out;
}

PointSet SmoothedSampler::sample(double t, Index n, Rng& rng) const {
  return dataset_->points(sample_indices(t, n, rng), Eigen::all);
}

PointSet sample_at(const LabeledDataset& dataset, double t, const SmoothingConfig& config, Index n, Rng& rng) {
  return SmoothedSampler(dataset, config).sample(t, n, rng);
}

IndexList ot_assignment(const PointSet& x0, const PointSet& x1) {
  require(x0.rows() == x1.rows() && x0.rows() > 0, "ot_assignment: batches must have equal non-zero size");
  require(x0.cols() == x1.cols(), "ot_assignment: dimension mismatch");
  const Index n = x0.rows();
  Eigen::MatrixXd cost(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) cost(i, j) = (x0.row(i) - x1.row(j)).squaredNorm();
  return solve_assignment(cost);
}

std::pair<PointSet, PointSet> sample_pair(const LabeledDataset& dataset, double t, double delta_t,
                                          const SmoothingConfig& config, Index n, Rng& rng, Pairing pairing) {
  require(delta_t > 0.0, "sample_pair: delta_t must be > 0");
  const SmoothedSampler sampler(dataset, config);
  PointSet x0 = sampler.sample(t, n, rng);
  PointSet x1 = sampler.sample(t + delta_t, n, rng);
  if (pairing == Pairing::MinibatchOT) x1 = PointSet(x1(ot_assignment(x0, x1), Eigen::all));
  return {std::move(x0), std::move(x1)};
}

}  // namespace ctot
