#pragma once

#include "ctot/core.hpp"
#include "ctot/labels.hpp"
#include "ctot/random.hpp"

#include <utility>
#include <vector>

namespace ctot {

struct SmoothingConfig {
  double gamma = 0.005;  // kernel exp(-(t - t~)^2 / gamma)

  void validate() const;
};

/// Weights of the time-smoothed empirical distribution at one query time.
struct TimeSlice {
  double t = 0.0;
  Eigen::VectorXd weights;
};

/// Unnormalised Gaussian kernel value.
inline double time_kernel(double t, double label, double gamma) {
  const double d = t - label;
  return std::exp(-d * d / gamma);
}

/// Normalised kernel weights over all labels.
///
/// Kernel values are taken relative to the nearest label, so at least one
/// weight is 1 before normalisation and the result never underflows to all
/// zeros; relative values below 1e-300 are dropped.
Eigen::VectorXd smoothed_weights(const Eigen::Ref<const Eigen::VectorXd>& labels, double t,
                                 const SmoothingConfig& config);
TimeSlice smoothed_weights(const LabeledDataset& dataset, double t, const SmoothingConfig& config);

enum class Pairing { Independent, MinibatchOT };

/// Repeated draws from a labelled dataset. Points sharing a label are grouped,
/// so each query costs one kernel evaluation per distinct label.
class SmoothedSampler {
 public:
  SmoothedSampler(const LabeledDataset& dataset, SmoothingConfig config);

  Eigen::VectorXd weights(double t) const;  // per point
  IndexList sample_indices(double t, Index n, Rng& rng) const;
  PointSet sample(double t, Index n, Rng& rng) const;

  const LabeledDataset& dataset() const { return *dataset_; }
  double min_label() const { return unique_.front(); }
  double max_label() const { return unique_.back(); }

 private:
  const LabeledDataset* dataset_;
  SmoothingConfig config_;
  std::vector<double> unique_;
  std::vector<IndexList> members_;
};

/// n i.i.d. draws from p~_t.
PointSet sample_at(const LabeledDataset& dataset, double t, const SmoothingConfig& config, Index n, Rng& rng);

/// X0 ~ p~_t and X1 ~ p~_{t + delta_t}. With MinibatchOT the rows of X1 are
/// reordered by an exact OT assignment between the two batches.
std::pair<PointSet, PointSet> sample_pair(const LabeledDataset& dataset, double t, double delta_t,
                                          const SmoothingConfig& config, Index n, Rng& rng,
                                          Pairing pairing = Pairing::Independent);

/// Row permutation of `x1` minimising the summed squared distance to `x0` (equal sizes).
IndexList ot_assignment(const PointSet& x0, const PointSet& x1);

}  // namespace ctot
