#pragma once

#include "ctot/core.hpp"
#include "ctot/trajectory.hpp"

#include <vector>

namespace ctot {

/// Classic DTW: Euclidean local cost, steps (1,0), (0,1), (1,1), no window.
double dtw(const PointSet& a, const PointSet& b);
inline double dtw(const Trajectory& a, const Trajectory& b) { return dtw(a.states, b.states); }

/// Mean over simulated trajectories of the smallest DTW to any true trajectory.
double l_dtw(const GroundTruth& truth, const std::vector<Trajectory>& sims);

struct WassersteinReport {
  double mean = 0.0;
  std::vector<double> per_time;  // entry t-1 holds W1 at truth index t = 1..T*
};

/// Average W1 between simulated states at index floor(t * T_hat / T*) and p*_t, t = 1..T*.
WassersteinReport l_wass_report(const GroundTruth& truth, const std::vector<Trajectory>& sims);
inline double l_wass(const GroundTruth& truth, const std::vector<Trajectory>& sims) {
  return l_wass_report(truth, sims).mean;
}

struct SpearmanResult {
  double rho = 0.0;
  bool defined = true;  // false when either input is constant
};

/// Spearman rank correlation with average ranks for ties.
SpearmanResult spearman_full(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& y);
inline double spearman(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) {
  return spearman_full(x, y).rho;
}

/// Average ranks (1-based) with ties sharing their mean rank.
Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace ctot
