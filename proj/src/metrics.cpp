#include "ctot/metrics.hpp"

#include "ctot/pot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ctot {

double dtw(const PointSet& a, const PointSet& b) {
  require(a.rows() > 0 && b.rows() > 0, "dtw: empty sequence");
  require(a.cols() == b.cols(), "dtw: dimension mismatch");
  const Index n = a.rows();
  const Index m = b.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(static_cast<std::size_t>(m), inf);
  std::vector<double> cur(static_cast<std::size_t>(m), inf);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      const double local = (a.row(i) - b.row(j)).norm();
      double best;
      if (i == 0 && j == 0)
        best = 0.0;
      else {
        best = inf;
        if (i > 0) best = std::min(best, prev[j]);
        if (j > 0) best = std::min(best, cur[j - 1]);
        if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
      }
      cur[j] = local + best;
    }
    std::swap(prev, cur);
  }
  return prev[static_cast<std::size_t>(m - 1)];
}

double l_dtw(const GroundTruth& truth, const std::vector<Trajectory>& sims) {
  require(!sims.empty(), "l_dtw: no simulated trajectories");
  require(!truth.trajectories.empty(), "l_dtw: no true trajectories");
  double total = 0.0;
  for (const auto& s : sims) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : truth.trajectories) best = std::min(best, dtw(t, s));
    total += best;
  }
  return total / static_cast<double>(sims.size());
}

WassersteinReport l_wass_report(const GroundTruth& truth, const std::vector<Trajectory>& sims) {
  require(!sims.empty(), "l_wass: no simulated trajectories");
  const Index t_star = truth.steps();
  require(t_star >= 1, "l_wass: ground truth needs at least two time steps");
  const Index t_hat = sims.front().steps();
  for (const auto& s : sims) require(s.steps() == t_hat, "l_wass: simulated trajectories differ in length");
  const Index d = sims.front().dim();
  WassersteinReport out;
  out.per_time.reserve(static_cast<std::size_t>(t_star));
  PointSet states(static_cast<Index>(sims.size()), d);
  for (Index t = 1; t <= t_star; ++t) {
    const Index idx = (t * t_hat) / t_star;
    for (std::size_t i = 0; i < sims.size(); ++i) states.row(static_cast<Index>(i)) = sims[i].states.row(idx);
    const double w = wasserstein1(states, truth.distributions[static_cast<std::size_t>(t)]);
    out.per_time.push_back(w);
    out.mean += w;
  }
  out.mean /= static_cast<double>(t_star);
  return out;
}

Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const Index n = v.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v[a] < v[b]; });
  Eigen::VectorXd ranks(n);
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n && v[order[static_cast<std::size_t>(j + 1)]] == v[order[static_cast<std::size_t>(i)]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) ranks[order[static_cast<std::size_t>(k)]] = r;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman_full(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& y) {
  require(x.size() == y.size(), "spearman: length mismatch");
  require(x.size() >= 2, "spearman: need at least two values");
  const Eigen::VectorXd rx = average_ranks(x);
  const Eigen::VectorXd ry = average_ranks(y);
  const Eigen::VectorXd cx = rx.array() - rx.mean();
  const Eigen::VectorXd cy = ry.array() - ry.mean();
  const double sx = cx.squaredNorm();
  const double sy = cy.squaredNorm();
  if (sx == 0.0 || sy == 0.0) return {0.0, false};
  return {std::clamp(cx.dot(cy) / std::sqrt(sx * sy), -1.0, 1.0), true};
}

}  // namespace ctot
