#pragma once

#include "ctot/core.hpp"
#include "ctot/random.hpp"

#include <initializer_list>
#include <random>
#include <vector>

namespace testing {

using ctot::Index;
using ctot::PointSet;

inline PointSet points1d(std::initializer_list<double> xs) {
  PointSet p(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) p(i++, 0) = x;
  return p;
}

inline PointSet random_points(ctot::Rng& rng, Index n, Index d, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  PointSet p(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) p(i, k) = normal(rng);
  return p;
}

template <typename Derived>
std::vector<std::vector<double>> nested(const Eigen::MatrixBase<Derived>& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  return out;
}

}  // namespace testing
