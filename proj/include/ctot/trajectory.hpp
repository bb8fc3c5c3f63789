#pragma once

#include "ctot/core.hpp"

#include <vector>

namespace ctot {

/// States at uniform time steps over [t_start, t_end]; one state per row.
struct Trajectory {
  PointSet states;
  double t_start = 0.0;
  double t_end = 1.0;

  Index steps() const { return states.rows() - 1; }
  Index dim() const { return states.cols(); }
  double time(Index k) const {
    if (steps() == 0) return t_start;
    if (k == steps()) return t_end;
    return t_start + (t_end - t_start) * static_cast<double>(k) / static_cast<double>(steps());
  }
};

/// Reference dynamics: mean paths plus samples of the true distribution at each step.
struct GroundTruth {
  std::vector<Trajectory> trajectories;
  std::vector<PointSet> distributions;  // index t = 0..T*
  double t_start = 0.0;
  double t_end = 1.0;

  Index steps() const { return static_cast<Index>(distributions.size()) - 1; }
  double time(Index k) const {
    if (k == steps()) return t_end;
    return t_start + (t_end - t_start) * static_cast<double>(k) / static_cast<double>(steps());
  }
};

}  // namespace ctot
