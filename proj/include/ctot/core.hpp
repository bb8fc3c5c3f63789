#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctot {

using Index = Eigen::Index;

/// Point cloud with one point per row. Row-major so a single point is contiguous.
template <typename Scalar>
using PointSetT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PointSet = PointSetT<double>;

using IndexList = std::vector<Index>;

/// Closed observation window [start, end].
struct Interval {
  double start = 0.0;
  double end = 1.0;

  double length() const { return end - start; }
  double midpoint() const { return 0.5 * (start + end); }
  bool contains(double t) const { return t >= start && t <= end; }
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation would exceed a configured memory or time budget.
class ResourceLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

inline Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

}  // namespace ctot
