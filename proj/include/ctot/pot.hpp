#pragma once

#include "ctot/core.hpp"
#include "ctot/transport.hpp"

#include <Eigen/SparseCore>

#include <cmath>
#include <memory>

namespace ctot {

/// Pairwise ground cost between two point sets.
///
/// Either a dense matrix or an implicit (squared) Euclidean cost evaluated on
/// demand, which keeps 10^4 x 10^4 problems out of memory.
class CostMatrix {
 public:
  enum class Kind { Dense, SquaredEuclidean, Euclidean };

  explicit CostMatrix(Eigen::MatrixXd dense);

  static CostMatrix squared_euclidean(PointSet x, PointSet y);
  static CostMatrix euclidean(PointSet x, PointSet y);

  Kind kind() const { return kind_; }
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  double operator()(Index i, Index j) const {
    switch (kind_) {
      case Kind::Dense:
        return dense_(i, j);
      case Kind::SquaredEuclidean:
        return squared_distance(i, j);
      case Kind::Euclidean:
        return std::sqrt(squared_distance(i, j));
    }
    return 0.0;
  }

  /// Calls `fn` with a concrete cost callable so solvers avoid the runtime switch.
  template <typename Fn>
  decltype(auto) visit(Fn&& fn) const {
    switch (kind_) {
      case Kind::SquaredEuclidean:
        return fn([this](Index i, Index j) { return squared_distance(i, j); });
      case Kind::Euclidean:
        return fn([this](Index i, Index j) { return std::sqrt(squared_distance(i, j)); });
      case Kind::Dense:
      default:
        return fn([this](Index i, Index j) { return dense_(i, j); });
    }
  }

  CostMatrix transposed() const;
  CostMatrix scaled(double s) const;
  bool all_finite() const;
  double max_coeff() const;
  Eigen::MatrixXd to_dense() const;

 private:
  CostMatrix() = default;

  double squared_distance(Index i, Index j) const {
    const double* a = x_.data() + i * dim_;
    const double* b = y_.data() + j * dim_;
    double s = 0.0;
    for (Index k = 0; k < dim_; ++k) {
      const double d = a[k] - b[k];
      s += d * d;
    }
    return scale_ * s;
  }

  Kind kind_ = Kind::Dense;
  Index rows_ = 0;
  Index cols_ = 0;
  Index dim_ = 0;
  double scale_ = 1.0;
  Eigen::MatrixXd dense_;
  PointSet x_;
  PointSet y_;
};

/// Mass weights of the partial transport feasible set; both must be >= 1.
struct PotBounds {
  double tau_x = 1.0;
  double tau_y = 1.0;

  void validate() const;
  PotBounds swapped() const { return {tau_y, tau_x}; }
};

using SparsePlan = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct TransportPlan {
  SparsePlan plan;  // N_x x N_y
  double objective = 0.0;
  bool converged = true;
  std::int64_t iterations = 0;

  Eigen::VectorXd row_mass() const;
  Eigen::VectorXd col_mass() const;
  double total_mass() const { return plan.sum(); }
};

struct EntropicOptions {
  double epsilon = 0.1;
  double tolerance = 1e-9;
  std::int64_t max_iterations = 10000;
  /// Dense kernel budget; larger problems raise ResourceLimit.
  std::int64_t max_dense_entries = 40'000'000;
};

/// Exact partial OT via the dummy-node reduction and network simplex.
TransportPlan solve_pot_exact(const CostMatrix& cost, const PotBounds& bounds,
                              const TransportOptions& options = {});

/// Log-stabilised Sinkhorn on the same dummy-extended balanced problem.
TransportPlan solve_pot_entropic(const CostMatrix& cost, const PotBounds& bounds,
                                 const EntropicOptions& options = {});

enum class SolverKind { Exact, Entropic };

struct SolverOptions {
  SolverKind kind = SolverKind::Exact;
  EntropicOptions entropic;
};

/// Dispatches to the exact or entropic solver.
TransportPlan solve_pot(const CostMatrix& cost, const PotBounds& bounds, const SolverOptions& solver);

/// Largest violation of the feasible-set constraints (row cap, column cap, unit mass).
double feasibility_violation(const TransportPlan& plan, const PotBounds& bounds);

double wasserstein2_sq(const PointSet& a, const PointSet& b);
double wasserstein1(const PointSet& a, const PointSet& b);

template <typename DerivedA, typename DerivedB>
double wasserstein2_sq(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  return wasserstein2_sq(PointSet(a), PointSet(b));
}

template <typename DerivedA, typename DerivedB>
double wasserstein1(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  return wasserstein1(PointSet(a), PointSet(b));
}

/// Minimum-cost perfect matching of a square cost matrix by shortest
/// augmenting paths, O(n^3). Entry i of the result is the column matched to row i.
IndexList solve_assignment(const Eigen::Ref<const Eigen::MatrixXd>& cost);

enum class PlanSide { Rows, Cols };

/// Indices of the `count` entries with the largest mass, ties by ascending index.
IndexList top_mass_indices(const TransportPlan& plan, PlanSide side, Index count);
IndexList top_mass_indices(const Eigen::VectorXd& mass, Index count);

}  // namespace ctot
