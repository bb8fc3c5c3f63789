#include "ctot/pot.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace ctot {

CostMatrix::CostMatrix(Eigen::MatrixXd dense)
    : kind_(Kind::Dense), rows_(dense.rows()), cols_(dense.cols()), dense_(std::move(dense)) {}

CostMatrix CostMatrix::squared_euclidean(PointSet x, PointSet y) {
  require(x.cols() == y.cols(), "cost: point sets differ in dimension");
  CostMatrix c;
  c.kind_ = Kind::SquaredEuclidean;
  c.rows_ = x.rows();
  c.cols_ = y.rows();
  c.dim_ = x.cols();
  c.x_ = std::move(x);
  c.y_ = std::move(y);
  return c;
}

CostMatrix CostMatrix::euclidean(PointSet x, PointSet y) {
  CostMatrix c = squared_euclidean(std::move(x), std::move(y));
  c.kind_ = Kind::Euclidean;
  return c;
}

CostMatrix CostMatrix::transposed() const {
  CostMatrix c = *this;
  c.rows_ = cols_;
  c.cols_ = rows_;
  if (kind_ == Kind::Dense) {
    c.dense_ = dense_.transpose();
  } else {
    std::swap(c.x_, c.y_);
  }
  return c;
}

CostMatrix CostMatrix::scaled(double s) const {
  CostMatrix c = *this;
  if (kind_ == Kind::Dense) {
    c.dense_ *= s;
  } else if (kind_ == Kind::SquaredEuclidean) {
    c.scale_ *= s;
  } else {
    c = CostMatrix(to_dense() * s);
  }
  return c;
}

bool CostMatrix::all_finite() const {
  if (kind_ == Kind::Dense) return dense_.allFinite();
  return x_.allFinite() && y_.allFinite() && std::isfinite(scale_);
}

double CostMatrix::max_coeff() const {
  if (kind_ == Kind::Dense) return rows_ * cols_ > 0 ? dense_.maxCoeff() : 0.0;
  return visit([&](const auto& c) {
    double m = 0.0;
    for (Index i = 0; i < rows_; ++i)
      for (Index j = 0; j < cols_; ++j) m = std::max(m, c(i, j));
    return m;
  });
}

Eigen::MatrixXd CostMatrix::to_dense() const {
  if (kind_ == Kind::Dense) return dense_;
  Eigen::MatrixXd out(rows_, cols_);
  for (Index i = 0; i < rows_; ++i)
    for (Index j = 0; j < cols_; ++j) out(i, j) = (*this)(i, j);
  return out;
}

void PotBounds::validate() const {
  require(std::isfinite(tau_x) && std::isfinite(tau_y), "pot: non-finite bounds");
  require(tau_x >= 1.0 && tau_y >= 1.0, "pot: tau_x and tau_y must be >= 1");
}

Eigen::VectorXd TransportPlan::row_mass() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(plan.rows());
  for (Index r = 0; r < plan.outerSize(); ++r)
    for (SparsePlan::InnerIterator it(plan, r); it; ++it) out[r] += it.value();
  return out;
}

Eigen::VectorXd TransportPlan::col_mass() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(plan.cols());
  for (Index r = 0; r < plan.outerSize(); ++r)
    for (SparsePlan::InnerIterator it(plan, r); it; ++it) out[it.col()] += it.value();
  return out;
}

namespace {

// Balanced problem obtained by appending a dummy row of mass tau_y - 1 and a
// dummy column of mass tau_x - 1. Dummy <-> real arcs are free; the
// dummy <-> dummy arc is priced above any real transport so exactly one unit
// of real mass moves.
struct DummyExtension {
  Index n = 0;
  Index m = 0;
  bool dummy_row = false;
  bool dummy_col = false;
  double dummy_cost = 0.0;
  Eigen::VectorXd supply;
  Eigen::VectorXd demand;

  DummyExtension(Index rows, Index cols, const PotBounds& b, double max_cost) : n(rows), m(cols) {
    dummy_row = b.tau_y > 1.0;
    dummy_col = b.tau_x > 1.0;
    dummy_cost = 2.0 * max_cost + 2.0;
    supply.resize(n + (dummy_row ? 1 : 0));
    demand.resize(m + (dummy_col ? 1 : 0));
    supply.head(n).setConstant(b.tau_x / static_cast<double>(n));
    demand.head(m).setConstant(b.tau_y / static_cast<double>(m));
    if (dummy_row) supply[n] = b.tau_y - 1.0;
    if (dummy_col) demand[m] = b.tau_x - 1.0;
  }

  template <typename Base>
  auto wrap(const Base& base) const {
    return [&base, this](Index i, Index j) -> double {
      if (i < n && j < m) return base(i, j);
      if (i >= n && j >= m) return dummy_cost;
      return 0.0;
    };
  }
};

void validate_cost(const CostMatrix& cost) {
  require(cost.rows() > 0 && cost.cols() > 0, "pot: empty cost matrix");
  require(cost.all_finite(), "pot: cost matrix has non-finite entries");
}

SparsePlan assemble(Index n, Index m, const std::vector<Eigen::Triplet<double>>& entries) {
  SparsePlan plan(n, m);
  plan.setFromTriplets(entries.begin(), entries.end());
  plan.makeCompressed();
  return plan;
}

}  // namespace

TransportPlan solve_pot_exact(const CostMatrix& cost, const PotBounds& bounds,
                              const TransportOptions& options) {
  validate_cost(cost);
  bounds.validate();
  const Index n = cost.rows();
  const Index m = cost.cols();
  const DummyExtension ext(n, m, bounds, cost.max_coeff());

  return cost.visit([&](const auto& base) {
    const auto extended = ext.wrap(base);
    const TransportSolution sol = solve_transport(ext.supply, ext.demand, extended, options);
    if (!sol.optimal) throw NumericalError("pot: network simplex did not reach optimality");
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(sol.flows.size());
    TransportPlan out;
    for (const auto& f : sol.flows) {
      if (f.row >= n || f.col >= m) continue;
      entries.emplace_back(f.row, f.col, f.mass);
      out.objective += f.mass * base(f.row, f.col);
    }
    out.plan = assemble(n, m, entries);
    out.iterations = sol.pivots;
    out.converged = true;
    return out;
  });
}

TransportPlan solve_pot_entropic(const CostMatrix& cost, const PotBounds& bounds,
                                 const EntropicOptions& options) {
  validate_cost(cost);
  bounds.validate();
  require(options.epsilon > 0.0 && std::isfinite(options.epsilon), "pot: epsilon must be > 0");
  const Index n = cost.rows();
  const Index m = cost.cols();
  const DummyExtension ext(n, m, bounds, cost.max_coeff());
  const Index rows = ext.supply.size();
  const Index cols = ext.demand.size();
  if (static_cast<std::int64_t>(rows) * cols > options.max_dense_entries)
    throw ResourceLimit("pot: entropic kernel exceeds dense memory budget");

  Eigen::MatrixXd c(rows, cols);
  cost.visit([&](const auto& base) {
    const auto extended = ext.wrap(base);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) c(i, j) = extended(i, j);
    return 0;
  });

  const Eigen::ArrayXd a = ext.supply.array();
  const Eigen::ArrayXd b = ext.demand.array();
  const Eigen::ArrayXd log_a = a.log();
  const Eigen::ArrayXd log_b = b.log();
  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(rows);
  Eigen::ArrayXd g = Eigen::ArrayXd::Zero(cols);
  double eps = options.epsilon;

  // Exact log-domain half steps; used to (re)start from stable potentials.
  auto log_update_f = [&] {
    for (Index i = 0; i < rows; ++i) {
      const Eigen::ArrayXd z = (g - c.row(i).transpose().array()) / eps;
      const double zmax = z.maxCoeff();
      f[i] = eps * log_a[i] - eps * (zmax + std::log((z - zmax).exp().sum()));
    }
  };
  auto log_update_g = [&] {
    for (Index j = 0; j < cols; ++j) {
      const Eigen::ArrayXd z = (f - c.col(j).array()) / eps;
      const double zmax = z.maxCoeff();
      g[j] = eps * log_b[j] - eps * (zmax + std::log((z - zmax).exp().sum()));
    }
  };

  Eigen::MatrixXd kernel(rows, cols);
  Eigen::VectorXd u = Eigen::VectorXd::Ones(rows);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(cols);
  auto restart = [&] {
    log_update_g();
    log_update_f();
    for (Index j = 0; j < cols; ++j)
      kernel.col(j) = ((f + g[j] - c.col(j).array()) / eps).exp().matrix();
    u.setOnes();
    v.setOnes();
  };
  auto marginal_error = [&] {
    const Eigen::VectorXd row = u.cwiseProduct(kernel * v);
    const Eigen::VectorXd col = v.cwiseProduct(kernel.transpose() * u);
    return (row.array() - a).abs().sum() + (col.array() - b).abs().sum();
  };

  // Epsilon scaling: coarse stages warm-start the potentials of the target
  // epsilon. All stages share one iteration budget.
  std::vector<double> stages;
  for (double e = std::max(options.epsilon, cost.max_coeff()); e > options.epsilon; e *= 0.5)
    stages.push_back(e);
  stages.push_back(options.epsilon);

  constexpr double kAbsorb = 1e30;
  bool converged = false;
  std::int64_t it = 0;
  for (std::size_t stage = 0; stage < stages.size() && !converged; ++stage) {
    const bool last = stage + 1 == stages.size();
    eps = stages[stage];
    restart();
    const double tol = last ? options.tolerance : 1e-4;
    std::int64_t local = 0;
    while (it < options.max_iterations && (last || local < 500)) {
      ++it;
      ++local;
      v = (b / (kernel.transpose() * u).array()).matrix();
      u = (a / (kernel * v).array()).matrix();
      const bool unstable = !u.allFinite() || !v.allFinite() || u.maxCoeff() > kAbsorb ||
                            v.maxCoeff() > kAbsorb || u.minCoeff() < 1.0 / kAbsorb ||
                            v.minCoeff() < 1.0 / kAbsorb;
      if (unstable) {
        if (u.allFinite() && v.allFinite() && (u.array() > 0).all() && (v.array() > 0).all()) {
          f += eps * u.array().log();
          g += eps * v.array().log();
        }
        restart();
      }
      if (local % 10 == 0 || it == options.max_iterations) {
        if (marginal_error() < tol) {
          converged = last;
          break;
        }
      }
    }
    if (it >= options.max_iterations) break;  // keep the last iterate of this stage
    if (!last) {
      f += eps * u.array().log();
      g += eps * v.array().log();
    }
  }

  std::vector<Eigen::Triplet<double>> entries;
  TransportPlan out;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      const double p = u[i] * kernel(i, j) * v[j];
      out.objective += p * c(i, j);
      if (p > 1e-18) entries.emplace_back(i, j, p);
    }
  }
  out.plan = assemble(n, m, entries);
  out.converged = converged;
  out.iterations = it;
  return out;
}

TransportPlan solve_pot(const CostMatrix& cost, const PotBounds& bounds, const SolverOptions& solver) {
  return solver.kind == SolverKind::Exact ? solve_pot_exact(cost, bounds)
                                          : solve_pot_entropic(cost, bounds, solver.entropic);
}

double feasibility_violation(const TransportPlan& plan, const PotBounds& bounds) {
  const Index n = plan.plan.rows();
  const Index m = plan.plan.cols();
  const Eigen::VectorXd rows = plan.row_mass();
  const Eigen::VectorXd cols = plan.col_mass();
  double worst = std::abs(rows.sum() - 1.0);
  worst = std::max(worst, (rows.array() - bounds.tau_x / static_cast<double>(n)).maxCoeff());
  worst = std::max(worst, (cols.array() - bounds.tau_y / static_cast<double>(m)).maxCoeff());
  if (plan.plan.nonZeros() > 0) {
    const double lowest = plan.plan.coeffs().minCoeff();
    worst = std::max(worst, -lowest);
  }
  return std::max(worst, 0.0);
}

double wasserstein2_sq(const PointSet& a, const PointSet& b) {
  require(a.rows() > 0 && b.rows() > 0, "wasserstein: empty point set");
  require(a.cols() == b.cols(), "wasserstein: dimension mismatch");
  return solve_pot_exact(CostMatrix::squared_euclidean(a, b), PotBounds{1.0, 1.0}).objective;
}

double wasserstein1(const PointSet& a, const PointSet& b) {
  require(a.rows() > 0 && b.rows() > 0, "wasserstein: empty point set");
  require(a.cols() == b.cols(), "wasserstein: dimension mismatch");
  const CostMatrix cost = CostMatrix::euclidean(a, b);
  const Eigen::VectorXd wa = Eigen::VectorXd::Constant(a.rows(), 1.0 / static_cast<double>(a.rows()));
  const Eigen::VectorXd wb = Eigen::VectorXd::Constant(b.rows(), 1.0 / static_cast<double>(b.rows()));
  return cost.visit([&](const auto& c) {
    const TransportSolution sol = solve_transport(wa, wb, c);
    if (!sol.optimal) throw NumericalError("wasserstein1: network simplex did not reach optimality");
    return sol.objective;
  });
}

IndexList top_mass_indices(const Eigen::VectorXd& mass, Index count) {
  const Index n = mass.size();
  require(count >= 0 && count <= n, "top_mass_indices: count exceeds side length");
  IndexList idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  if (count == n) return idx;
  // Masses are quantised so round-off between equal capacities cannot reorder ties.
  std::vector<std::int64_t> key(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) key[i] = std::llround(mass[i] * 1e13);
  std::stable_sort(idx.begin(), idx.end(), [&](Index l, Index r) { return key[l] > key[r]; });
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

IndexList solve_assignment(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  const Index n = cost.rows();
  require(n > 0 && cost.cols() == n, "assignment: cost matrix must be square and non-empty");
  require(cost.allFinite(), "assignment: cost matrix has non-finite entries");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c = cost;
  // 1-based rows and columns; column 0 is the free slot the current row starts from.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<double> v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(n + 1), 0);  // row matched to column j
  std::vector<Index> way(static_cast<std::size_t>(n + 1), 0);
  std::vector<double> minv(static_cast<std::size_t>(n + 1));
  std::vector<char> used(static_cast<std::size_t>(n + 1));
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = match[j0];
      double delta = inf;
      Index j1 = 0;
      const double* row = c.data() + (i0 - 1) * n - 1;
      const double ui = u[i0];
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j] - ui - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  IndexList out(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j) out[match[j] - 1] = j - 1;
  return out;
}

IndexList top_mass_indices(const TransportPlan& plan, PlanSide side, Index count) {
  return top_mass_indices(side == PlanSide::Rows ? plan.row_mass() : plan.col_mass(), count);
}

}  // namespace ctot
