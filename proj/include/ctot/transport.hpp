#pragma once

#include "ctot/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace ctot {

struct TransportOptions {
  /// Arcs with reduced cost above -pivot_tolerance * cost_scale never enter the basis.
  double pivot_tolerance = 1e-9;
  /// Zero means "choose from problem size" (roughly 50 pivots per node).
  std::int64_t max_pivots = 0;
};

/// Sparse optimal solution of a balanced transportation problem.
struct TransportSolution {
  struct Flow {
    Index row;
    Index col;
    double mass;
  };

  std::vector<Flow> flows;  // positive entries only
  double objective = 0.0;
  std::int64_t pivots = 0;
  bool optimal = false;
};

namespace detail {

/// Primal network simplex on the complete bipartite graph rows -> cols.
///
/// Arcs are implicit: arc (i, j) has id i * cols + j and its cost is produced by
/// the cost callable on demand, so only the spanning tree is stored. Every node
/// also owns an artificial arc to a virtual root; the start basis is made of
/// those arcs (big-M start). Leaving arcs follow the strongly feasible tree rule
/// and entering arcs are picked by block search over the implicit arc list.
template <typename CostFn>
class NetworkSimplex {
 public:
  NetworkSimplex(const Eigen::Ref<const Eigen::VectorXd>& supply,
                 const Eigen::Ref<const Eigen::VectorXd>& demand, const CostFn& cost,
                 const TransportOptions& options)
      : cost_(cost), options_(options), rows_(supply.size()), cols_(demand.size()) {
    const Index nodes = rows_ + cols_;
    root_ = nodes;
    const auto total = static_cast<std::size_t>(nodes + 1);
    parent_.assign(total, -1);
    first_child_.assign(total, -1);
    next_sibling_.assign(total, -1);
    prev_sibling_.assign(total, -1);
    depth_.assign(total, 0);
    pred_.assign(total, -1);
    up_.assign(total, 1);
    flow_.assign(total, 0.0);
    pi_.assign(total, 0.0);
    art_cost_.assign(total, 0.0);

    double max_cost = 0.0;
    for (Index i = 0; i < rows_; ++i)
      for (Index j = 0; j < cols_; ++j) max_cost = std::max(max_cost, std::abs(cost_(i, j)));
    cost_scale_ = std::max(max_cost, 1e-300);
    const double art = (max_cost + 1.0) * static_cast<double>(nodes + 1);

    for (Index u = 0; u < nodes; ++u) {
      const double s = u < rows_ ? supply[u] : -demand[u - rows_];
      mass_scale_ += std::abs(s);
      pred_[u] = artificial_id(u);
      if (s >= 0) {
        up_[u] = 1;  // u -> root
        flow_[u] = s;
        art_cost_[u] = 0.0;
        pi_[u] = 0.0;
      } else {
        up_[u] = -1;  // root -> u
        flow_[u] = -s;
        art_cost_[u] = art;
        pi_[u] = art;
      }
      depth_[u] = 1;
      attach(u, root_);
    }
  }

  TransportSolution run() {
    TransportSolution out;
    const std::int64_t limit = options_.max_pivots > 0
                                   ? options_.max_pivots
                                   : 1000 * static_cast<std::int64_t>(rows_ + cols_ + 10);
    const double eps = options_.pivot_tolerance * cost_scale_;
    bool optimal = false;
    while (out.pivots < limit) {
      Index in_row = 0;
      Index in_col = 0;
      if (!find_entering(eps, in_row, in_col)) {
        optimal = true;
        break;
      }
      pivot(in_row, in_col);
      ++out.pivots;
    }
    out.optimal = optimal;

    for (Index u = 0; u < root_; ++u) {
      const std::int64_t arc = pred_[u];
      if (is_artificial(arc)) {
        if (flow_[u] > 1e-12 * std::max(mass_scale_, 1.0)) out.optimal = false;  // infeasible or unfinished
        continue;
      }
      if (flow_[u] <= 0.0) continue;
      const Index i = static_cast<Index>(arc / cols_);
      const Index j = static_cast<Index>(arc % cols_);
      out.flows.push_back({i, j, flow_[u]});
      out.objective += flow_[u] * cost_(i, j);
    }
    std::sort(out.flows.begin(), out.flows.end(), [](const auto& a, const auto& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    return out;
  }

 private:
  std::int64_t artificial_id(Index u) const {
    return static_cast<std::int64_t>(rows_) * cols_ + u;
  }
  bool is_artificial(std::int64_t arc) const {
    return arc >= static_cast<std::int64_t>(rows_) * cols_;
  }

  double arc_cost(std::int64_t arc) const {
    if (is_artificial(arc))
      return art_cost_[static_cast<Index>(arc - static_cast<std::int64_t>(rows_) * cols_)];
    return cost_(static_cast<Index>(arc / cols_), static_cast<Index>(arc % cols_));
  }

  void attach(Index child, Index parent) {
    parent_[child] = parent;
    prev_sibling_[child] = -1;
    next_sibling_[child] = first_child_[parent];
    if (first_child_[parent] >= 0) prev_sibling_[first_child_[parent]] = child;
    first_child_[parent] = child;
  }

  void detach(Index child) {
    const Index p = parent_[child];
    if (prev_sibling_[child] >= 0)
      next_sibling_[prev_sibling_[child]] = next_sibling_[child];
    else
      first_child_[p] = next_sibling_[child];
    if (next_sibling_[child] >= 0) prev_sibling_[next_sibling_[child]] = prev_sibling_[child];
    prev_sibling_[child] = next_sibling_[child] = -1;
    parent_[child] = -1;
  }

  // Block search over the candidate list; when it holds no entering arc, a
  // full scan rebuilds it from the most negative arcs of every row and column.
  bool find_entering(double eps, Index& in_row, Index& in_col) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (search_candidates(eps, in_row, in_col)) return true;
      if (!refresh_candidates(eps)) return false;
    }
    return search_candidates(eps, in_row, in_col);
  }

  double reduced_cost(Index i, Index j) const { return cost_(i, j) + pi_[i] - pi_[rows_ + j]; }

  bool search_candidates(double eps, Index& in_row, Index& in_col) {
    const std::size_t total = candidates_.size();
    if (total == 0) return false;
    const std::size_t block =
        std::max<std::size_t>(16, static_cast<std::size_t>(std::sqrt(static_cast<double>(total))));
    double best = -eps;
    std::size_t best_pos = total;
    std::size_t count = 0;
    for (std::size_t scanned = 0; scanned < total; ++scanned) {
      const std::size_t pos = (next_candidate_ + scanned) % total;
      const auto [i, j] = candidates_[pos];
      const double rc = reduced_cost(i, j);
      if (rc < best) {
        best = rc;
        best_pos = pos;
      }
      if (++count == block) {
        count = 0;
        if (best_pos < total) break;
      }
    }
    if (best_pos == total) return false;
    next_candidate_ = (best_pos + 1) % total;
    in_row = candidates_[best_pos].first;
    in_col = candidates_[best_pos].second;
    return true;
  }

  bool refresh_candidates(double eps) {
    constexpr int kKeep = 4;
    struct Slot {
      double rc = 0.0;
      Index other = -1;
    };
    auto offer = [](Slot* slots, double rc, Index other) {
      if (rc >= slots[kKeep - 1].rc) return;
      int s = kKeep - 1;
      while (s > 0 && rc < slots[s - 1].rc) {
        slots[s] = slots[s - 1];
        --s;
      }
      slots[s] = {rc, other};
    };
    std::vector<Slot> row_best(static_cast<std::size_t>(rows_) * kKeep, Slot{-eps, -1});
    std::vector<Slot> col_best(static_cast<std::size_t>(cols_) * kKeep, Slot{-eps, -1});
    const double* pc = pi_.data() + rows_;
    for (Index i = 0; i < rows_; ++i) {
      Slot* rb = row_best.data() + static_cast<std::size_t>(i) * kKeep;
      const double pr = pi_[i];
      for (Index j = 0; j < cols_; ++j) {
        const double rc = cost_(i, j) + pr - pc[j];
        if (rc >= -eps) continue;
        offer(rb, rc, j);
        offer(col_best.data() + static_cast<std::size_t>(j) * kKeep, rc, i);
      }
    }
    candidates_.clear();
    for (Index i = 0; i < rows_; ++i)
      for (int s = 0; s < kKeep; ++s) {
        const Slot& slot = row_best[static_cast<std::size_t>(i) * kKeep + s];
        if (slot.other >= 0) candidates_.emplace_back(i, slot.other);
      }
    for (Index j = 0; j < cols_; ++j)
      for (int s = 0; s < kKeep; ++s) {
        const Slot& slot = col_best[static_cast<std::size_t>(j) * kKeep + s];
        if (slot.other >= 0) candidates_.emplace_back(slot.other, j);
      }
    std::sort(candidates_.begin(), candidates_.end());
    candidates_.erase(std::unique(candidates_.begin(), candidates_.end()), candidates_.end());
    next_candidate_ = 0;
    ++full_scans_;
    return !candidates_.empty();
  }

  void pivot(Index in_row, Index in_col) {
    const Index first = in_row;             // arc tail: flow leaves here
    const Index second = rows_ + in_col;    // arc head
    const std::int64_t in_arc = static_cast<std::int64_t>(in_row) * cols_ + in_col;

    Index u = first;
    Index v = second;
    while (u != v) {
      if (depth_[u] > depth_[v]) {
        u = parent_[u];
      } else if (depth_[v] > depth_[u]) {
        v = parent_[v];
      } else {
        u = parent_[u];
        v = parent_[v];
      }
    }
    const Index join = u;

    constexpr double inf = std::numeric_limits<double>::infinity();
    double delta = inf;
    Index u_out = -1;
    int side = 0;
    for (Index w = first; w != join; w = parent_[w]) {
      const double d = up_[w] > 0 ? std::max(flow_[w], 0.0) : inf;
      if (d < delta) {
        delta = d;
        u_out = w;
        side = 1;
      }
    }
    for (Index w = second; w != join; w = parent_[w]) {
      const double d = up_[w] < 0 ? std::max(flow_[w], 0.0) : inf;
      if (d <= delta) {
        delta = d;
        u_out = w;
        side = 2;
      }
    }
    if (u_out < 0 || !std::isfinite(delta))
      throw NumericalError("network simplex: unbounded pivot");

    if (delta > 0.0) {
      for (Index w = first; w != join; w = parent_[w]) flow_[w] += up_[w] > 0 ? -delta : delta;
      for (Index w = second; w != join; w = parent_[w]) flow_[w] += up_[w] > 0 ? delta : -delta;
    }

    const Index u_in = side == 1 ? first : second;
    const Index v_in = side == 1 ? second : first;

    stem_.clear();
    for (Index w = u_in;; w = parent_[w]) {
      stem_.push_back(w);
      if (w == u_out) break;
    }
    const std::size_t k = stem_.size() - 1;
    saved_pred_.resize(k);
    saved_flow_.resize(k);
    saved_up_.resize(k);
    for (std::size_t s = 0; s < k; ++s) {
      saved_pred_[s] = pred_[stem_[s]];
      saved_flow_[s] = flow_[stem_[s]];
      saved_up_[s] = up_[stem_[s]];
    }
    for (std::size_t s = 0; s <= k; ++s) detach(stem_[s]);
    for (std::size_t s = 1; s <= k; ++s) {
      const Index w = stem_[s];
      pred_[w] = saved_pred_[s - 1];
      flow_[w] = saved_flow_[s - 1];
      up_[w] = static_cast<std::int8_t>(-saved_up_[s - 1]);
      attach(w, stem_[s - 1]);
    }
    pred_[u_in] = in_arc;
    flow_[u_in] = delta;
    up_[u_in] = static_cast<std::int8_t>(u_in == first ? 1 : -1);
    attach(u_in, v_in);

    // Depth and potentials of the re-hung subtree, recomputed from the parent.
    stack_.clear();
    stack_.push_back(u_in);
    while (!stack_.empty()) {
      const Index w = stack_.back();
      stack_.pop_back();
      const Index p = parent_[w];
      depth_[w] = depth_[p] + 1;
      const double c = arc_cost(pred_[w]);
      // Tree arcs have zero reduced cost: c + pi[tail] - pi[head] = 0.
      pi_[w] = up_[w] > 0 ? pi_[p] - c : pi_[p] + c;
      for (Index ch = first_child_[w]; ch >= 0; ch = next_sibling_[ch]) stack_.push_back(ch);
    }
  }

  const CostFn& cost_;
  TransportOptions options_;
  Index rows_;
  Index cols_;
  Index root_ = 0;
  double cost_scale_ = 1.0;
  double mass_scale_ = 0.0;  // total supply plus demand
  std::vector<std::pair<Index, Index>> candidates_;
  std::size_t next_candidate_ = 0;
  std::int64_t full_scans_ = 0;

  std::vector<Index> parent_, first_child_, next_sibling_, prev_sibling_, depth_;
  std::vector<std::int64_t> pred_;
  std::vector<std::int8_t> up_;
  std::vector<double> flow_, pi_, art_cost_;

  std::vector<Index> stem_, stack_;
  std::vector<std::int64_t> saved_pred_;
  std::vector<double> saved_flow_;
  std::vector<std::int8_t> saved_up_;
};

}  // namespace detail

/// Solves min sum_ij P_ij cost(i, j) s.t. P 1 = supply, P^T 1 = demand, P >= 0.
/// `cost` is any callable (Index, Index) -> double. Total supply must equal
/// total demand (checked to 1e-9 relative).
template <typename CostFn>
TransportSolution solve_transport(const Eigen::Ref<const Eigen::VectorXd>& supply,
                                  const Eigen::Ref<const Eigen::VectorXd>& demand,
                                  const CostFn& cost, const TransportOptions& options = {}) {
  require(supply.size() > 0 && demand.size() > 0, "transport: empty marginal");
  require((supply.array() >= 0).all() && (demand.array() >= 0).all(),
          "transport: negative marginal");
  require(supply.allFinite() && demand.allFinite(), "transport: non-finite marginal");
  const double s = supply.sum();
  const double d = demand.sum();
  require(std::abs(s - d) <= 1e-9 * std::max(1.0, std::max(s, d)), "transport: unbalanced marginals");
  detail::NetworkSimplex<CostFn> solver(supply, demand, cost, options);
  return solver.run();
}

}  // namespace ctot
