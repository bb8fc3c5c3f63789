#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctot/pot.hpp"
#include "ctot/random.hpp"
#include "helpers.hpp"
#include "oracle.hpp"

#include <random>

using namespace ctot;
using namespace testing;

TEST_CASE("exact POT: identity case") {
  const auto c = CostMatrix::squared_euclidean(points1d({0}), points1d({0}));
  const auto plan = solve_pot_exact(c, {1, 1});
  CHECK(plan.objective == doctest::Approx(0.0));
  CHECK(plan.plan.coeff(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("exact POT: small hand-checked instances") {
  SUBCASE("X={1,10}, Y={2}, tau=(2,1)") {
    const auto c = CostMatrix::squared_euclidean(points1d({1, 10}), points1d({2}));
    const auto plan = solve_pot_exact(c, {2, 1});
    CHECK(plan.objective == doctest::Approx(1.0));
    CHECK(plan.plan.coeff(0, 0) == doctest::Approx(1.0));
    CHECK(plan.plan.coeff(1, 0) == doctest::Approx(0.0));
  }
  SUBCASE("X={0,10}, Y={0.1,10.2}, tau=(2,2)") {
    const auto c = CostMatrix::squared_euclidean(points1d({0, 10}), points1d({0.1, 10.2}));
    const auto plan = solve_pot_exact(c, {2, 2});
    CHECK(plan.objective == doctest::Approx(0.01));
    CHECK(plan.plan.coeff(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("identical sets, tau=(1,1) gives the diagonal") {
    const auto x = points1d({0.3, -1.2, 2.5});
    const auto plan = solve_pot_exact(CostMatrix::squared_euclidean(x, x), {1, 1});
    CHECK(plan.objective == doctest::Approx(0.0));
    for (Index i = 0; i < 3; ++i) CHECK(plan.plan.coeff(i, i) == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("exact POT: validation errors") {
  const auto c = CostMatrix::squared_euclidean(points1d({0, 1}), points1d({2}));
  CHECK_THROWS_AS(solve_pot_exact(c, {0.5, 1}), ValidationError);
  CHECK_THROWS_AS(solve_pot_exact(c, {1, 0.99}), ValidationError);
  Eigen::MatrixXd bad(1, 2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(solve_pot_exact(CostMatrix(bad), {1, 1}), ValidationError);
  CHECK_THROWS_AS(CostMatrix::squared_euclidean(PointSet::Zero(2, 1), PointSet::Zero(2, 2)),
                  ValidationError);
}

TEST_CASE("exact POT matches the LP oracle and stays feasible") {
  Rng rng(11);
  const double taus[] = {1.0, 1.5, 2.0, 3.0};
  std::uniform_int_distribution<int> size(1, 6);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 80; ++trial) {
    const Index n = size(rng);
    const Index m = size(rng);
    const PotBounds b{taus[pick(rng)], taus[pick(rng)]};
    const PointSet x = random_points(rng, n, 2);
    const PointSet y = random_points(rng, m, 2);
    const auto cost = CostMatrix::squared_euclidean(x, y);
    const auto plan = solve_pot_exact(cost, b);
    const double ref = static_cast<double>(oracle::pot_lp(nested(cost.to_dense()), b.tau_x, b.tau_y));
    CHECK(plan.objective == doctest::Approx(ref).epsilon(1e-8));
    CHECK(feasibility_violation(plan, b) < 1e-6);
  }
}

TEST_CASE("exact POT: transposition symmetry and scale covariance") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const PointSet x = random_points(rng, 5, 2);
    const PointSet y = random_points(rng, 4, 2);
    const PotBounds b{1.5, 2.0};
    const auto cost = CostMatrix::squared_euclidean(x, y);
    const auto plan = solve_pot_exact(cost, b);
    const auto plan_t = solve_pot_exact(cost.transposed(), b.swapped());
    CHECK(plan_t.objective == doctest::Approx(plan.objective).epsilon(1e-10));

    const double s = 3.7;
    const auto scaled = cost.scaled(s);
    const auto plan_s = solve_pot_exact(scaled, b);
    CHECK(plan_s.objective == doctest::Approx(s * plan.objective).epsilon(1e-10));
    // The original optimum is still optimal for the scaled cost.
    double reused = 0.0;
    for (Index r = 0; r < plan.plan.outerSize(); ++r)
      for (SparsePlan::InnerIterator it(plan.plan, r); it; ++it)
        reused += it.value() * scaled(it.row(), it.col());
    CHECK(reused == doctest::Approx(plan_s.objective).epsilon(1e-10));
  }
}

TEST_CASE("exact POT on a mid-size instance is feasible") {
  Rng rng(2);
  const PointSet x = random_points(rng, 300, 2);
  const PointSet y = random_points(rng, 250, 2);
  const PotBounds b{10, 10};
  const auto plan = solve_pot_exact(CostMatrix::squared_euclidean(x, y), b);
  CHECK(feasibility_violation(plan, b) < 1e-9);
  CHECK(plan.plan.nonZeros() <= 300 + 250);
}

TEST_CASE("entropic POT") {
  SUBCASE("single feasible plan") {
    const auto c = CostMatrix::squared_euclidean(points1d({0}), points1d({0}));
    for (double eps : {1.0, 0.1, 0.01}) {
      const auto plan = solve_pot_entropic(c, {1, 1}, {.epsilon = eps});
      CHECK(plan.converged);
      CHECK(plan.objective == doctest::Approx(0.0));
      CHECK(plan.plan.coeff(0, 0) == doctest::Approx(1.0));
    }
  }
  SUBCASE("defaults") {
    const EntropicOptions defaults;
    CHECK(defaults.epsilon == 0.1);
    CHECK(defaults.tolerance == 1e-9);
    CHECK(defaults.max_iterations == 10000);
  }
  SUBCASE("objective approaches the exact optimum as epsilon shrinks") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      const PointSet x = random_points(rng, 8, 2);
      const PointSet y = random_points(rng, 8, 2);
      const auto cost = CostMatrix::squared_euclidean(x, y);
      for (PotBounds b : {PotBounds{1, 1}, PotBounds{2, 2}, PotBounds{1.5, 3}}) {
        const double exact = solve_pot_exact(cost, b).objective;
        double previous_gap = std::numeric_limits<double>::infinity();
        for (double eps : {1.0, 0.1, 0.01}) {
          const auto plan = solve_pot_entropic(cost, b, {.epsilon = eps});
          // Small epsilon may exhaust the iteration budget; the flag must say so.
          const double violation = feasibility_violation(plan, b);
          if (plan.converged) CHECK(violation < 1e-6);
          if (eps >= 0.1) CHECK(violation < 1e-6);
          CHECK(violation < 1e-4);
          CHECK(plan.objective >= exact - 1e-7);
          const double gap = std::abs(plan.objective - exact);
          CHECK(gap <= previous_gap + 1e-12);
          previous_gap = gap;
        }
      }
    }
  }
  SUBCASE("invalid epsilon") {
    const auto c = CostMatrix::squared_euclidean(points1d({0}), points1d({1}));
    CHECK_THROWS_AS(solve_pot_entropic(c, {1, 1}, {.epsilon = 0.0}), ValidationError);
  }
  SUBCASE("non-convergence returns the last iterate with a flag") {
    Rng rng(3);
    const auto cost = CostMatrix::squared_euclidean(random_points(rng, 6, 2), random_points(rng, 6, 2));
    const auto plan = solve_pot_entropic(cost, {2, 2}, {.epsilon = 0.01, .max_iterations = 2});
    CHECK_FALSE(plan.converged);
    CHECK(plan.plan.nonZeros() > 0);
  }
}

TEST_CASE("wasserstein distances") {
  CHECK(wasserstein2_sq(points1d({1, 2, 3}), points1d({1, 2, 3})) == doctest::Approx(0.0));
  CHECK(wasserstein2_sq(points1d({0}), points1d({3})) == doctest::Approx(9.0));
  CHECK(wasserstein2_sq(points1d({0, 1}), points1d({1, 2})) == doctest::Approx(1.0));
  CHECK(static_cast<double>(oracle::uniform_ot_lp({{1, 4}, {0, 1}})) == doctest::Approx(1.0));

  CHECK(wasserstein1(points1d({1, 2}), points1d({1, 2})) == doctest::Approx(0.0));
  CHECK(wasserstein1(points1d({0}), points1d({3})) == doctest::Approx(3.0));
  CHECK(wasserstein1(points1d({0, 0}), points1d({1, 3})) == doctest::Approx(2.0));
  CHECK(static_cast<double>(oracle::uniform_ot_lp({{1, 3}, {1, 3}})) == doctest::Approx(2.0));

  CHECK_THROWS_AS(wasserstein1(PointSet::Zero(2, 1), PointSet::Zero(2, 2)), ValidationError);
  CHECK_THROWS_AS(wasserstein2_sq(PointSet::Zero(2, 1), PointSet::Zero(2, 2)), ValidationError);

  // Different sizes against the LP oracle.
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const PointSet a = random_points(rng, 4, 2);
    const PointSet b = random_points(rng, 5, 2);
    const auto dense = CostMatrix::euclidean(a, b).to_dense();
    CHECK(wasserstein1(a, b) == doctest::Approx(static_cast<double>(oracle::uniform_ot_lp(nested(dense)))).epsilon(1e-9));
  }
  // Eigen expressions are accepted directly.
  const Eigen::MatrixXd col = Eigen::VectorXd::LinSpaced(3, 0.0, 1.0);
  CHECK(wasserstein1(col, col.array() + 0.5) == doctest::Approx(0.5));
}

TEST_CASE("top_mass_indices") {
  TransportPlan one;
  one.plan = SparsePlan(1, 1);
  one.plan.insert(0, 0) = 1.0;
  CHECK(top_mass_indices(one, PlanSide::Rows, 1) == IndexList{0});

  Eigen::VectorXd mass(3);
  mass << 0.2, 0.5, 0.3;
  CHECK(top_mass_indices(mass, 2) == IndexList{1, 2});

  Eigen::VectorXd tie(2);
  tie << 0.5, 0.5;
  CHECK(top_mass_indices(tie, 1) == IndexList{0});
  CHECK(top_mass_indices(tie, 2) == IndexList{0, 1});

  CHECK_THROWS_AS(top_mass_indices(tie, 3), ValidationError);
}

TEST_CASE("assignment solver") {
  SUBCASE("permutation oracle on small instances") {
    Rng rng(21);
    for (int trial = 0; trial < 40; ++trial) {
      const Index n = 1 + trial % 7;
      const PointSet a = random_points(rng, n, 2);
      const PointSet b = random_points(rng, n, 2);
      const IndexList match = solve_assignment(CostMatrix::squared_euclidean(a, b).to_dense());
      std::vector<char> seen(static_cast<std::size_t>(n), 0);
      double cost = 0.0;
      for (Index i = 0; i < n; ++i) {
        const Index j = match[static_cast<std::size_t>(i)];
        REQUIRE(j >= 0);
        REQUIRE(j < n);
        CHECK_FALSE(seen[static_cast<std::size_t>(j)]);
        seen[static_cast<std::size_t>(j)] = 1;
        cost += (a.row(i) - b.row(j)).squaredNorm();
      }
      CHECK(cost / static_cast<double>(n) ==
            doctest::Approx(oracle::w2_sq_by_permutation(nested(a), nested(b))).epsilon(1e-10));
    }
  }
  SUBCASE("agrees with the network simplex at batch size") {
    Rng rng(22);
    const PointSet a = random_points(rng, 128, 2);
    const PointSet b = random_points(rng, 128, 2);
    const IndexList match = solve_assignment(CostMatrix::squared_euclidean(a, b).to_dense());
    double cost = 0.0;
    for (Index i = 0; i < 128; ++i) cost += (a.row(i) - b.row(match[static_cast<std::size_t>(i)])).squaredNorm();
    CHECK(cost / 128.0 == doctest::Approx(wasserstein2_sq(a, b)).epsilon(1e-10));
  }
  SUBCASE("rejects non-square input") {
    CHECK_THROWS_AS(solve_assignment(Eigen::MatrixXd::Zero(2, 3)), ValidationError);
  }
}
