#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctot/flow.hpp"
#include "ctot/synth.hpp"
#include "helpers.hpp"

#include <cmath>
#include <numeric>

using namespace ctot;
using namespace testing;

namespace {

// A field that is the constant c everywhere: only the output bias is set.
Mlp constant_field(const Eigen::VectorXd& c) {
  Mlp m(c.size());
  m.params().tail(c.size()) = c;
  return m;
}

Eigen::VectorXd uniform01(Rng& rng, Index n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

LabeledDataset spiral_with_true_labels(Index n, std::uint64_t seed) {
  DatasetSpec spec = DatasetSpec::defaults(DatasetKind::Spiral);
  spec.n_per_interval = n;
  spec.rng_seed = seed;
  const auto g = generate(spec);
  return make_dataset(g.snapshots, g.true_times);
}

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to),
                         0.0) /
         static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("mlp shape and init") {
  CHECK(Mlp::parameter_count(2) == 3 * 64 + 64 + 2 * (64 * 64 + 64) + 64 * 2 + 2);
  Rng rng(1);
  const Mlp m = Mlp::initialized(2, rng);
  CHECK(m.params().size() == Mlp::parameter_count(2));
  // First layer has fan-in 3, every later hidden layer fan-in 64.
  CHECK(m.params().head(3 * 64 + 64).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
  CHECK(m.params().tail(64 * 2 + 2).cwiseAbs().maxCoeff() <= 1.0 / 8.0);
  CHECK(m.layer_sizes() == std::vector<Index>{3, 64, 64, 64, 2});
  CHECK(selu(1.0) == doctest::Approx(1.0507009873554805));
  CHECK(selu(-1.0) == doctest::Approx(1.0507009873554805 * 1.6732632423543772 * std::expm1(-1.0)));
}

TEST_CASE("rf_loss gradient matches finite differences") {
  Rng rng(2);
  for (int draw = 0; draw < 20; ++draw) {
    const Index d = 1 + draw % 3;
    Mlp m = Mlp::initialized(d, rng);
    const PointSet x0 = random_points(rng, 6, d);
    const PointSet x1 = random_points(rng, 6, d);
    const Eigen::VectorXd t = uniform01(rng, 6) * 2.0;
    const Eigen::VectorXd tp = uniform01(rng, 6);
    const double delta = 0.1 + 0.3 * uniform01(rng, 1)[0];
    const auto lg = rf_loss(m, x0, x1, t, tp, delta);
    std::uniform_int_distribution<Index> pick(0, m.params().size() - 1);
    for (int k = 0; k < 8; ++k) {
      const Index p = pick(rng);
      const double saved = m.params()[p];
      const double h = 1e-5 * std::max(1.0, std::abs(saved));
      m.params()[p] = saved + h;
      const double up = rf_loss(m, x0, x1, t, tp, delta).loss;
      m.params()[p] = saved - h;
      const double down = rf_loss(m, x0, x1, t, tp, delta).loss;
      m.params()[p] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(lg.gradient[p]), 1e-3});
      CHECK(std::abs(fd - lg.gradient[p]) / scale < 1e-4);
    }
  }
}

TEST_CASE("rf_loss examples") {
  const PointSet x0 = points1d({0.0, 1.0, -2.0});
  const Eigen::VectorXd t = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd tp = (Eigen::VectorXd(3) << 0.0, 0.5, 1.0).finished();
  // Zero field, no motion.
  CHECK(rf_loss(Mlp(1), x0, x0, t, tp, 0.1).loss == 0.0);
  // Constant field matching a rigid shift.
  const PointSet x1 = (x0.array() + 0.03).matrix();
  CHECK(rf_loss(constant_field(Eigen::VectorXd::Constant(1, 0.3)), x0, x1, t, tp, 0.1).loss ==
        doctest::Approx(0.0).scale(1.0));
  // Zero field against a shift: every residual is the displacement / delta.
  CHECK(rf_loss(Mlp(1), x0, x1, t, tp, 0.1).loss == doctest::Approx(0.09));
  CHECK_THROWS_AS(rf_loss(Mlp(1), x0, x1, t, tp, 0.0), ValidationError);
  CHECK_THROWS_AS(rf_loss(Mlp(1), x0, x1, t, (tp.array() + 1.0).matrix(), 0.1), ValidationError);
  CHECK_THROWS_AS(rf_loss(Mlp(1), x0, x1.topRows(2), t, tp, 0.1), ValidationError);
}

TEST_CASE("adam and clipping") {
  Eigen::VectorXd g(2);
  g << 3, 4;
  CHECK(clip_gradient(g, 0.1) == doctest::Approx(5.0));
  CHECK(g.norm() == doctest::Approx(0.1));
  Eigen::VectorXd small(2);
  small << 0.01, 0.0;
  clip_gradient(small, 0.1);
  CHECK(small[0] == 0.01);

  // The first bias-corrected step moves each coordinate by about lr * sign(g).
  Adam adam(2, {0.5, 0.9, 0.999, 1e-8});
  Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
  adam.step(p, (Eigen::VectorXd(2) << 2.0, -1e-3).finished());
  CHECK(p[0] == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(adam.steps() == 1);
}

TEST_CASE("ode integration") {
  Rng rng(3);
  const PointSet x0 = random_points(rng, 5, 2);
  SUBCASE("constant field is integrated exactly") {
    const Eigen::VectorXd c = (Eigen::VectorXd(2) << 0.7, -1.3).finished();
    const auto tr = simulate_ode(constant_field(c), x0, 0.5, 2.5, 100);
    REQUIRE(tr.size() == 5);
    for (Index i = 0; i < 5; ++i) {
      CHECK(tr[static_cast<std::size_t>(i)].states.rows() == 101);
      const Eigen::RowVectorXd expected = x0.row(i) + 2.0 * c.transpose();
      CHECK((tr[static_cast<std::size_t>(i)].states.row(100) - expected).norm() < 1e-12);
    }
    CHECK(tr[0].time(50) == doctest::Approx(1.5));
  }
  SUBCASE("zero field keeps points still") {
    for (const auto& tr : simulate_ode(Mlp(2), x0, 0, 1, 10))
      for (Index k = 1; k <= 10; ++k) CHECK(tr.states.row(k) == tr.states.row(0));
  }
  SUBCASE("Euler is first order") {
    const Mlp m = Mlp::initialized(2, rng);
    const auto coarse = simulate_ode(m, x0, 0, 1, 100);
    const auto fine = simulate_ode(m, x0, 0, 1, 200);
    const auto ref = simulate_ode(m, x0, 0, 1, 6400);
    for (std::size_t i = 0; i < coarse.size(); ++i) {
      const double e1 = (coarse[i].states.row(100) - ref[i].states.row(6400)).norm();
      const double e2 = (fine[i].states.row(200) - ref[i].states.row(6400)).norm();
      CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.1));
    }
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(simulate_ode(Mlp(2), x0, 0, 1, 0), ValidationError);
    CHECK_THROWS_AS(simulate_ode(Mlp(3), x0, 0, 1, 10), ValidationError);
    CHECK_THROWS_AS(simulate_ode(constant_field(Eigen::VectorXd::Constant(2, 1e308)), x0, 0, 10, 10), NumericalError);
  }
}

TEST_CASE("sde integration") {
  Rng rng(4);
  const Mlp m = Mlp::initialized(2, rng);
  const PointSet x0 = random_points(rng, 7, 2);
  SUBCASE("sigma zero reproduces the ode") {
    Rng noise(1);
    const auto a = simulate_sde(m, x0, 0, 2, 50, 0.0, noise);
    const auto b = simulate_ode(m, x0, 0, 2, 50);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].states == b[i].states);
  }
  SUBCASE("pure diffusion has variance sigma^2 T") {
    const Index n = 4000;
    const PointSet start = PointSet::Zero(n, 1);
    Rng noise(2);
    const double sigma = 0.3;
    const double span = 2.0;
    const auto tr = simulate_sde(Mlp(1), start, 0, span, 100, sigma, noise);
    Eigen::VectorXd end(n);
    for (Index i = 0; i < n; ++i) end[i] = tr[static_cast<std::size_t>(i)].states(100, 0);
    const double var = (end.array() - end.mean()).square().sum() / static_cast<double>(n - 1);
    const double expected = sigma * sigma * span;
    // Sample variance of n normals has sd expected * sqrt(2 / (n - 1)).
    CHECK(std::abs(var - expected) <= 3.0 * expected * std::sqrt(2.0 / static_cast<double>(n - 1)));
    CHECK(std::abs(end.mean()) <= 3.0 * std::sqrt(expected / static_cast<double>(n)));
  }
  SUBCASE("seeded noise is reproducible") {
    Rng a(9), b(9);
    CHECK(simulate_sde(m, x0, 0, 1, 20, 0.1, a)[3].states == simulate_sde(m, x0, 0, 1, 20, 0.1, b)[3].states);
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(5);
  FlowModel model;
  model.mlp = Mlp::initialized(3, rng);
  model.mode = TrainingMode::NoSmoothing;
  model.t_start = 0.25;
  model.t_end = 1.75;
  model.config.gamma = 0.02;
  model.config.pairing = Pairing::Independent;
  model.config.rng_seed = 77;
  const FlowModel back = model_from_json(model_to_json(model));
  CHECK(back.mlp.params() == model.mlp.params());
  CHECK(back.mode == model.mode);
  CHECK(back.t_start == 0.25);
  CHECK(back.t_end == 1.75);
  CHECK(back.config.gamma == 0.02);
  CHECK(back.config.pairing == Pairing::Independent);
  CHECK(back.config.rng_seed == 77);
  CHECK_THROWS_AS(model_from_json("{"), ValidationError);
  CHECK_THROWS_AS(model_from_json(R"({"format": "other"})"), ValidationError);
}

TEST_CASE("training config validation") {
  TrainingConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.iterations == 5000);
  CHECK(c.batch_size == 128);
  CHECK(c.learning_rate == 1e-4);
  CHECK(c.grad_clip_norm == 0.1);
  CHECK(c.delta_t == 0.1);
  CHECK(c.gamma == 0.005);
  c.delta_t = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK(parse_training_mode("no-step12") == TrainingMode::Coarse);
  CHECK(to_string(TrainingMode::NoSmoothing) == "no-step2");
  CHECK(parse_pairing("independent") == Pairing::Independent);
  CHECK_THROWS_AS(parse_training_mode("full-ish"), ValidationError);
}

TEST_CASE("training") {
  const LabeledDataset ds = spiral_with_true_labels(150, 1);
  TrainingConfig c;
  c.iterations = 400;
  c.batch_size = 64;
  c.learning_rate = 1e-3;
  c.rng_seed = 3;

  SUBCASE("deterministic for a fixed seed") {
    c.iterations = 15;
    CHECK(train(ds, c).mlp.params() == train(ds, c).mlp.params());
    CHECK(train_baseline(ds, c, TrainingMode::Coarse).mlp.params() ==
          train_baseline(ds, c, TrainingMode::Coarse).mlp.params());
    TrainingConfig other = c;
    other.rng_seed = 4;
    CHECK(train(ds, c).mlp.params() != train(ds, other).mlp.params());
  }
  SUBCASE("loss goes down") {
    for (Pairing p : {Pairing::MinibatchOT, Pairing::Independent}) {
      c.pairing = p;
      const FlowModel m = train(ds, c);
      REQUIRE(m.loss_curve.size() == 400);
      // Independent pairs keep a large irreducible variance, so only ask for a drop.
      const double factor = p == Pairing::MinibatchOT ? 0.5 : 0.9;
      CHECK(mean_of(m.loss_curve, 350, 400) < factor * mean_of(m.loss_curve, 0, 50));
      CHECK(m.t_start == 0.0);
      CHECK(m.t_end == 2.0);
    }
  }
  SUBCASE("coarse baseline span and targets") {
    const FlowModel m = train_baseline(ds, c, TrainingMode::Coarse);
    CHECK(m.mode == TrainingMode::Coarse);
    CHECK(m.t_start == 0.0);
    CHECK(m.t_end == 1.0);
  }
  SUBCASE("identical snapshots teach a still field") {
    Snapshot s;
    s.points = ds.points.topRows(40);
    s.interval = {0, 1};
    Snapshot s2 = s;
    s2.interval = {1, 2};
    const LabeledDataset twin = make_dataset({s, s2}, Eigen::VectorXd::Zero(80));
    c.iterations = 600;
    const FlowModel m = train_baseline(twin, c, TrainingMode::Coarse);
    const PointSet v = m.mlp.forward(s.points, Eigen::VectorXd::Zero(40));
    CHECK(v.rowwise().norm().maxCoeff() < 0.05);
  }
  SUBCASE("bad datasets") {
    LabeledDataset one = ds;
    one.labels.setConstant(0.5);
    CHECK_THROWS_AS(train(one, c), ValidationError);
    LabeledDataset empty;
    CHECK_THROWS_AS(train(empty, c), ValidationError);
  }
}
