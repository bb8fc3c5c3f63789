#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "commands.hpp"

#include <cmath>
#include <filesystem>

using namespace ctot;
using namespace ctot::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ctot_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

RunConfig small_config(const std::string& dir) {
  RunConfig c;
  c.output_dir = dir;
  c.dataset.n_per_interval = 60;
  c.inference.K = 10;
  c.training.iterations = 30;
  c.training.batch_size = 16;
  c.simulation.n_trajectories = 20;
  c.seed = 5;
  c.propagate_seed();
  return c;
}

std::string slurp(const std::string& path) { return io::read_text(path); }

}  // namespace

TEST_CASE("run config defaults") {
  const RunConfig c;
  CHECK(c.inference.K == 100);
  CHECK(c.training.gamma == 0.005);
  CHECK(c.training.delta_t == 0.1);
  CHECK(c.simulation.sigma == 0.1);
  CHECK(c.simulation.steps == 100);
  CHECK(c.dataset.n_per_interval == 1000);
  CHECK(c.ablation == TrainingMode::Full);
}

TEST_CASE("run config json") {
  SUBCASE("round trip") {
    RunConfig c;
    c.seed = 12;
    c.dataset = DatasetSpec::defaults(DatasetKind::Line1d);
    c.dataset.p_t = TimeDensity::triangular(5, 1);
    c.inference.screening_c = 10.0;
    c.inference.minibatch_m = 500;
    c.label_density = TimeDensity::gaussian_mixture({{0.5, 0.5, 0.1}, {0.5, 1.5, 0.2}});
    c.ablation = TrainingMode::NoSmoothing;
    c.training.pairing = Pairing::Independent;
    c.simulation.mode = "sde";
    c.inputs.trajectories = {"a.csv", "b.csv"};
    c.propagate_seed();
    const RunConfig back = RunConfig::from_json(json::parse(c.to_json().dump()));
    CHECK(back.to_json() == c.to_json());
    CHECK(back.dataset.rng_seed == 12);
    CHECK(back.training.rng_seed == 12);
    CHECK(*back.inference.minibatch_m == 500);
  }
  SUBCASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"sed": 1})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"training": {"lr": 1}})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"dataset": {"time_density": {"kind": "uniform", "a": 1}}})")),
                    ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"bench": {"variants": ["exact", "fast"]}})")),
                    ValidationError);
  }
  SUBCASE("types and values are checked") {
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"seed": "zero"})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"inference": {"K": 0}})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"simulation": {"mode": "rk4"}})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"training": {"ablation": "no-step3"}})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"([1, 2])")), ValidationError);
  }
  SUBCASE("dataset kind selects its interval layout") {
    const RunConfig c = RunConfig::from_json(json::parse(R"({"dataset": {"kind": "arch"}})"));
    REQUIRE(c.dataset.intervals.size() == 2);
    CHECK(c.dataset.intervals[1].start == 2.0);
    const RunConfig t = RunConfig::from_json(
        json::parse(R"({"inference": {"time_density": {"kind": "triangular", "a": 5, "b": 1}, "screening_c": null}})"));
    CHECK(t.label_density.kind() == TimeDensity::Kind::Triangular);
    CHECK_FALSE(t.inference.screening_c.has_value());
  }
  CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/config.json"), IoError);
}

TEST_CASE("generate") {
  const std::string dir = fresh_dir("generate");
  RunConfig c;
  c.output_dir = dir;
  CHECK(cmd_generate(c) == 0);
  const auto snapshots = io::read_snapshots(dir + "/snapshots.csv");
  REQUIRE(snapshots.size() == 2);
  CHECK(snapshots[0].size() + snapshots[1].size() == 2000);
  const std::string first = slurp(dir + "/snapshots.csv");
  CHECK(cmd_generate(c) == 0);
  CHECK(slurp(dir + "/snapshots.csv") == first);
  CHECK(io::truth_present(dir));
  CHECK(io::read_true_times(dir + "/true_times.csv").size() == 2000);

  RunConfig arch;
  arch.output_dir = fresh_dir("generate_arch");
  arch.dataset = DatasetSpec::defaults(DatasetKind::Arch);
  arch.dataset.n_per_interval = 20;
  cmd_generate(arch);
  const auto meta = io::read_csv(arch.output_dir + "/snapshots.csv").meta;
  CHECK(meta["intervals"] == json::parse("[[0.0, 1.0], [2.0, 3.0]]"));
  CHECK(meta["config"]["dataset"]["kind"] == "arch");
  CHECK(meta["seed"] == 0);
}

TEST_CASE("pipeline is deterministic") {
  const std::string dir = fresh_dir("pipeline");
  const RunConfig c = small_config(dir);
  const auto run = [&] {
    REQUIRE(cmd_generate(c) == 0);
    REQUIRE(cmd_infer(c) == 0);
    REQUIRE(cmd_train(c) == 0);
    REQUIRE(cmd_simulate(c) == 0);
    REQUIRE(cmd_eval(c) == 0);
    return std::make_pair(slurp(dir + "/labels.csv"), slurp(dir + "/metrics.json"));
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);

  const auto loss = io::read_csv(dir + "/loss.csv");
  CHECK(loss.rows.size() == 30);
  const json metrics = json::parse(a.second);
  CHECK(metrics.contains("l_dtw"));
  CHECK(metrics.contains("l_wass"));
  CHECK(metrics.contains("spearman"));
  CHECK(metrics.contains("w1_t100"));
  double sum = 0.0;
  for (int t = 1; t <= 100; ++t) {
    char key[16];
    std::snprintf(key, sizeof key, "w1_t%03d", t);
    sum += metrics[key].get<double>();
  }
  CHECK(sum / 100.0 == doctest::Approx(metrics["l_wass"].get<double>()));
  CHECK(metrics["seed"] == 5);

  const auto sims = io::read_trajectories(dir + "/trajectories.csv");
  CHECK(sims.size() == 20);
  CHECK(sims[0].steps() == 100);

  SUBCASE("sde mode is seeded") {
    RunConfig s = c;
    s.simulation.mode = "sde";
    cmd_simulate(s);
    const std::string first = slurp(dir + "/trajectories.csv");
    cmd_simulate(s);
    CHECK(slurp(dir + "/trajectories.csv") == first);
  }
  SUBCASE("baselines train from the same files") {
    RunConfig b = c;
    b.ablation = TrainingMode::Coarse;
    CHECK(cmd_train(b) == 0);
    CHECK(model_from_json(slurp(dir + "/model.json")).mode == TrainingMode::Coarse);
    b.ablation = TrainingMode::NoSmoothing;
    CHECK(cmd_train(b) == 0);
  }
  SUBCASE("batch evaluation") {
    RunConfig e = c;
    fs::copy_file(dir + "/trajectories.csv", dir + "/run2.csv", fs::copy_options::overwrite_existing);
    e.inputs.trajectories = {dir + "/trajectories.csv", dir + "/run2.csv"};
    cmd_eval(e);
    const json m = json::parse(slurp(dir + "/metrics.json"));
    CHECK(m["runs"] == 2);
    CHECK(m["l_dtw_std"].get<double>() == 0.0);
    CHECK(m["l_dtw_mean"].get<double>() == doctest::Approx(metrics["l_dtw"].get<double>()));
    CHECK(m["per_run"].size() == 2);
  }
}

TEST_CASE("usage errors") {
  const std::string dir = fresh_dir("usage");
  RunConfig c = small_config(dir);
  cmd_generate(c);
  CHECK_THROWS_AS(cmd_train(c), UsageError);
  c.ablation = TrainingMode::Coarse;
  CHECK(cmd_train(c) == 0);

  // A 3-D model cannot start from 2-D truth points.
  FlowModel wrong;
  Rng rng(1);
  wrong.mlp = Mlp::initialized(3, rng);
  io::write_text(dir + "/model.json", model_to_json(wrong));
  CHECK_THROWS_AS(cmd_simulate(c), ValidationError);

  const std::string empty = fresh_dir("usage_empty");
  RunConfig e = small_config(empty);
  try {
    cmd_eval(e);
    FAIL("expected a usage error");
  } catch (const UsageError& err) {
    CHECK(std::string(err.what()).find("Computable") != std::string::npos);
  }
  CHECK_THROWS_AS(cmd_infer(e), IoError);
}

TEST_CASE("eval of the truth against itself is zero") {
  const std::string dir = fresh_dir("truth_self");
  GroundTruth g;
  g.t_start = 0.0;
  g.t_end = 2.0;
  for (int branch : {1, -1}) {
    Trajectory tr{PointSet(21, 2), 0.0, 2.0};
    for (Index k = 0; k <= 20; ++k) tr.states.row(k) = mean_path(DatasetKind::YShaped, tr.time(k), branch).transpose();
    g.trajectories.push_back(tr);
  }
  for (Index k = 0; k <= 20; ++k) {
    PointSet p(2, 2);
    p.row(0) = g.trajectories[0].states.row(k);
    p.row(1) = g.trajectories[1].states.row(k);
    g.distributions.push_back(p);
  }
  io::write_truth(dir, g, io::Metadata::object());
  RunConfig c;
  c.output_dir = dir;
  c.inputs.trajectories = {dir + "/truth_trajectories.csv"};
  CHECK(cmd_eval(c) == 0);
  const json m = json::parse(slurp(dir + "/metrics.json"));
  CHECK(m["l_dtw"].get<double>() == 0.0);
  CHECK(m["l_wass"].get<double>() == doctest::Approx(0.0).scale(1.0));
  CHECK_FALSE(m.contains("spearman"));
}

TEST_CASE("metric aggregation") {
  std::vector<Metrics> runs(3);
  const double v[] = {1.0, 2.0, 4.0};
  for (int i = 0; i < 3; ++i) {
    runs[static_cast<std::size_t>(i)].l_dtw = v[i];
    runs[static_cast<std::size_t>(i)].l_wass = 2 * v[i];
  }
  const auto j = aggregate_metrics(runs);
  CHECK(j["l_dtw_mean"].get<double>() == doctest::Approx(7.0 / 3.0));
  // Sample standard deviation of {1, 2, 4}.
  CHECK(j["l_dtw_std"].get<double>() == doctest::Approx(std::sqrt(7.0 / 3.0)));
  CHECK(j["l_wass_std"].get<double>() == doctest::Approx(2.0 * std::sqrt(7.0 / 3.0)));
  CHECK_FALSE(j.contains("spearman_mean"));
}

TEST_CASE("initial points") {
  PointSet pool(3, 1);
  pool << 1, 2, 3;
  Rng rng(1);
  CHECK(initial_points(pool, 2, rng) == pool.topRows(2));
  const PointSet many = initial_points(pool, 50, rng);
  CHECK(many.rows() == 50);
  CHECK((many.array() >= 1).all());
  CHECK((many.array() <= 3).all());
  CHECK_THROWS_AS(initial_points(PointSet(0, 1), 2, rng), ValidationError);
}

TEST_CASE("bench markers") {
  RunConfig c;
  c.output_dir = fresh_dir("bench");
  c.bench.n_values = {150};
  c.bench.k_values = {10};
  c.bench.minibatch_m = 50;
  c.inference.solver.entropic.max_dense_entries = 100;
  const auto rows = run_bench(c);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].variant == "exact");
  CHECK(rows[0].status == "ok");
  CHECK(rows[0].spearman_vs_full == 1.0);
  CHECK(rows[0].spearman_vs_truth > 0.9);
  CHECK(rows[1].variant == "entropic");
  CHECK(rows[1].status == "OOM");
  CHECK(std::isnan(rows[1].spearman_vs_full));
  CHECK(rows[2].status == "ok");
  CHECK(rows[3].status == "ok");

  c.bench.n_values = {3000};
  c.bench.k_values = {100};
  c.bench.variants = {"exact"};
  c.bench.timeout_seconds = 0.05;
  const auto slow = run_bench(c);
  REQUIRE(slow.size() == 1);
  CHECK(slow[0].status == "timeout");

  write_bench_csv(c.output_dir + "/bench.csv", rows, artifact_metadata(c, "bench"));
  const std::string text = slurp(c.output_dir + "/bench.csv");
  CHECK(text.find("N,K,variant,seconds,spearman_vs_full,spearman_vs_truth,status") != std::string::npos);
  CHECK(text.find(",entropic,") != std::string::npos);
  CHECK(text.find(",OOM\n") != std::string::npos);
}
