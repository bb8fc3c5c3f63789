#pragma once

#include "run_config.hpp"

#include "ctot/io.hpp"
#include "ctot/trajectory.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ctot::cli {

int cmd_generate(const RunConfig& config);
int cmd_infer(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_simulate(const RunConfig& config);
int cmd_eval(const RunConfig& config);
int cmd_bench(const RunConfig& config);
int cmd_ablate(const RunConfig& config);

/// Resolved config, seed and command name, echoed into every artifact.
io::Metadata artifact_metadata(const RunConfig& config, const std::string& command);

/// First n rows of `pool`, or n draws with replacement when the pool is smaller.
PointSet initial_points(const PointSet& pool, Index n, Rng& rng);

std::vector<Trajectory> simulate_model(const FlowModel& model, const PointSet& initial, const SimulationConfig& sim,
                                       std::uint64_t seed);

struct Metrics {
  std::optional<double> l_dtw;
  std::optional<double> l_wass;
  std::optional<double> spearman;
  std::vector<double> w1_per_time;
};

Metrics evaluate(const GroundTruth* truth, const std::vector<Trajectory>* sims, const Eigen::VectorXd* labels,
                 const Eigen::VectorXd* true_times, const MetricToggles& toggles);

/// Flat map: scalar metrics plus w1_t001.. per truth step.
nlohmann::ordered_json metrics_to_json(const Metrics& m);

/// Per-metric mean and sample standard deviation over runs.
nlohmann::ordered_json aggregate_metrics(const std::vector<Metrics>& runs);

struct BenchRow {
  Index n = 0;
  Index k = 0;
  std::string variant;
  double seconds = 0.0;
  double spearman_vs_full = 0.0;
  double spearman_vs_truth = 0.0;
  std::string status = "ok";  // ok | OOM | timeout | error
};

/// Times Step 1 on a Spiral dataset with n points per snapshot. Each case runs in a
/// child process so a timeout or allocation failure only marks that row.
std::vector<BenchRow> run_bench(const RunConfig& config);
void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows, const io::Metadata& meta);

struct PipelineRun {
  std::uint64_t seed = 0;
  double spearman = 0.0;
  std::vector<std::pair<std::string, Metrics>> variants;  // ablation name -> ODE metrics
};

/// generate -> infer -> train each variant -> simulate (ODE) -> evaluate, all in memory.
PipelineRun run_pipeline(const RunConfig& config, const std::vector<std::string>& variants);

}  // namespace ctot::cli
