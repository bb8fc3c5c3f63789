#pragma once

#include "ctot/flow.hpp"
#include "ctot/labels.hpp"
#include "ctot/synth.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace ctot::cli {

/// Missing or contradictory inputs on the command line; exits like a validation error.
class UsageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct InputPaths {
  std::string snapshots;
  std::string labels;
  std::string model;
  std::string truth_dir;
  std::vector<std::string> trajectories;
  std::string true_times;
};

struct SimulationConfig {
  std::string mode = "ode";  // ode | sde
  double sigma = 0.1;
  Index steps = 100;
  Index n_trajectories = 100;

  void validate() const;
};

struct MetricToggles {
  bool dtw = true;
  bool wasserstein = true;
  bool spearman = true;
};

struct BenchConfig {
  std::vector<Index> n_values{10000};
  std::vector<Index> k_values{100};
  std::vector<std::string> variants{"exact", "entropic", "screening", "minibatch"};
  double screening_c = 10.0;
  Index minibatch_m = 1000;
  double timeout_seconds = 900.0;

  void validate() const;
};

struct AblationConfig {
  Index seeds = 5;
  std::vector<std::string> variants{"none", "no-step2", "no-step12"};
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DatasetSpec dataset = DatasetSpec::defaults(DatasetKind::Spiral);
  InputPaths inputs;
  InferenceOptions inference;
  TimeDensity label_density;  // time density assumed when placing labels
  TrainingConfig training;
  TrainingMode ablation = TrainingMode::Full;
  SimulationConfig simulation;
  MetricToggles metrics;
  BenchConfig bench;
  AblationConfig ablate;

  /// Unknown keys anywhere in the document raise ValidationError.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::ordered_json to_json() const;

  /// Copies the single seed into every stage that draws random numbers.
  void propagate_seed();
  void validate() const;

  std::string out_path(const std::string& name) const;
};

nlohmann::ordered_json density_to_json(const TimeDensity& d);
TimeDensity density_from_json(const nlohmann::json& j);

}  // namespace ctot::cli
