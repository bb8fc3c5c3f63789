#pragma once

#include "ctot/core.hpp"
#include "ctot/labels.hpp"
#include "ctot/random.hpp"
#include "ctot/smoothing.hpp"
#include "ctot/trajectory.hpp"

#include <string>
#include <vector>

namespace ctot {

/// Velocity field v(x, t): (d+1) -> 64 -> 64 -> 64 -> d with SELU activations.
///
/// Parameters live in one flat vector, layer by layer, each layer stored as its
/// row-major weight matrix followed by its bias.
class Mlp {
 public:
  static constexpr Index kHidden = 64;
  static constexpr Index kLayers = 4;

  Mlp() = default;
  explicit Mlp(Index dim);

  /// PyTorch-default init: every weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Mlp initialized(Index dim, Rng& rng);

  Index dim() const { return dim_; }
  static Index parameter_count(Index dim) { return (dim + 2) * kHidden + 2 * (kHidden + 1) * kHidden + (kHidden + 1) * dim; }
  std::vector<Index> layer_sizes() const { return {dim_ + 1, kHidden, kHidden, kHidden, dim_}; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  /// Intermediate values kept by forward() for backward(); samples are columns.
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
  };

  /// Batched forward pass; x is B x d, t has B entries. Returns B x d.
  PointSet forward(const PointSet& x, const Eigen::Ref<const Eigen::VectorXd>& t, Tape* tape = nullptr) const;
  Eigen::VectorXd velocity(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;

  /// Parameter gradient of sum_b <grad_out_b, v(x_b, t_b)> given the tape of that forward pass.
  Eigen::VectorXd backward(const Tape& tape, const PointSet& grad_out) const;

 private:
  struct Layer {
    Index in;
    Index out;
    Index offset;  // weights at offset, bias at offset + in * out
  };
  Layer layer(Index k) const;

  Index dim_ = 0;
  Eigen::VectorXd params_;
};

inline double selu(double z) {
  constexpr double lambda = 1.0507009873554804934193349852946;
  constexpr double alpha = 1.6732632423543772848170429916717;
  return z > 0.0 ? lambda * z : lambda * alpha * std::expm1(z);
}

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// Mean over the batch of || (x1 - x0) / delta_t - v(t' x1 + (1 - t') x0, t + t' delta_t) ||^2.
LossAndGradient rf_loss(const Mlp& model, const PointSet& x0, const PointSet& x1,
                        const Eigen::Ref<const Eigen::VectorXd>& t, const Eigen::Ref<const Eigen::VectorXd>& t_prime,
                        double delta_t);

/// Regression of v(x_b, t_b) onto per-sample targets; the shared core of every training mode.
LossAndGradient regression_loss(const Mlp& model, const PointSet& x, const Eigen::Ref<const Eigen::VectorXd>& t,
                                const PointSet& target);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(Index n, AdamOptions options);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  std::int64_t steps() const { return t_; }

 private:
  AdamOptions options_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t t_ = 0;
};

/// Rescales `grad` in place so its Euclidean norm is at most max_norm; returns the original norm.
double clip_gradient(Eigen::VectorXd& grad, double max_norm);

struct TrainingConfig {
  std::int64_t iterations = 5000;
  Index batch_size = 128;
  double learning_rate = 1e-4;
  double grad_clip_norm = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double delta_t = 0.1;
  double gamma = 0.005;
  double sigma_sde = 0.1;
  Pairing pairing = Pairing::MinibatchOT;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

enum class TrainingMode { Full, NoSmoothing, Coarse };

std::string to_string(TrainingMode mode);
std::string to_string(Pairing pairing);
TrainingMode parse_training_mode(const std::string& name);
Pairing parse_pairing(const std::string& name);

/// A trained field with the time span it should be integrated over.
struct FlowModel {
  Mlp mlp;
  TrainingConfig config;
  TrainingMode mode = TrainingMode::Full;
  double t_start = 0.0;
  double t_end = 1.0;
  std::vector<double> loss_curve;
};

/// Step 3 on a labelled dataset. Each iteration draws t ~ U(t_min, t_max - delta_t)
/// over the label range, samples a batch pair from p~_t and p~_{t+delta_t}, and
/// takes one clipped Adam step on the rectified-flow loss.
FlowModel train(const LabeledDataset& dataset, const TrainingConfig& config);

/// Ablation baselines. Coarse labels every point with its interval start and
/// regresses OT-paired displacements between consecutive snapshots; NoSmoothing
/// does the same between consecutive distinct Step-1 labels.
FlowModel train_baseline(const LabeledDataset& dataset, const TrainingConfig& config, TrainingMode mode);

/// Explicit Euler with `steps` steps; throws NumericalError on a non-finite state.
std::vector<Trajectory> simulate_ode(const Mlp& model, const PointSet& initial, double t_start, double t_end,
                                     Index steps = 100);

/// Euler-Maruyama with constant diffusion sigma; sigma = 0 reproduces simulate_ode exactly.
std::vector<Trajectory> simulate_sde(const Mlp& model, const PointSet& initial, double t_start, double t_end,
                                     Index steps, double sigma, Rng& rng);

/// Checkpoint as JSON text; parameters are stored as hexadecimal floats.
std::string model_to_json(const FlowModel& model);
FlowModel model_from_json(const std::string& text);

}  // namespace ctot
