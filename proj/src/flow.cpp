#include "ctot/flow.hpp"

#include "ctot/pot.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

namespace ctot {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

double selu_grad(double z) { return z > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(z); }

}  // namespace

Mlp::Mlp(Index dim) : dim_(dim), params_(Eigen::VectorXd::Zero(parameter_count(dim))) {
  require(dim >= 1, "mlp: dimension must be >= 1");
}

Mlp Mlp::initialized(Index dim, Rng& rng) {
  Mlp m(dim);
  for (Index k = 0; k < kLayers; ++k) {
    const Layer l = m.layer(k);
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < l.in * l.out + l.out; ++i) m.params_[l.offset + i] = u(rng);
  }
  return m;
}

Mlp::Layer Mlp::layer(Index k) const {
  const auto sizes = layer_sizes();
  Index offset = 0;
  for (Index i = 0; i < k; ++i) offset += sizes[i] * sizes[i + 1] + sizes[i + 1];
  return {sizes[k], sizes[k + 1], offset};
}

PointSet Mlp::forward(const PointSet& x, const Eigen::Ref<const Eigen::VectorXd>& t, Tape* tape) const {
  require(dim_ >= 1, "mlp: uninitialised model");
  require(x.cols() == dim_, "mlp: input dimension mismatch");
  require(t.size() == x.rows(), "mlp: one time per sample required");
  const Index batch = x.rows();
  Eigen::MatrixXd a(dim_ + 1, batch);
  a.topRows(dim_) = x.transpose();
  a.row(dim_) = t.transpose();
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  for (Index k = 0; k < kLayers; ++k) {
    const Layer l = layer(k);
    const Eigen::Map<const RowMatrix> w(params_.data() + l.offset, l.out, l.in);
    const Eigen::Map<const Eigen::VectorXd> b(params_.data() + l.offset + l.in * l.out, l.out);
    Eigen::MatrixXd z = w * a;
    z.colwise() += b;
    if (tape) tape->inputs.push_back(a);
    if (k + 1 < kLayers) {
      if (tape) tape->pre.push_back(z);
      a = z.unaryExpr([](double v) { return selu(v); });
    } else {
      a = std::move(z);
    }
  }
  return a.transpose();
}

Eigen::VectorXd Mlp::velocity(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const {
  require(x.size() == dim_, "mlp: input dimension mismatch");
  const PointSet row = x.transpose();
  return forward(row, Eigen::VectorXd::Constant(1, t)).row(0).transpose();
}

Eigen::VectorXd Mlp::backward(const Tape& tape, const PointSet& grad_out) const {
  require(static_cast<Index>(tape.inputs.size()) == kLayers, "mlp: tape does not hold a full forward pass");
  require(grad_out.cols() == dim_ && grad_out.rows() == tape.inputs.front().cols(), "mlp: gradient shape mismatch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd g = grad_out.transpose();  // dL/dz of the current layer, out x B
  for (Index k = kLayers - 1; k >= 0; --k) {
    const Layer l = layer(k);
    Eigen::Map<RowMatrix> gw(grad.data() + l.offset, l.out, l.in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + l.offset + l.in * l.out, l.out);
    gw.noalias() = g * tape.inputs[static_cast<std::size_t>(k)].transpose();
    gb = g.rowwise().sum();
    if (k == 0) break;
    const Eigen::Map<const RowMatrix> w(params_.data() + l.offset, l.out, l.in);
    Eigen::MatrixXd up = w.transpose() * g;
    g = up.cwiseProduct(tape.pre[static_cast<std::size_t>(k - 1)].unaryExpr([](double z) { return selu_grad(z); }));
  }
  return grad;
}

LossAndGradient regression_loss(const Mlp& model, const PointSet& x, const Eigen::Ref<const Eigen::VectorXd>& t,
                                const PointSet& target) {
  require(x.rows() > 0, "loss: empty batch");
  require(target.rows() == x.rows() && target.cols() == x.cols(), "loss: target shape mismatch");
  Mlp::Tape tape;
  const PointSet v = model.forward(x, t, &tape);
  const PointSet residual = v - target;
  const double batch = static_cast<double>(x.rows());
  LossAndGradient out;
  out.loss = residual.squaredNorm() / batch;
  out.gradient = model.backward(tape, (2.0 / batch) * residual);
  return out;
}

LossAndGradient rf_loss(const Mlp& model, const PointSet& x0, const PointSet& x1,
                        const Eigen::Ref<const Eigen::VectorXd>& t, const Eigen::Ref<const Eigen::VectorXd>& t_prime,
                        double delta_t) {
  require(delta_t > 0.0 && std::isfinite(delta_t), "rf_loss: delta_t must be > 0");
  require(x0.rows() == x1.rows() && x0.cols() == x1.cols(), "rf_loss: x0 and x1 differ in shape");
  require(t.size() == x0.rows() && t_prime.size() == x0.rows(), "rf_loss: one t and t' per sample required");
  require((t_prime.array() >= 0.0).all() && (t_prime.array() <= 1.0).all(), "rf_loss: t' must lie in [0, 1]");
  const PointSet xt = (x1.array().colwise() * t_prime.array() + x0.array().colwise() * (1.0 - t_prime.array())).matrix();
  const Eigen::VectorXd time = t + delta_t * t_prime;
  const PointSet target = (x1 - x0) / delta_t;
  return regression_loss(model, xt, time, target);
}

Adam::Adam(Index n, AdamOptions options)
    : options_(options), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  require(grad.size() == params.size() && params.size() == m_.size(), "adam: size mismatch");
  ++t_;
  m_ = options_.beta1 * m_ + (1.0 - options_.beta1) * grad;
  v_ = options_.beta2 * v_ + (1.0 - options_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  params.array() -= options_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + options_.eps);
}

double clip_gradient(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm && norm > 0.0) grad *= max_norm / norm;
  return norm;
}

void TrainingConfig::validate() const {
  require(iterations >= 1, "training: iterations must be >= 1");
  require(batch_size >= 1, "training: batch_size must be >= 1");
  require(learning_rate > 0.0, "training: learning_rate must be > 0");
  require(grad_clip_norm > 0.0, "training: grad_clip_norm must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "training: Adam betas must be in [0, 1)");
  require(adam_eps > 0.0, "training: Adam eps must be > 0");
  require(delta_t > 0.0, "training: delta_t must be > 0");
  require(gamma > 0.0, "training: gamma must be > 0");
  require(sigma_sde >= 0.0, "training: sigma must be >= 0");
}

std::string to_string(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::Full:
      return "none";
    case TrainingMode::NoSmoothing:
      return "no-step2";
    case TrainingMode::Coarse:
      return "no-step12";
  }
  return "none";
}

std::string to_string(Pairing pairing) {
  return pairing == Pairing::Independent ? "independent" : "minibatch-ot";
}

TrainingMode parse_training_mode(const std::string& name) {
  if (name == "none") return TrainingMode::Full;
  if (name == "no-step2") return TrainingMode::NoSmoothing;
  if (name == "no-step12") return TrainingMode::Coarse;
  throw ValidationError("unknown ablation mode: " + name);
}

Pairing parse_pairing(const std::string& name) {
  if (name == "independent") return Pairing::Independent;
  if (name == "minibatch-ot") return Pairing::MinibatchOT;
  throw ValidationError("unknown pairing mode: " + name);
}

namespace {

// Runs the shared optimisation loop; `draw` fills one batch (x0, x1, t, t', delta) per iteration.
template <typename Draw>
FlowModel optimise(Index dim, const TrainingConfig& config, Draw&& draw) {
  const Rng root(config.rng_seed);
  Rng init_rng = root.split(0);
  FlowModel out;
  out.config = config;
  out.mlp = Mlp::initialized(dim, init_rng);
  Adam adam(out.mlp.params().size(), {config.learning_rate, config.beta1, config.beta2, config.adam_eps});
  out.loss_curve.reserve(static_cast<std::size_t>(config.iterations));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::int64_t it = 0; it < config.iterations; ++it) {
    Rng rng = root.split(static_cast<std::uint64_t>(it) + 1);
    PointSet x0, x1;
    Eigen::VectorXd t;
    double delta = config.delta_t;
    draw(rng, x0, x1, t, delta);
    Eigen::VectorXd t_prime(x0.rows());
    for (Index b = 0; b < t_prime.size(); ++b) t_prime[b] = unit(rng);
    LossAndGradient lg = rf_loss(out.mlp, x0, x1, t, t_prime, delta);
    if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
      throw NumericalError("training: non-finite loss at iteration " + std::to_string(it));
    clip_gradient(lg.gradient, config.grad_clip_norm);
    adam.step(out.mlp.params(), lg.gradient);
    out.loss_curve.push_back(lg.loss);
  }
  return out;
}

void check_dataset(const LabeledDataset& dataset) {
  require(dataset.size() > 0, "training: empty dataset");
  require(dataset.labels.size() == dataset.size(), "training: label count differs from point count");
  require(dataset.labels.allFinite(), "training: labels must be finite");
  require(!dataset.intervals.empty(), "training: dataset has no intervals");
}

}  // namespace

FlowModel train(const LabeledDataset& dataset, const TrainingConfig& config) {
  config.validate();
  check_dataset(dataset);
  const SmoothedSampler sampler(dataset, SmoothingConfig{config.gamma});
  const double t_min = sampler.min_label();
  const double t_max = sampler.max_label();
  require(t_max - t_min > config.delta_t, "training: label range must exceed delta_t");
  const Index batch = config.batch_size;
  FlowModel out = optimise(dataset.dim(), config, [&](Rng& rng, PointSet& x0, PointSet& x1, Eigen::VectorXd& t,
                                                      double&) {
    std::uniform_real_distribution<double> time(t_min, t_max - config.delta_t);
    if (config.pairing == Pairing::MinibatchOT) {
      // Both batches come from one time so the OT assignment pairs like with like.
      const double s = time(rng);
      x0 = sampler.sample(s, batch, rng);
      x1 = sampler.sample(s + config.delta_t, batch, rng);
      x1 = PointSet(x1(ot_assignment(x0, x1), Eigen::all));
      t = Eigen::VectorXd::Constant(batch, s);
    } else {
      x0.resize(batch, dataset.dim());
      x1.resize(batch, dataset.dim());
      t.resize(batch);
      for (Index b = 0; b < batch; ++b) {
        const double s = time(rng);
        t[b] = s;
        x0.row(b) = dataset.points.row(sampler.sample_indices(s, 1, rng)[0]);
        x1.row(b) = dataset.points.row(sampler.sample_indices(s + config.delta_t, 1, rng)[0]);
      }
    }
  });
  out.mode = TrainingMode::Full;
  out.t_start = dataset.intervals.front().start;
  out.t_end = dataset.intervals.back().end;
  return out;
}

FlowModel train_baseline(const LabeledDataset& dataset, const TrainingConfig& config, TrainingMode mode) {
  config.validate();
  check_dataset(dataset);
  if (mode == TrainingMode::Full) return train(dataset, config);

  // Groups of points sharing one time value, in increasing time.
  std::vector<double> times;
  std::vector<IndexList> groups;
  if (mode == TrainingMode::Coarse) {
    require(dataset.intervals.size() >= 2, "training: the coarse baseline needs at least two snapshots");
    groups.resize(dataset.intervals.size());
    for (Index i = 0; i < dataset.size(); ++i)
      groups[static_cast<std::size_t>(dataset.interval_index[static_cast<std::size_t>(i)])].push_back(i);
    for (const auto& iv : dataset.intervals) times.push_back(iv.start);
  } else {
    std::map<double, IndexList> by_label;
    for (Index i = 0; i < dataset.size(); ++i) by_label[dataset.labels[i]].push_back(i);
    for (auto& [label, idx] : by_label) {
      times.push_back(label);
      groups.push_back(std::move(idx));
    }
    require(groups.size() >= 2, "training: need at least two distinct labels");
  }
  for (const auto& g : groups) require(!g.empty(), "training: empty snapshot");

  // Exact OT plan between each pair of consecutive groups, computed once;
  // batches are pairs drawn from it.
  struct PairPlan {
    std::vector<std::pair<Index, Index>> entries;
    std::discrete_distribution<std::size_t> pick;
  };
  std::vector<PairPlan> plans;
  for (std::size_t j = 0; j + 1 < groups.size(); ++j) {
    const PointSet a = dataset.points(groups[j], Eigen::all);
    const PointSet b = dataset.points(groups[j + 1], Eigen::all);
    const auto plan = solve_pot_exact(CostMatrix::squared_euclidean(a, b), PotBounds{1.0, 1.0});
    PairPlan pp;
    std::vector<double> w;
    for (Index r = 0; r < plan.plan.outerSize(); ++r)
      for (SparsePlan::InnerIterator it(plan.plan, r); it; ++it) {
        pp.entries.emplace_back(groups[j][static_cast<std::size_t>(it.row())],
                                groups[j + 1][static_cast<std::size_t>(it.col())]);
        w.push_back(it.value());
      }
    pp.pick = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    plans.push_back(std::move(pp));
  }

  const Index batch = config.batch_size;
  const Index pairs = static_cast<Index>(groups.size()) - 1;
  FlowModel out = optimise(dataset.dim(), config, [&](Rng& rng, PointSet& x0, PointSet& x1, Eigen::VectorXd& t,
                                                      double& delta) {
    std::uniform_int_distribution<Index> pick_pair(0, pairs - 1);
    const Index j = pick_pair(rng);
    PairPlan& pp = plans[static_cast<std::size_t>(j)];
    IndexList i0(static_cast<std::size_t>(batch));
    IndexList i1(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) {
      const auto& e = pp.entries[pp.pick(rng)];
      i0[static_cast<std::size_t>(b)] = e.first;
      i1[static_cast<std::size_t>(b)] = e.second;
    }
    x0 = dataset.points(i0, Eigen::all);
    x1 = dataset.points(i1, Eigen::all);
    t = Eigen::VectorXd::Constant(batch, times[static_cast<std::size_t>(j)]);
    delta = times[static_cast<std::size_t>(j + 1)] - times[static_cast<std::size_t>(j)];
  });
  out.mode = mode;
  if (mode == TrainingMode::Coarse) {
    out.t_start = times.front();
    out.t_end = times.back();
  } else {
    out.t_start = dataset.intervals.front().start;
    out.t_end = dataset.intervals.back().end;
  }
  return out;
}

namespace {

std::vector<Trajectory> integrate(const Mlp& model, const PointSet& initial, double t_start, double t_end,
                                  Index steps, double sigma, Rng* rng) {
  require(steps >= 1, "simulate: steps must be >= 1");
  require(initial.rows() > 0, "simulate: no initial points");
  require(initial.cols() == model.dim(), "simulate: initial points do not match the model dimension");
  require(std::isfinite(t_start) && std::isfinite(t_end), "simulate: non-finite time span");
  require(sigma >= 0.0, "simulate: sigma must be >= 0");
  const Index n = initial.rows();
  const double h = (t_end - t_start) / static_cast<double>(steps);
  const double noise_scale = sigma * std::sqrt(std::abs(h));
  std::vector<Trajectory> out(static_cast<std::size_t>(n));
  for (auto& tr : out) {
    tr.t_start = t_start;
    tr.t_end = t_end;
    tr.states.resize(steps + 1, model.dim());
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  PointSet x = initial;
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)].states.row(0) = x.row(i);
  for (Index k = 0; k < steps; ++k) {
    const double t = t_start + h * static_cast<double>(k);
    const PointSet v = model.forward(x, Eigen::VectorXd::Constant(n, t));
    x += h * v;
    if (sigma > 0.0)
      for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < x.cols(); ++c) x(i, c) += noise_scale * normal(*rng);
    for (Index i = 0; i < n; ++i) {
      if (!x.row(i).allFinite())
        throw NumericalError("simulate: trajectory " + std::to_string(i) + " became non-finite at step " +
                             std::to_string(k + 1));
      out[static_cast<std::size_t>(i)].states.row(k + 1) = x.row(i);
    }
  }
  return out;
}

}  // namespace

std::vector<Trajectory> simulate_ode(const Mlp& model, const PointSet& initial, double t_start, double t_end,
                                     Index steps) {
  return integrate(model, initial, t_start, t_end, steps, 0.0, nullptr);
}

std::vector<Trajectory> simulate_sde(const Mlp& model, const PointSet& initial, double t_start, double t_end,
                                     Index steps, double sigma, Rng& rng) {
  return integrate(model, initial, t_start, t_end, steps, sigma, &rng);
}

namespace {

std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ValidationError("checkpoint: bad parameter value '" + s + "'");
  return v;
}

}  // namespace

std::string model_to_json(const FlowModel& model) {
  nlohmann::ordered_json j;
  j["format"] = "ctot-mlp-v1";
  j["dims"] = model.mlp.dim();
  j["layer_sizes"] = model.mlp.layer_sizes();
  j["activation"] = "selu";
  j["mode"] = to_string(model.mode);
  j["time_span"] = {model.t_start, model.t_end};
  const TrainingConfig& c = model.config;
  j["training"] = {{"iterations", c.iterations},   {"batch_size", c.batch_size},
                   {"learning_rate", c.learning_rate}, {"grad_clip_norm", c.grad_clip_norm},
                   {"beta1", c.beta1},             {"beta2", c.beta2},
                   {"adam_eps", c.adam_eps},       {"delta_t", c.delta_t},
                   {"gamma", c.gamma},             {"sigma_sde", c.sigma_sde},
                   {"pairing", to_string(c.pairing)}};
  j["seed"] = c.rng_seed;
  std::vector<std::string> params;
  params.reserve(static_cast<std::size_t>(model.mlp.params().size()));
  for (Index i = 0; i < model.mlp.params().size(); ++i) params.push_back(hex_double(model.mlp.params()[i]));
  j["parameters"] = params;
  return j.dump(1);
}

FlowModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
  try {
    require(j.at("format") == "ctot-mlp-v1", "checkpoint: unknown format");
    require(j.at("activation") == "selu", "checkpoint: unsupported activation");
    FlowModel m;
    const Index d = j.at("dims").get<Index>();
    m.mlp = Mlp(d);
    require(j.at("layer_sizes").get<std::vector<Index>>() == m.mlp.layer_sizes(), "checkpoint: layer sizes do not match");
    const auto params = j.at("parameters").get<std::vector<std::string>>();
    require(static_cast<Index>(params.size()) == Mlp::parameter_count(d), "checkpoint: wrong parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) m.mlp.params()[static_cast<Index>(i)] = parse_hex_double(params[i]);
    m.mode = parse_training_mode(j.at("mode").get<std::string>());
    const auto span = j.at("time_span").get<std::vector<double>>();
    require(span.size() == 2, "checkpoint: time_span needs two values");
    m.t_start = span[0];
    m.t_end = span[1];
    const auto& t = j.at("training");
    TrainingConfig& c = m.config;
    c.iterations = t.at("iterations").get<std::int64_t>();
    c.batch_size = t.at("batch_size").get<Index>();
    c.learning_rate = t.at("learning_rate").get<double>();
    c.grad_clip_norm = t.at("grad_clip_norm").get<double>();
    c.beta1 = t.at("beta1").get<double>();
    c.beta2 = t.at("beta2").get<double>();
    c.adam_eps = t.at("adam_eps").get<double>();
    c.delta_t = t.at("delta_t").get<double>();
    c.gamma = t.at("gamma").get<double>();
    c.sigma_sde = t.at("sigma_sde").get<double>();
    c.pairing = parse_pairing(t.at("pairing").get<std::string>());
    c.rng_seed = j.at("seed").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace ctot
