#include "run_config.hpp"

#include "ctot/io.hpp"

#include <filesystem>
#include <set>

namespace ctot::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads keys of one JSON object and rejects whatever it did not read.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError("config: '" + where_ + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: '" + path(key) + "' has the wrong type");
    }
  }

  template <typename T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  const json* sub(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) throw ValidationError("config: unknown key '" + path(key) + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

std::vector<Interval> intervals_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("config: dataset.intervals must be a list of [start, end] pairs");
  std::vector<Interval> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw ValidationError("config: dataset.intervals must be a list of [start, end] pairs");
    out.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  return out;
}

std::string solver_name(SolverKind k) { return k == SolverKind::Exact ? "exact" : "entropic"; }

SolverKind parse_solver(const std::string& s) {
  if (s == "exact") return SolverKind::Exact;
  if (s == "entropic") return SolverKind::Entropic;
  throw ValidationError("config: unknown solver '" + s + "' (exact|entropic)");
}

}  // namespace

ordered_json density_to_json(const TimeDensity& d) {
  switch (d.kind()) {
    case TimeDensity::Kind::Uniform:
      return {{"kind", "uniform"}};
    case TimeDensity::Kind::Triangular:
      return {{"kind", "triangular"}, {"a", d.a()}, {"b", d.b()}};
    case TimeDensity::Kind::GaussianMixture: {
      ordered_json comps = ordered_json::array();
      for (const auto& c : d.components()) comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"sd", c.sd}});
      return {{"kind", "gaussian_mixture"}, {"components", comps}};
    }
  }
  return {{"kind", "uniform"}};
}

TimeDensity density_from_json(const json& j) {
  Section s(j, "time_density");
  std::string kind = "uniform";
  s.get("kind", kind);
  TimeDensity out;
  if (kind == "uniform") {
  } else if (kind == "triangular") {
    double a = 5.0, b = 1.0;
    s.get("a", a);
    s.get("b", b);
    out = TimeDensity::triangular(a, b);
  } else if (kind == "gaussian_mixture") {
    std::vector<TimeDensity::Component> comps;
    if (const json* c = s.sub("components")) {
      if (!c->is_array()) throw ValidationError("config: time_density.components must be a list");
      for (const auto& e : *c) {
        Section cs(e, "time_density.components[]");
        TimeDensity::Component comp;
        cs.get("weight", comp.weight);
        cs.get("mean", comp.mean);
        cs.get("sd", comp.sd);
        cs.finish();
        comps.push_back(comp);
      }
    }
    out = TimeDensity::gaussian_mixture(comps);
  } else {
    throw ValidationError("config: unknown time_density kind '" + kind + "'");
  }
  s.finish();
  return out;
}

void SimulationConfig::validate() const {
  require(mode == "ode" || mode == "sde", "simulation: mode must be ode or sde");
  require(sigma >= 0.0 && std::isfinite(sigma), "simulation: sigma must be >= 0");
  require(steps >= 1, "simulation: steps must be >= 1");
  require(n_trajectories >= 1, "simulation: n_trajectories must be >= 1");
}

void BenchConfig::validate() const {
  require(!n_values.empty() && !k_values.empty(), "bench: N and K lists must be non-empty");
  for (Index n : n_values) require(n >= 2, "bench: N must be >= 2");
  for (Index k : k_values) require(k >= 1, "bench: K must be >= 1");
  for (const auto& v : variants)
    require(v == "exact" || v == "entropic" || v == "screening" || v == "minibatch",
            "bench: unknown variant '" + v + "'");
  require(screening_c >= 1.0, "bench: screening_c must be >= 1");
  require(minibatch_m >= 1, "bench: minibatch_m must be >= 1");
  require(timeout_seconds > 0.0, "bench: timeout must be > 0");
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);

  if (const json* d = root.sub("dataset")) {
    Section s(*d, "dataset");
    std::string kind = "spiral";
    s.get("kind", kind);
    c.dataset = DatasetSpec::defaults(parse_dataset_kind(kind));
    s.get("n_per_interval", c.dataset.n_per_interval);
    if (const json* iv = s.sub("intervals")) c.dataset.intervals = intervals_from_json(*iv);
    s.get("time_noise_sigma", c.dataset.time_noise_sigma);
    s.get("feature_noise_sigma", c.dataset.feature_noise_sigma);
    if (const json* td = s.sub("time_density")) c.dataset.p_t = density_from_json(*td);
    s.get("truth_steps", c.dataset.truth_steps);
    s.get("truth_samples", c.dataset.truth_samples);
    s.finish();
  }

  if (const json* in = root.sub("inputs")) {
    Section s(*in, "inputs");
    s.get("snapshots", c.inputs.snapshots);
    s.get("labels", c.inputs.labels);
    s.get("model", c.inputs.model);
    s.get("truth_dir", c.inputs.truth_dir);
    s.get("trajectories", c.inputs.trajectories);
    s.get("true_times", c.inputs.true_times);
    s.finish();
  }

  if (const json* inf = root.sub("inference")) {
    Section s(*inf, "inference");
    s.get("K", c.inference.K);
    std::string solver = "exact";
    s.get("solver", solver);
    c.inference.solver.kind = parse_solver(solver);
    s.get("epsilon", c.inference.solver.entropic.epsilon);
    s.get("sinkhorn_tolerance", c.inference.solver.entropic.tolerance);
    s.get("sinkhorn_max_iterations", c.inference.solver.entropic.max_iterations);
    s.get_optional("screening_c", c.inference.screening_c);
    s.get_optional("minibatch_m", c.inference.minibatch_m);
    if (const json* td = s.sub("time_density")) c.label_density = density_from_json(*td);
    s.finish();
  }

  if (const json* sm = root.sub("smoothing")) {
    Section s(*sm, "smoothing");
    s.get("gamma", c.training.gamma);
    s.finish();
  }

  if (const json* tr = root.sub("training")) {
    Section s(*tr, "training");
    TrainingConfig& t = c.training;
    s.get("iterations", t.iterations);
    s.get("batch_size", t.batch_size);
    s.get("learning_rate", t.learning_rate);
    s.get("grad_clip_norm", t.grad_clip_norm);
    s.get("beta1", t.beta1);
    s.get("beta2", t.beta2);
    s.get("adam_eps", t.adam_eps);
    s.get("delta_t", t.delta_t);
    std::string pairing = to_string(t.pairing);
    s.get("pairing", pairing);
    t.pairing = parse_pairing(pairing);
    std::string ablation = to_string(c.ablation);
    s.get("ablation", ablation);
    c.ablation = parse_training_mode(ablation);
    s.finish();
  }

  if (const json* sim = root.sub("simulation")) {
    Section s(*sim, "simulation");
    s.get("mode", c.simulation.mode);
    s.get("sigma", c.simulation.sigma);
    s.get("steps", c.simulation.steps);
    s.get("n_trajectories", c.simulation.n_trajectories);
    s.finish();
  }

  if (const json* m = root.sub("metrics")) {
    Section s(*m, "metrics");
    s.get("dtw", c.metrics.dtw);
    s.get("wasserstein", c.metrics.wasserstein);
    s.get("spearman", c.metrics.spearman);
    s.finish();
  }

  if (const json* b = root.sub("bench")) {
    Section s(*b, "bench");
    s.get("N", c.bench.n_values);
    s.get("K", c.bench.k_values);
    s.get("variants", c.bench.variants);
    s.get("screening_c", c.bench.screening_c);
    s.get("minibatch_m", c.bench.minibatch_m);
    s.get("timeout_seconds", c.bench.timeout_seconds);
    s.finish();
  }

  if (const json* a = root.sub("ablate")) {
    Section s(*a, "ablate");
    s.get("seeds", c.ablate.seeds);
    s.get("variants", c.ablate.variants);
    s.finish();
  }

  root.finish();
  c.propagate_seed();
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  const std::string text = io::read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path + ": " + e.what());
  }
  return from_json(j);
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  ordered_json iv = ordered_json::array();
  for (const auto& i : dataset.resolved_intervals()) iv.push_back({i.start, i.end});
  j["dataset"] = {{"kind", to_string(dataset.kind)},
                  {"n_per_interval", dataset.n_per_interval},
                  {"intervals", iv},
                  {"time_noise_sigma", dataset.time_noise_sigma},
                  {"feature_noise_sigma", dataset.feature_noise_sigma},
                  {"time_density", density_to_json(dataset.p_t)},
                  {"truth_steps", dataset.truth_steps},
                  {"truth_samples", dataset.truth_samples}};
  j["inputs"] = {{"snapshots", inputs.snapshots}, {"labels", inputs.labels},
                 {"model", inputs.model},         {"truth_dir", inputs.truth_dir},
                 {"trajectories", inputs.trajectories}, {"true_times", inputs.true_times}};
  ordered_json inf = {{"K", inference.K},
                      {"solver", solver_name(inference.solver.kind)},
                      {"epsilon", inference.solver.entropic.epsilon},
                      {"sinkhorn_tolerance", inference.solver.entropic.tolerance},
                      {"sinkhorn_max_iterations", inference.solver.entropic.max_iterations}};
  inf["screening_c"] = inference.screening_c ? ordered_json(*inference.screening_c) : ordered_json(nullptr);
  inf["minibatch_m"] = inference.minibatch_m ? ordered_json(*inference.minibatch_m) : ordered_json(nullptr);
  inf["time_density"] = density_to_json(label_density);
  j["inference"] = inf;
  j["smoothing"] = {{"gamma", training.gamma}};
  j["training"] = {{"iterations", training.iterations},
                   {"batch_size", training.batch_size},
                   {"learning_rate", training.learning_rate},
                   {"grad_clip_norm", training.grad_clip_norm},
                   {"beta1", training.beta1},
                   {"beta2", training.beta2},
                   {"adam_eps", training.adam_eps},
                   {"delta_t", training.delta_t},
                   {"pairing", to_string(training.pairing)},
                   {"ablation", to_string(ablation)}};
  j["simulation"] = {{"mode", simulation.mode},
                     {"sigma", simulation.sigma},
                     {"steps", simulation.steps},
                     {"n_trajectories", simulation.n_trajectories}};
  j["metrics"] = {{"dtw", metrics.dtw}, {"wasserstein", metrics.wasserstein}, {"spearman", metrics.spearman}};
  j["bench"] = {{"N", bench.n_values},
                {"K", bench.k_values},
                {"variants", bench.variants},
                {"screening_c", bench.screening_c},
                {"minibatch_m", bench.minibatch_m},
                {"timeout_seconds", bench.timeout_seconds}};
  j["ablate"] = {{"seeds", ablate.seeds}, {"variants", ablate.variants}};
  return j;
}

void RunConfig::propagate_seed() {
  dataset.rng_seed = seed;
  inference.rng_seed = seed;
  training.rng_seed = seed;
  training.sigma_sde = simulation.sigma;
}

void RunConfig::validate() const {
  dataset.validate();
  inference.validate();
  training.validate();
  simulation.validate();
  bench.validate();
  require(ablate.seeds >= 1, "ablate: seeds must be >= 1");
  for (const auto& v : ablate.variants) parse_training_mode(v);
}

std::string RunConfig::out_path(const std::string& name) const {
  return (std::filesystem::path(output_dir) / name).string();
}

}  // namespace ctot::cli
