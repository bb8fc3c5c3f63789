#include "commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>

using namespace ctot;
using namespace ctot::cli;

namespace {

// Values given on the command line; each one overrides the matching config key.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  std::optional<std::string> kind;
  std::optional<Index> n;
  std::optional<double> time_noise;
  std::optional<double> feature_noise;

  std::optional<std::string> snapshots, labels, model, truth_dir, true_times;
  std::vector<std::string> trajectories;

  std::optional<Index> K;
  std::optional<std::string> solver;
  std::optional<double> epsilon;
  std::optional<double> screening_c;
  std::optional<Index> minibatch_m;

  std::optional<std::string> ablation;
  std::optional<std::int64_t> iterations;
  std::optional<Index> batch_size;
  std::optional<double> lr;
  std::optional<double> gamma;
  std::optional<double> delta_t;
  std::optional<std::string> pairing;

  std::optional<std::string> mode;
  std::optional<double> sigma;
  std::optional<Index> steps;
  std::optional<Index> n_trajectories;

  std::vector<Index> bench_n, bench_k;
  std::vector<std::string> bench_variants, ablate_variants;
  std::optional<double> timeout;
  std::optional<Index> seeds;
};

template <typename T, typename U>
void apply(const std::optional<T>& v, U& target) {
  if (v) target = *v;
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::from_file(o.config);
  apply(o.seed, c.seed);
  apply(o.out, c.output_dir);
  if (o.kind) {
    const DatasetSpec old = c.dataset;
    c.dataset = DatasetSpec::defaults(parse_dataset_kind(*o.kind));
    c.dataset.n_per_interval = old.n_per_interval;
    c.dataset.truth_steps = old.truth_steps;
    c.dataset.truth_samples = old.truth_samples;
  }
  apply(o.n, c.dataset.n_per_interval);
  apply(o.time_noise, c.dataset.time_noise_sigma);
  apply(o.feature_noise, c.dataset.feature_noise_sigma);

  apply(o.snapshots, c.inputs.snapshots);
  apply(o.labels, c.inputs.labels);
  apply(o.model, c.inputs.model);
  apply(o.truth_dir, c.inputs.truth_dir);
  apply(o.true_times, c.inputs.true_times);
  if (!o.trajectories.empty()) c.inputs.trajectories = o.trajectories;

  apply(o.K, c.inference.K);
  if (o.solver) {
    if (*o.solver != "exact" && *o.solver != "entropic") throw ValidationError("--solver must be exact or entropic");
    c.inference.solver.kind = *o.solver == "exact" ? SolverKind::Exact : SolverKind::Entropic;
  }
  apply(o.epsilon, c.inference.solver.entropic.epsilon);
  if (o.screening_c) c.inference.screening_c = c.bench.screening_c = *o.screening_c;
  if (o.minibatch_m) c.inference.minibatch_m = c.bench.minibatch_m = *o.minibatch_m;

  if (o.ablation) c.ablation = parse_training_mode(*o.ablation);
  apply(o.iterations, c.training.iterations);
  apply(o.batch_size, c.training.batch_size);
  apply(o.lr, c.training.learning_rate);
  apply(o.gamma, c.training.gamma);
  apply(o.delta_t, c.training.delta_t);
  if (o.pairing) c.training.pairing = parse_pairing(*o.pairing);

  apply(o.mode, c.simulation.mode);
  apply(o.sigma, c.simulation.sigma);
  apply(o.steps, c.simulation.steps);
  apply(o.n_trajectories, c.simulation.n_trajectories);

  if (!o.bench_n.empty()) c.bench.n_values = o.bench_n;
  if (!o.bench_k.empty()) c.bench.k_values = o.bench_k;
  if (!o.bench_variants.empty()) c.bench.variants = o.bench_variants;
  apply(o.timeout, c.bench.timeout_seconds);
  apply(o.seeds, c.ablate.seeds);
  if (!o.ablate_variants.empty()) c.ablate.variants = o.ablate_variants;

  c.propagate_seed();
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous-time flows from time-aggregated snapshots"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "RunConfig JSON file");
  app.add_option("--seed", o.seed, "Seed for every random stage");
  app.add_option("--out", o.out, "Output directory");

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (snapshots, truth, true times)");
  gen->add_option("--kind", o.kind, "spiral | y_shaped | arch | line1d");
  gen->add_option("--n", o.n, "Points per interval");
  gen->add_option("--time-noise", o.time_noise, "Std of the Gaussian time noise");
  gen->add_option("--feature-noise", o.feature_noise, "Std of the Gaussian feature noise");

  auto* inf = app.add_subcommand("infer", "Step 1: time labels for every point");
  inf->add_option("--snapshots", o.snapshots);
  inf->add_option("--K", o.K, "Subdivision factor");
  inf->add_option("--solver", o.solver, "exact | entropic");
  inf->add_option("--epsilon", o.epsilon, "Entropic regularisation");
  inf->add_option("--screening-c", o.screening_c, "Keep ceil(c * ceil(N/K)) boundary candidates per side");
  inf->add_option("--minibatch-m", o.minibatch_m, "Mini-batch size m");
  inf->add_option("--true-times", o.true_times);

  auto* tr = app.add_subcommand("train", "Steps 2-3: fit the velocity field");
  tr->add_option("--snapshots", o.snapshots);
  tr->add_option("--labels", o.labels);
  tr->add_option("--ablation", o.ablation, "none | no-step2 | no-step12");
  tr->add_option("--iterations", o.iterations);
  tr->add_option("--batch-size", o.batch_size);
  tr->add_option("--lr", o.lr);
  tr->add_option("--gamma", o.gamma, "Kernel bandwidth");
  tr->add_option("--delta-t", o.delta_t);
  tr->add_option("--pairing", o.pairing, "minibatch-ot | independent");

  auto* sim = app.add_subcommand("simulate", "Integrate trajectories from a checkpoint");
  sim->add_option("--model", o.model);
  sim->add_option("--truth-dir", o.truth_dir);
  sim->add_option("--snapshots", o.snapshots);
  sim->add_option("--labels", o.labels);
  sim->add_option("--mode", o.mode, "ode | sde");
  sim->add_option("--sigma", o.sigma);
  sim->add_option("--steps", o.steps);
  sim->add_option("--n-trajectories", o.n_trajectories);

  auto* ev = app.add_subcommand("eval", "L_DTW, L_Wass and label Spearman; several trajectory files give mean and std");
  ev->add_option("--truth-dir", o.truth_dir);
  ev->add_option("--trajectories", o.trajectories);
  ev->add_option("--snapshots", o.snapshots);
  ev->add_option("--labels", o.labels);
  ev->add_option("--true-times", o.true_times);

  auto* bench = app.add_subcommand("bench", "Time Step 1 over N, K and solver variants");
  bench->add_option("--N", o.bench_n, "Points per snapshot");
  bench->add_option("--K", o.bench_k);
  bench->add_option("--variants", o.bench_variants, "exact entropic screening minibatch");
  bench->add_option("--screening-c", o.screening_c);
  bench->add_option("--minibatch-m", o.minibatch_m);
  bench->add_option("--timeout", o.timeout, "Seconds per case");

  auto* abl = app.add_subcommand("ablate", "Full model against both baselines over several seeds");
  abl->add_option("--kind", o.kind);
  abl->add_option("--n", o.n);
  abl->add_option("--seeds", o.seeds);
  abl->add_option("--iterations", o.iterations);
  abl->add_option("--variants", o.ablate_variants, "none no-step2 no-step12");

  for (auto* sub : {gen, inf, tr, sim, ev, bench, abl}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig config = resolve(o);
    if (gen->parsed()) return cmd_generate(config);
    if (inf->parsed()) return cmd_infer(config);
    if (tr->parsed()) return cmd_train(config);
    if (sim->parsed()) return cmd_simulate(config);
    if (ev->parsed()) return cmd_eval(config);
    if (bench->parsed()) return cmd_bench(config);
    if (abl->parsed()) return cmd_ablate(config);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 4;
  } catch (const ResourceLimit& e) {
    std::fprintf(stderr, "resource limit: %s\n", e.what());
    return 4;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
