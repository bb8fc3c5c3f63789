#include "commands.hpp"

#include "ctot/metrics.hpp"
#include "ctot/smoothing.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>

namespace ctot::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

__attribute__((format(printf, 1, 2))) void log(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fputc('\n', stderr);
}

std::string or_default(const std::string& given, const std::string& fallback) {
  return given.empty() ? fallback : given;
}

std::string snapshots_path(const RunConfig& c) { return or_default(c.inputs.snapshots, c.out_path("snapshots.csv")); }
std::string labels_path(const RunConfig& c) { return or_default(c.inputs.labels, c.out_path("labels.csv")); }
std::string model_path(const RunConfig& c) { return or_default(c.inputs.model, c.out_path("model.json")); }
std::string truth_dir(const RunConfig& c) { return or_default(c.inputs.truth_dir, c.output_dir); }
std::string true_times_path(const RunConfig& c) { return or_default(c.inputs.true_times, c.out_path("true_times.csv")); }

bool exists(const std::string& path) { return fs::exists(path); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ordered_json intervals_json(const std::vector<Interval>& iv) {
  ordered_json out = ordered_json::array();
  for (const auto& i : iv) out.push_back({i.start, i.end});
  return out;
}

LabeledDataset dataset_for(const RunConfig& config, TrainingMode mode) {
  const auto snapshots = io::read_snapshots(snapshots_path(config));
  Index total = 0;
  for (const auto& s : snapshots) total += s.size();
  if (mode == TrainingMode::Coarse) return make_dataset(snapshots, Eigen::VectorXd::Zero(total));
  const std::string labels = labels_path(config);
  if (!exists(labels))
    throw UsageError("train: labels file " + labels + " not found; run infer first or use --ablation no-step12");
  return make_dataset(snapshots, io::read_labels(labels, snapshots));
}

FlowModel train_mode(const LabeledDataset& ds, const TrainingConfig& config, TrainingMode mode) {
  return mode == TrainingMode::Full ? train(ds, config) : train_baseline(ds, config, mode);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

io::Metadata artifact_metadata(const RunConfig& config, const std::string& command) {
  io::Metadata m;
  m["command"] = command;
  m["seed"] = config.seed;
  m["config"] = config.to_json();
  return m;
}

PointSet initial_points(const PointSet& pool, Index n, Rng& rng) {
  require(pool.rows() > 0, "simulate: no initial points available");
  if (n <= pool.rows()) return pool.topRows(n);
  std::uniform_int_distribution<Index> pick(0, pool.rows() - 1);
  PointSet out(n, pool.cols());
  for (Index i = 0; i < n; ++i) out.row(i) = pool.row(pick(rng));
  return out;
}

std::vector<Trajectory> simulate_model(const FlowModel& model, const PointSet& initial, const SimulationConfig& sim,
                                       std::uint64_t seed) {
  sim.validate();
  if (initial.cols() != model.mlp.dim())
    throw ValidationError("simulate: model dimension " + std::to_string(model.mlp.dim()) +
                          " differs from the data dimension " + std::to_string(initial.cols()));
  if (sim.mode == "ode") return simulate_ode(model.mlp, initial, model.t_start, model.t_end, sim.steps);
  Rng rng = Rng(seed).split(2);
  return simulate_sde(model.mlp, initial, model.t_start, model.t_end, sim.steps, sim.sigma, rng);
}

Metrics evaluate(const GroundTruth* truth, const std::vector<Trajectory>* sims, const Eigen::VectorXd* labels,
                 const Eigen::VectorXd* true_times, const MetricToggles& toggles) {
  Metrics m;
  if (truth && sims) {
    if (toggles.dtw) m.l_dtw = l_dtw(*truth, *sims);
    if (toggles.wasserstein) {
      const auto report = l_wass_report(*truth, *sims);
      m.l_wass = report.mean;
      m.w1_per_time = report.per_time;
    }
  }
  if (toggles.spearman && labels && true_times) {
    require(labels->size() == true_times->size(), "eval: label and true-time counts differ");
    m.spearman = spearman(*labels, *true_times);
  }
  return m;
}

ordered_json metrics_to_json(const Metrics& m) {
  ordered_json j;
  if (m.l_dtw) j["l_dtw"] = *m.l_dtw;
  if (m.l_wass) j["l_wass"] = *m.l_wass;
  if (m.spearman) j["spearman"] = *m.spearman;
  for (std::size_t t = 0; t < m.w1_per_time.size(); ++t) {
    char key[32];
    std::snprintf(key, sizeof key, "w1_t%03zu", t + 1);
    j[key] = m.w1_per_time[t];
  }
  return j;
}

ordered_json aggregate_metrics(const std::vector<Metrics>& runs) {
  ordered_json j;
  j["runs"] = runs.size();
  const auto add = [&](const char* name, std::optional<double> Metrics::*field) {
    std::vector<double> v;
    for (const auto& r : runs)
      if (r.*field) v.push_back(*(r.*field));
    if (v.size() != runs.size() || v.empty()) return;
    j[std::string(name) + "_mean"] = mean(v);
    j[std::string(name) + "_std"] = sample_std(v);
  };
  add("l_dtw", &Metrics::l_dtw);
  add("l_wass", &Metrics::l_wass);
  add("spearman", &Metrics::spearman);
  return j;
}

int cmd_generate(const RunConfig& config) {
  io::ensure_directory(config.output_dir);
  const GeneratedDataset g = generate(config.dataset);
  io::Metadata meta = artifact_metadata(config, "generate");
  meta["intervals"] = intervals_json(config.dataset.resolved_intervals());
  io::write_snapshots(config.out_path("snapshots.csv"), g.snapshots, meta);
  io::write_truth(config.output_dir, g.truth, meta);
  io::write_true_times(config.out_path("true_times.csv"), g, meta);
  std::printf("%s: %zu intervals x %lld points, dimension %lld, truth %lld steps on [%g, %g]\n",
              to_string(config.dataset.kind).c_str(), g.snapshots.size(),
              static_cast<long long>(config.dataset.n_per_interval), static_cast<long long>(g.snapshots[0].dim()),
              static_cast<long long>(g.truth.steps()), g.truth.t_start, g.truth.t_end);
  for (std::size_t j = 0; j < g.snapshots.size(); ++j)
    std::printf("  interval %zu [%g, %g]: %lld points\n", j, g.snapshots[j].interval.start,
                g.snapshots[j].interval.end, static_cast<long long>(g.snapshots[j].size()));
  std::printf("wrote %s\n", config.output_dir.c_str());
  return 0;
}

int cmd_infer(const RunConfig& config) {
  const auto snapshots = io::read_snapshots(snapshots_path(config));
  io::ensure_directory(config.output_dir);
  std::vector<double> seconds;
  const auto start = std::chrono::steady_clock::now();
  const LabeledDataset ds = infer_labels_dataset(snapshots, config.inference, config.label_density, &seconds);
  for (std::size_t j = 0; j < seconds.size(); ++j)
    log("pair %zu ([%g, %g] | [%g, %g]): %.3f s", j, snapshots[j].interval.start, snapshots[j].interval.end,
        snapshots[j + 1].interval.start, snapshots[j + 1].interval.end, seconds[j]);
  if (ds.midpoint_fallback) log("single snapshot: every label is the interval midpoint");
  io::write_labels(config.out_path("labels.csv"), ds, artifact_metadata(config, "infer"));
  std::printf("labelled %lld points (K=%lld) in %.3f s\n", static_cast<long long>(ds.size()),
              static_cast<long long>(config.inference.K), seconds_since(start));
  const std::string tt = true_times_path(config);
  if (exists(tt)) {
    const Eigen::VectorXd truth = io::read_true_times(tt);
    if (truth.size() == ds.size()) std::printf("spearman vs true times: %.6f\n", spearman(ds.labels, truth));
  }
  return 0;
}

int cmd_train(const RunConfig& config) {
  const LabeledDataset ds = dataset_for(config, config.ablation);
  io::ensure_directory(config.output_dir);
  const auto start = std::chrono::steady_clock::now();
  const FlowModel model = train_mode(ds, config.training, config.ablation);
  auto j = ordered_json::parse(model_to_json(model));
  j["run_config"] = config.to_json();
  io::write_text(config.out_path("model.json"), j.dump(1) + "\n");
  io::write_loss_curve(config.out_path("loss.csv"), model.loss_curve, artifact_metadata(config, "train"));
  std::printf("trained %s model for %lld iterations in %.1f s; final loss %.6g; span [%g, %g]\n",
              to_string(config.ablation).c_str(), static_cast<long long>(config.training.iterations),
              seconds_since(start), model.loss_curve.back(), model.t_start, model.t_end);
  return 0;
}

int cmd_simulate(const RunConfig& config) {
  const FlowModel model = model_from_json(io::read_text(model_path(config)));
  Rng rng = Rng(config.seed).split(1);
  PointSet initial;
  const std::string tdir = truth_dir(config);
  if (io::truth_present(tdir)) {
    const GroundTruth truth = io::read_truth(tdir);
    initial = initial_points(truth.distributions.front(), config.simulation.n_trajectories, rng);
    log("initial points from the truth sample at t=%g", truth.t_start);
  } else {
    if (!exists(snapshots_path(config)) || !exists(labels_path(config)))
      throw UsageError("simulate: need truth files in " + tdir + " or snapshots and labels to draw initial points");
    const auto snapshots = io::read_snapshots(snapshots_path(config));
    const LabeledDataset ds = make_dataset(snapshots, io::read_labels(labels_path(config), snapshots));
    const SmoothedSampler sampler(ds, SmoothingConfig{model.config.gamma});
    initial = sampler.sample(sampler.min_label(), config.simulation.n_trajectories, rng);
    log("initial points from the smoothed distribution at t=%g", sampler.min_label());
  }
  const auto sims = simulate_model(model, initial, config.simulation, config.seed);
  io::Metadata meta = artifact_metadata(config, "simulate");
  meta["model_mode"] = to_string(model.mode);
  io::write_trajectories(config.out_path("trajectories.csv"), sims, meta);
  std::printf("simulated %zu trajectories (%s, %lld steps) over [%g, %g]\n", sims.size(),
              config.simulation.mode.c_str(), static_cast<long long>(config.simulation.steps), model.t_start,
              model.t_end);
  return 0;
}

int cmd_eval(const RunConfig& config) {
  const std::string tdir = truth_dir(config);
  const std::vector<std::string> traj_files =
      config.inputs.trajectories.empty() ? std::vector<std::string>{config.out_path("trajectories.csv")}
                                         : config.inputs.trajectories;

  std::optional<Eigen::VectorXd> labels, true_times;
  if (exists(true_times_path(config)) && exists(labels_path(config)) && exists(snapshots_path(config))) {
    const auto snapshots = io::read_snapshots(snapshots_path(config));
    labels = io::read_labels(labels_path(config), snapshots);
    true_times = io::read_true_times(true_times_path(config));
  }
  if (!io::truth_present(tdir)) {
    std::string computable = labels ? "spearman (labels and true times found)" : "nothing";
    throw UsageError("eval: truth_trajectories.csv / truth_distributions.csv not found in " + tdir +
                     "; L_DTW and L_Wass need them. Computable without them: " + computable);
  }
  const GroundTruth truth = io::read_truth(tdir);

  std::vector<Metrics> runs;
  for (const auto& f : traj_files) {
    const auto sims = io::read_trajectories(f);
    runs.push_back(evaluate(&truth, &sims, labels ? &*labels : nullptr, true_times ? &*true_times : nullptr,
                            config.metrics));
  }
  ordered_json out;
  if (runs.size() == 1) {
    out = metrics_to_json(runs.front());
  } else {
    out = aggregate_metrics(runs);
    ordered_json per = ordered_json::array();
    for (std::size_t r = 0; r < runs.size(); ++r) {
      ordered_json one = metrics_to_json(runs[r]);
      one["trajectories"] = traj_files[r];
      per.push_back(one);
    }
    out["per_run"] = per;
  }
  out["seed"] = config.seed;
  out["config"] = config.to_json();
  io::ensure_directory(config.output_dir);
  io::write_text(config.out_path("metrics.json"), out.dump(1) + "\n");
  for (const auto& key : {"l_dtw", "l_wass", "spearman", "l_dtw_mean", "l_dtw_std", "l_wass_mean", "l_wass_std"})
    if (out.contains(key)) std::printf("%s = %.6g\n", key, out[key].get<double>());
  return 0;
}

namespace {

struct CaseResult {
  std::string status = "ok";
  double seconds = 0.0;
  Eigen::VectorXd labels;
};

bool write_all(int fd, const void* data, std::size_t n) {
  const char* p = static_cast<const char*>(data);
  while (n > 0) {
    const ssize_t w = ::write(fd, p, n);
    if (w <= 0) return false;
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

// Runs `work` in a child process; the child reports status, seconds and labels through a pipe.
CaseResult run_isolated(const std::function<Eigen::VectorXd()>& work, double timeout_seconds) {
  int fds[2];
  if (::pipe(fds) != 0) throw IoError("bench: pipe failed");
  std::fflush(nullptr);
  const pid_t pid = ::fork();
  if (pid < 0) throw IoError("bench: fork failed");
  if (pid == 0) {
    ::close(fds[0]);
    char code = 'K';
    double secs = 0.0;
    Eigen::VectorXd labels;
    try {
      const auto start = std::chrono::steady_clock::now();
      labels = work();
      secs = seconds_since(start);
    } catch (const ResourceLimit&) {
      code = 'O';
    } catch (const std::bad_alloc&) {
      code = 'O';
    } catch (...) {
      code = 'E';
    }
    const std::int64_t n = labels.size();
    const bool ok = write_all(fds[1], &code, 1) && write_all(fds[1], &secs, sizeof secs) &&
                    write_all(fds[1], &n, sizeof n) &&
                    write_all(fds[1], labels.data(), static_cast<std::size_t>(n) * sizeof(double));
    ::close(fds[1]);
    ::_exit(ok ? 0 : 1);
  }
  ::close(fds[1]);
  std::string buffer;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  bool timed_out = false;
  for (;;) {
    const double left = std::chrono::duration<double>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0.0) {
      timed_out = true;
      break;
    }
    pollfd p{fds[0], POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(std::min(left * 1000.0, 60000.0)) + 1);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) continue;
    char chunk[65536];
    const ssize_t got = ::read(fds[0], chunk, sizeof chunk);
    if (got <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(got));
  }
  ::close(fds[0]);
  CaseResult out;
  if (timed_out) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);
    out.status = "timeout";
    out.seconds = timeout_seconds;
    return out;
  }
  int wstatus = 0;
  ::waitpid(pid, &wstatus, 0);
  const std::size_t head = 1 + sizeof(double) + sizeof(std::int64_t);
  if (buffer.size() < head) {
    // Killed without reporting: the usual cause is the kernel OOM killer.
    out.status = WIFSIGNALED(wstatus) ? "OOM" : "error";
    return out;
  }
  const char code = buffer[0];
  std::memcpy(&out.seconds, buffer.data() + 1, sizeof(double));
  std::int64_t n = 0;
  std::memcpy(&n, buffer.data() + 1 + sizeof(double), sizeof n);
  if (code == 'O') out.status = "OOM";
  if (code == 'E') out.status = "error";
  if (code != 'K') return out;
  if (buffer.size() != head + static_cast<std::size_t>(n) * sizeof(double)) {
    out.status = "error";
    return out;
  }
  out.labels.resize(n);
  std::memcpy(out.labels.data(), buffer.data() + head, static_cast<std::size_t>(n) * sizeof(double));
  return out;
}

}  // namespace

std::vector<BenchRow> run_bench(const RunConfig& config) {
  const BenchConfig& bench = config.bench;
  bench.validate();
  std::vector<std::string> variants = bench.variants;
  // The exact run is the reference for every other variant, so it goes first.
  std::stable_partition(variants.begin(), variants.end(), [](const std::string& v) { return v == "exact"; });
  std::vector<BenchRow> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Index n : bench.n_values) {
    DatasetSpec spec = DatasetSpec::defaults(DatasetKind::Spiral);
    spec.n_per_interval = n;
    spec.rng_seed = config.seed;
    const GeneratedDataset g = generate(spec);
    for (Index k : bench.k_values) {
      std::optional<Eigen::VectorXd> reference;
      for (const auto& variant : variants) {
        InferenceOptions options;
        options.K = k;
        options.rng_seed = config.seed;
        options.solver.entropic = config.inference.solver.entropic;
        if (variant == "entropic") options.solver.kind = SolverKind::Entropic;
        if (variant == "screening") options.screening_c = bench.screening_c;
        if (variant == "minibatch") options.minibatch_m = bench.minibatch_m;
        BenchRow row{n, k, variant, 0.0, nan, nan, "ok"};
        try {
          options.validate();
        } catch (const ValidationError& e) {
          row.status = "skipped";
          log("bench N=%lld K=%lld %s: %s", static_cast<long long>(n), static_cast<long long>(k), variant.c_str(),
              e.what());
          rows.push_back(row);
          continue;
        }
        const CaseResult r = run_isolated(
            [&] { return infer_labels_dataset(g.snapshots, options, config.label_density).labels; },
            bench.timeout_seconds);
        row.seconds = r.seconds;
        row.status = r.status;
        if (r.status == "ok") {
          row.spearman_vs_truth = spearman(r.labels, g.true_times);
          if (variant == "exact") reference = r.labels;
          if (reference) row.spearman_vs_full = spearman(r.labels, *reference);
        }
        log("bench N=%lld K=%lld %-9s %9.3f s  %s  spearman vs full %.4f, vs truth %.4f", static_cast<long long>(n),
            static_cast<long long>(k), variant.c_str(), row.seconds, row.status.c_str(), row.spearman_vs_full,
            row.spearman_vs_truth);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows, const io::Metadata& meta) {
  std::string text;
  for (const auto& [key, value] : meta.items()) text += "# " + key + "=" + value.dump() + "\n";
  text += "N,K,variant,seconds,spearman_vs_full,spearman_vs_truth,status\n";
  for (const auto& r : rows)
    text += std::to_string(r.n) + "," + std::to_string(r.k) + "," + r.variant + "," + io::format_number(r.seconds) +
            "," + io::format_number(r.spearman_vs_full) + "," + io::format_number(r.spearman_vs_truth) + "," +
            r.status + "\n";
  io::write_text(path, text);
}

int cmd_bench(const RunConfig& config) {
  io::ensure_directory(config.output_dir);
  const auto rows = run_bench(config);
  write_bench_csv(config.out_path("bench.csv"), rows, artifact_metadata(config, "bench"));
  std::printf("%-7s %-5s %-10s %10s %9s %9s  %s\n", "N", "K", "variant", "seconds", "vs_full", "vs_truth", "status");
  for (const auto& r : rows)
    std::printf("%-7lld %-5lld %-10s %10.3f %9.4f %9.4f  %s\n", static_cast<long long>(r.n),
                static_cast<long long>(r.k), r.variant.c_str(), r.seconds, r.spearman_vs_full, r.spearman_vs_truth,
                r.status.c_str());
  return 0;
}

PipelineRun run_pipeline(const RunConfig& config, const std::vector<std::string>& variants) {
  PipelineRun run;
  run.seed = config.seed;
  const GeneratedDataset g = generate(config.dataset);
  const LabeledDataset ds = infer_labels_dataset(g.snapshots, config.inference, config.label_density);
  run.spearman = spearman(ds.labels, g.true_times);
  for (const auto& name : variants) {
    const TrainingMode mode = parse_training_mode(name);
    const FlowModel model = train_mode(ds, config.training, mode);
    Rng rng = Rng(config.seed).split(1);
    const PointSet initial = initial_points(g.truth.distributions.front(), config.simulation.n_trajectories, rng);
    const auto sims = simulate_model(model, initial, config.simulation, config.seed);
    run.variants.emplace_back(name, evaluate(&g.truth, &sims, &ds.labels, &g.true_times, config.metrics));
  }
  return run;
}

int cmd_ablate(const RunConfig& config) {
  io::ensure_directory(config.output_dir);
  std::map<std::string, std::vector<Metrics>> by_variant;
  std::string csv = "seed,variant,l_dtw,l_wass,spearman\n";
  for (Index s = 0; s < config.ablate.seeds; ++s) {
    RunConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(s);
    c.propagate_seed();
    const auto start = std::chrono::steady_clock::now();
    const PipelineRun run = run_pipeline(c, config.ablate.variants);
    for (const auto& [name, m] : run.variants) {
      by_variant[name].push_back(m);
      csv += std::to_string(c.seed) + "," + name + "," + io::format_number(m.l_dtw.value_or(NAN)) + "," +
             io::format_number(m.l_wass.value_or(NAN)) + "," + io::format_number(run.spearman) + "\n";
      log("seed %llu %-9s L_DTW %.4f  L_Wass %.4f", static_cast<unsigned long long>(c.seed), name.c_str(),
          m.l_dtw.value_or(NAN), m.l_wass.value_or(NAN));
    }
    log("seed %llu done in %.1f s (label spearman %.4f)", static_cast<unsigned long long>(c.seed),
        seconds_since(start), run.spearman);
  }
  std::string header;
  for (const auto& [key, value] : artifact_metadata(config, "ablate").items())
    header += "# " + key + "=" + value.dump() + "\n";
  io::write_text(config.out_path("ablation.csv"), header + csv);

  ordered_json out;
  for (const auto& name : config.ablate.variants) {
    out[name] = aggregate_metrics(by_variant[name]);
    const auto& agg = out[name];
    std::printf("%-9s L_DTW %.4f +- %.4f   L_Wass %.4f +- %.4f\n", name.c_str(), agg.value("l_dtw_mean", NAN),
                agg.value("l_dtw_std", NAN), agg.value("l_wass_mean", NAN), agg.value("l_wass_std", NAN));
  }
  out["seed"] = config.seed;
  out["config"] = config.to_json();
  io::write_text(config.out_path("metrics.json"), out.dump(1) + "\n");
  return 0;
}

}  // namespace ctot::cli
