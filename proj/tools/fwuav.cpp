#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fwuav/errors.hpp"
#include "fwuav/io.hpp"

namespace fs = std::filesystem;
using namespace fwuav;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kNumeric = 2, kNoConvergence = 3 };

struct Common {
  std::string config_path;
  std::string preset;
  int jobs = 0;
};

ExperimentConfig load(const Common& c) {
  json j = c.config_path.empty() ? json::object() : read_json(c.config_path);
  if (!c.preset.empty()) j["preset"] = c.preset;
  ExperimentConfig cfg = config_from_json(j);
  if (c.jobs > 0) cfg.set_jobs(c.jobs);
  return cfg;
}

std::string stamp(const std::string& hash) {
  return std::string("# fwuav ") + kToolVersion + " config=" + hash + "\n";
}

const std::string& ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return path;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(ensure_parent(path));
  if (!f) throw DomainError("cannot write " + path);
  return f;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

Dynamics make_dynamics(const ExperimentConfig& cfg, const ReferenceOrbit& orbit) {
  if (orbit.morphology_hash != cfg.morphology.hash()) {
    throw DomainError("orbit was computed for a different morphology");
  }
  DynamicsOptions d;
  d.delta_max = cfg.expert.delta_max;
  return Dynamics(cfg.morphology, orbit.params, d);
}

void progress(const char* fmt, double a = 0, double b = 0, double c = 0) {
  std::fprintf(stderr, fmt, a, b, c);
  std::fflush(stderr);
}

int cmd_config(const Common& c, const std::string& out) {
  const ExperimentConfig cfg = load(c);
  json j = to_json(cfg);
  j["config_hash"] = config_hash(cfg);
  j["tool_version"] = kToolVersion;
  if (out.empty()) {
    std::cout << j.dump(1) << '\n';
  } else {
    write_json(ensure_parent(out), j);
  }
  return kOk;
}

int cmd_find_orbit(const Common& c, const std::string& out) {
  ExperimentConfig cfg = load(c);
  cfg.orbit.verbose = true;
  const std::string hash = config_hash(cfg);
  progress("searching for a periodic orbit\n");
  const ReferenceOrbit orbit =
      find_periodic_orbit(cfg.morphology, WingPair::symmetric(cfg.waveform), cfg.orbit);
  save_orbit(ensure_parent(out), orbit, hash);
  std::printf("orbit %s  f = %.6g Hz  defect %.3e  -> %s\n", orbit_hash(orbit).c_str(),
              orbit.frequency(), orbit.defect, out.c_str());
  return kOk;
}

int cmd_gen_data(const Common& c, const std::string& orbit_path, const std::string& out,
                 bool verbose) {
  ExperimentConfig cfg = load(c);
  const std::string hash = config_hash(cfg);
  const ReferenceOrbit orbit = load_orbit(orbit_path);
  const Dynamics dyn = make_dynamics(cfg, orbit);
  progress("building the expert sensitivity\n");
  const MpcExpert expert(dyn, orbit, cfg.weights(), cfg.expert);
  cfg.dataset.verbose = verbose;
  progress("solving %g expert problems\n", cfg.dataset.n_samples);
  GenerateReport rep;
  Dataset ds = generate_dataset(expert, cfg.dataset, &rep);
  ds.config_hash = hash;
  for (const auto& f : rep.failures) std::fprintf(stderr, "warning: %s\n", f.c_str());
  if (rep.requested > 0 && rep.solved == 0) throw NumericError("every expert solve failed");
  ds.save(ensure_parent(out));
  std::printf("dataset: %d pairs (%d zero, %d failed solves) -> %s\n", ds.size(), ds.n_zero(),
              static_cast<int>(rep.failures.size()), out.c_str());
  return kOk;
}

struct TrainArgs {
  std::string algo, orbit, data, out, metrics, timing;
  bool verbose = false;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  ExperimentConfig cfg = load(c);
  const std::string hash = config_hash(cfg);
  cfg.imitation.verbose = a.verbose;
  const Dataset ds = Dataset::load(a.data);
  ILResult res;
  const auto t0 = std::chrono::steady_clock::now();
  if (a.algo == "bc" || a.algo == "coil") {
    if (a.algo == "bc") {
      TrainResult tr;
      res.policy = behavior_cloning(ds, cfg.arch, cfg.imitation, &tr);
      res.data = ds;
      ILIteration row;
      row.dataset_size = ds.size();
      row.mse = mse(res.policy, ds.X, ds.Y);
      row.f0_norm = zero_output_norm(res.policy);
      row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res.log.push_back(row);
      res.wall_time = row.wall_time;
    } else {
      res = coil(ds, cfg.arch, cfg.imitation);
    }
  } else if (a.algo == "dagger" || a.algo == "dart") {
    if (a.orbit.empty()) throw DomainError(a.algo + " needs --orbit for its expert");
    const ReferenceOrbit orbit = load_orbit(a.orbit);
    if (!ds.orbit_hash.empty() && ds.orbit_hash != orbit_hash(orbit)) {
      throw DomainError("dataset was generated on a different orbit");
    }
    const Dynamics dyn = make_dynamics(cfg, orbit);
    const MpcExpert expert(dyn, orbit, cfg.weights(), cfg.expert);
    NetArch arch = cfg.arch;
    if (a.algo == "dagger") {
      arch.n_hidden = cfg.dagger_hidden;
      res = dagger(ds, arch, cfg.imitation, expert);
    } else {
      res = dart(ds, arch, cfg.imitation, expert);
    }
  } else {
    throw DomainError("unknown algorithm '" + a.algo + "'");
  }
  for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  PolicyFile pf;
  pf.policy = res.policy;
  pf.algorithm = a.algo;
  pf.seed = cfg.imitation.seed;
  pf.config_hash = hash;
  pf.u_layout = ds.u_layout;
  pf.mse = mse(res.policy, res.data.X, res.data.Y);
  pf.f0_norm = zero_output_norm(res.policy);
  pf.dataset_size = res.data.size();
  pf.expert_calls = res.expert_calls;
  save_policy(ensure_parent(a.out), pf);

  const std::string metrics = a.metrics.empty() ? sibling(a.out, ".metrics.csv") : a.metrics;
  const std::string timing = a.timing.empty() ? sibling(a.out, ".timing.csv") : a.timing;
  {
    auto f = open_out(metrics);
    f << stamp(hash);
    write_metrics_csv(f, res.log);
  }
  {
    auto f = open_out(timing);
    f << stamp(hash);
    write_timing_csv(f, res.log);
  }
  std::printf("%s: N = %d  mse %.4e  |f(0)| %.4e  expert calls %d  %.1f s -> %s\n", a.algo.c_str(),
              pf.dataset_size, pf.mse, pf.f0_norm, pf.expert_calls, res.wall_time, a.out.c_str());
  return kOk;
}

json metrics_json(const BoundednessMetrics& m) {
  json j = {{"bounded", m.bounded}, {"gamma", m.gamma}, {"t_T", m.t_T}};
  j["b"] = m.bounded ? json(m.b) : json(nullptr);
  return j;
}

struct EvalArgs {
  std::string orbit, policy, out_dir;
  double noise = -1.0;
  int n_traj = 0, horizon = 0;
};

int cmd_evaluate(const Common& c, const EvalArgs& a) {
  ExperimentConfig cfg = load(c);
  const std::string hash = config_hash(cfg);
  const ReferenceOrbit orbit = load_orbit(a.orbit);
  const PolicyFile pf = load_policy(a.policy);
  const Dynamics dyn = make_dynamics(cfg, orbit);
  SweepOptions so = cfg.sweep;
  if (a.n_traj > 0) so.n_traj = a.n_traj;
  if (a.horizon > 0) so.horizon = a.horizon;
  const bool noisy = a.noise >= 0.0;
  so.noise_sigma = noisy ? a.noise : 0.0;
  progress("sweeping %g trajectories over %g periods\n", so.n_traj, so.horizon);

  NoiseSweepResult nr;
  if (noisy) {
    nr = noise_sweep(pf.policy, dyn, orbit, cfg.weights().W_x, so, cfg.noise_skip);
  } else {
    nr.sweep = sweep(pf.policy, dyn, orbit, cfg.weights().W_x, so);
  }
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  {
    auto f = open_out((dir / "envelope.csv").string());
    f << stamp(hash);
    write_envelope_csv(f, nr.sweep);
  }
  if (noisy) {
    auto f = open_out((dir / "boxstats.csv").string());
    f << stamp(hash);
    write_boxstats_csv(f, nr.stats);
  }
  json s = {{"format", "fwuav-evaluation"},
            {"version", kFileFormatVersion},
            {"tool_version", kToolVersion},
            {"config_hash", hash},
            {"policy_config_hash", pf.config_hash},
            {"algorithm", pf.algorithm},
            {"u_layout", pf.u_layout},
            {"orbit_hash", orbit_hash(orbit)},
            {"n_traj", so.n_traj},
            {"horizon", so.horizon},
            {"noise_sigma", so.noise_sigma},
            {"failures", nr.sweep.failures},
            {"metrics", metrics_json(nr.sweep.metrics)},
            {"f0_norm", pf.f0_norm},
            {"mse", pf.mse},
            {"expert_calls", pf.expert_calls}};
  if (noisy) s["median_slope"] = nr.median_slope;
  write_json((dir / "summary.json").string(), s);

  const double latency = policy_latency(pf.policy);
  const auto& m = nr.sweep.metrics;
  std::printf("%s: bounded %s  b %.4g  gamma %.4g  t_T %.0f  failures %d  latency %.2e s\n",
              pf.algorithm.c_str(), m.bounded ? "yes" : "no", m.b, m.gamma, m.t_T,
              nr.sweep.failures, latency);
  if (noisy) std::printf("median slope over periods > %d: %.4e\n", cfg.noise_skip, nr.median_slope);
  return kOk;
}

double training_minutes(const std::string& timing_csv) {
  std::ifstream f(timing_csv);
  if (!f) throw DomainError("cannot read " + timing_csv);
  std::string line, last;
  while (std::getline(f, line)) {
    if (!line.empty() && line[0] != '#' && std::isdigit(static_cast<unsigned char>(line[0]))) last = line;
  }
  if (last.empty()) throw DomainError(timing_csv + ": no timing rows");
  const auto comma = last.rfind(',');
  return std::stod(last.substr(comma + 1)) / 60.0;
}

int cmd_compare(const Common& c, const std::vector<std::string>& summaries,
                const std::vector<std::string>& timings, const std::string& out) {
  if (!timings.empty() && timings.size() != summaries.size()) {
    throw DomainError("give one --timing file per summary, or none");
  }
  const ExperimentConfig cfg = load(c);
  const std::string hash = config_hash(cfg);
  std::vector<AlgorithmSummary> algs;
  int layout = -1;
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const json j = read_json(summaries[i]);
    if (j.value("format", std::string()) != "fwuav-evaluation") {
      throw DomainError(summaries[i] + " is not an evaluation summary");
    }
    const int lay = j.at("u_layout").get<int>();
    if (layout >= 0 && lay != layout) throw DomainError("refusing to compare mixed u-layout versions");
    layout = lay;
    AlgorithmSummary a;
    a.name = j.at("algorithm").get<std::string>();
    const json& m = j.at("metrics");
    a.metrics.bounded = m.at("bounded").get<bool>();
    a.metrics.gamma = m.at("gamma").get<double>();
    a.metrics.t_T = m.at("t_T").get<double>();
    a.metrics.b = m.at("b").is_null() ? 0.0 : m.at("b").get<double>();
    a.f0_norm = j.at("f0_norm").get<double>();
    a.mse = j.at("mse").get<double>();
    a.wall_time_min = timings.empty() ? std::nan("") : training_minutes(timings[i]);
    algs.push_back(a);
  }
  compare_report_text(std::cout, algs);
  if (!out.empty()) {
    auto f = open_out(out);
    f << stamp(hash);
    compare_report_csv(f, algs);
  }
  return kOk;
}

int cmd_integrator_bench(const Common& c, const std::string& orbit_path, int periods, int steps,
                         const std::string& out) {
  ExperimentConfig cfg = load(c);
  const std::string hash = config_hash(cfg);
  ReferenceOrbit orbit;
  if (orbit_path.empty()) {
    progress("no --orbit given, searching for one\n");
    orbit = find_periodic_orbit(cfg.morphology, WingPair::symmetric(cfg.waveform), cfg.orbit);
  } else {
    orbit = load_orbit(orbit_path);
  }
  const Dynamics dyn = make_dynamics(cfg, orbit);
  const OrthogonalityComparison r = orthogonality_comparison(dyn, orbit.initial(), periods, steps);
  auto f = open_out(out);
  f << stamp(hash);
  r.write_csv(f);
  std::printf("max orthogonality error over %d periods: cg %.3e  rk4 %.3e -> %s\n", periods,
              r.group_max(), r.flat_max(), out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imitation-learned control of a flapping-wing vehicle: orbit search, expert data, "
               "training and closed-loop evaluation"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--preset", common.preset, "Base preset")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("-j,--jobs", common.jobs, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
  };

  std::string out;
  auto* config = app.add_subcommand("config", "Print the resolved configuration");
  add_common(config);
  config->add_option("-o,--out", out, "Write to a file instead of stdout");

  auto* find = app.add_subcommand("find-orbit", "Search for the periodic hover orbit");
  add_common(find);
  std::string find_out = "orbit.json";
  find->add_option("-o,--out", find_out, "Orbit file")->capture_default_str();

  auto* gen = app.add_subcommand("gen-data", "Label sampled errors with the MPC expert");
  add_common(gen);
  std::string gen_orbit, gen_out = "dataset.csv";
  bool gen_verbose = false;
  gen->add_option("--orbit", gen_orbit, "Orbit file")->required()->check(CLI::ExistingFile);
  gen->add_option("-o,--out", gen_out, "Dataset file")->capture_default_str();
  gen->add_flag("-v,--verbose", gen_verbose, "Print every solve");

  auto* train = app.add_subcommand("train", "Train a policy");
  add_common(train);
  TrainArgs ta;
  ta.out = "policy.json";
  train->add_option("--algo", ta.algo, "Algorithm")
      ->required()
      ->check(CLI::IsMember({"bc", "dagger", "dart", "coil"}));
  train->add_option("--data", ta.data, "Dataset file")->required()->check(CLI::ExistingFile);
  train->add_option("--orbit", ta.orbit, "Orbit file (dagger and dart)")->check(CLI::ExistingFile);
  train->add_option("-o,--out", ta.out, "Policy file")->capture_default_str();
  train->add_option("--metrics", ta.metrics, "Per-iteration metrics CSV (default <out>.metrics.csv)");
  train->add_option("--timing", ta.timing, "Per-iteration wall time CSV (default <out>.timing.csv)");
  train->add_flag("-v,--verbose", ta.verbose, "Print training progress");

  auto* eval = app.add_subcommand("evaluate", "Closed-loop sweep of a policy");
  add_common(eval);
  EvalArgs ea;
  ea.out_dir = "eval";
  eval->add_option("--orbit", ea.orbit, "Orbit file")->required()->check(CLI::ExistingFile);
  eval->add_option("--policy", ea.policy, "Policy file")->required()->check(CLI::ExistingFile);
  eval->add_option("-o,--out-dir", ea.out_dir, "Output directory")->capture_default_str();
  eval->add_option("--noise", ea.noise, "Weighted input noise sigma (enables box statistics)")
      ->check(CLI::NonNegativeNumber);
  eval->add_option("--n-traj", ea.n_traj, "Override the number of trajectories")->check(CLI::PositiveNumber);
  eval->add_option("--horizon", ea.horizon, "Override the horizon in periods")->check(CLI::Range(10, 100000));

  auto* cmp = app.add_subcommand("compare", "Tabulate evaluation summaries side by side");
  add_common(cmp);
  std::vector<std::string> summaries, timings;
  std::string cmp_out;
  cmp->add_option("summaries", summaries, "summary.json files from evaluate")
      ->required()
      ->check(CLI::ExistingFile);
  cmp->add_option("--timing", timings, "Training timing CSVs, in the same order")->check(CLI::ExistingFile);
  cmp->add_option("-o,--out", cmp_out, "Report CSV");

  auto* bench = app.add_subcommand("integrator-bench", "Orthogonality error of CG4 against RK4");
  add_common(bench);
  std::string bench_orbit, bench_out = "orthogonality.csv";
  int periods = 10, steps = 500;
  bench->add_option("--orbit", bench_orbit, "Orbit file (searched when absent)")->check(CLI::ExistingFile);
  bench->add_option("--periods", periods, "Flapping periods")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--steps", steps, "Steps per period")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("-o,--out", bench_out, "CSV file")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*config) return cmd_config(common, out);
    if (*find) return cmd_find_orbit(common, find_out);
    if (*gen) return cmd_gen_data(common, gen_orbit, gen_out, gen_verbose);
    if (*train) return cmd_train(common, ta);
    if (*eval) return cmd_evaluate(common, ea);
    if (*cmp) return cmd_compare(common, summaries, timings, cmp_out);
    if (*bench) return cmd_integrator_bench(common, bench_orbit, periods, steps, bench_out);
  } catch (const ConvergenceError& e) {
    std::fprintf(stderr, "error: %s (best %.3e)\n", e.what(), e.best_value());
    return kNoConvergence;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumeric;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumeric;
  }
  return kUsage;
}
