// Acceptance run at desk scale. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. FWUAV_ACCEPTANCE_OUT, when set, names a
// directory that receives the sweep envelopes and box statistics.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "fwuav/io.hpp"

using namespace fwuav;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Outcome& o, double seconds) {
  if (!o.pass) ++failures;
  std::printf("%s  %2d  %-28s %s  [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
              seconds);
  std::fflush(stdout);
}

void run(int id, const char* name, const std::function<Outcome()>& f) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, name, o, since(t0));
}

void save(const std::string& name, const std::function<void(std::ostream&)>& write) {
  const char* dir = std::getenv("FWUAV_ACCEPTANCE_OUT");
  if (!dir) return;
  std::filesystem::create_directories(dir);
  std::ofstream os(std::filesystem::path(dir) / name);
  write(os);
}

// Shared desk-scale state, built lazily so that cheap criteria report first.
struct Desk {
  ExperimentConfig cfg = ExperimentConfig::preset_named("desk");
  ReferenceOrbit orbit;
  std::unique_ptr<Dynamics> dyn;
  std::unique_ptr<MpcExpert> expert;
  Dataset data;
  double data_seconds = 0.0;

  void build_model() {
    if (dyn) return;
    orbit = find_periodic_orbit(cfg.morphology, WingPair::symmetric(cfg.waveform), cfg.orbit);
    DynamicsOptions o;
    o.delta_max = cfg.expert.delta_max;
    dyn = std::make_unique<Dynamics>(cfg.morphology, orbit.params, o);
    expert = std::make_unique<MpcExpert>(*dyn, orbit, cfg.weights(), cfg.expert);
  }
  void build_data() {
    build_model();
    if (data.size() > 0) return;
    const auto t0 = Clock::now();
    data = generate_dataset(*expert, cfg.dataset);
    data_seconds = since(t0);
  }
};

Eigen::MatrixXd gaussian(int rows, int cols, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < M.size(); ++i) M.data()[i] = g(rng);
  return M;
}

struct Trained {
  NeuralPolicy policy;
  double seconds = 0.0;  // training plus the shared dataset generation
  SweepResult sweep;
};

// Stage outputs of a reduced pipeline as the text each stage would write.
std::map<std::string, std::string> pipeline_outputs(const Desk& d, int jobs) {
  std::map<std::string, std::string> out;
  auto text = [](const std::function<void(std::ostream&)>& w) {
    std::ostringstream os;
    w(os);
    return os.str();
  };
  GenerateOptions g = d.cfg.dataset;
  g.n_samples = 8;
  g.n_zero = 2;
  g.jobs = jobs;
  const Dataset ds = generate_dataset(*d.expert, g);
  out["dataset.csv"] = text([&](std::ostream& os) { ds.write_csv(os); });

  ILConfig il = d.cfg.imitation;
  il.jobs = jobs;
  il.iterations = 1;
  il.rollouts_per_iter = 2;
  il.rollout_periods = 1;
  il.train.max_iter = 40;
  const ILResult coil_r = coil(ds, d.cfg.arch, il);
  const ILResult dagger_r = dagger(ds, d.cfg.arch, il, *d.expert);
  const ILResult dart_r = dart(ds, d.cfg.arch, il, *d.expert);
  out["coil.metrics.csv"] = text([&](std::ostream& os) { write_metrics_csv(os, coil_r.log); });
  out["dagger.metrics.csv"] = text([&](std::ostream& os) { write_metrics_csv(os, dagger_r.log); });
  out["dart.metrics.csv"] = text([&](std::ostream& os) { write_metrics_csv(os, dart_r.log); });

  SweepOptions so = d.cfg.sweep;
  so.n_traj = 4;
  so.horizon = 12;
  so.jobs = jobs;
  so.noise_sigma = d.cfg.noise_sigma;
  const NoiseSweepResult ns = noise_sweep(coil_r.policy, *d.dyn, d.orbit, d.cfg.weights().W_x, so, 2);
  out["envelope.csv"] = text([&](std::ostream& os) { write_envelope_csv(os, ns.sweep); });
  out["boxstats.csv"] = text([&](std::ostream& os) { write_boxstats_csv(os, ns.stats); });
  return out;
}

}  // namespace

int main() {
  Desk d;
  std::printf("fwuav acceptance (desk preset, config %s)\n", config_hash(d.cfg).c_str());

  run(1, "structure preservation", [&] {
    d.build_model();
    const auto t0 = Clock::now();
    const OrthogonalityComparison c = orthogonality_comparison(*d.dyn, d.orbit.initial(), 10, 500);
    const double secs = since(t0);
    const double cg = c.group_max(), rk = c.flat_max();
    save("orthogonality.csv", [&](std::ostream& os) { c.write_csv(os); });
    return Outcome{cg <= 1e-12 && rk >= 1e3 * cg && secs < 10.0,
                   fmt("CG4 %.2e, RK4 %.2e, ratio %.1e, %.2f s", cg, rk, rk / cg, secs)};
  });

  run(2, "integrator order", [&] {
    const auto t0 = Clock::now();
    const OrderResult r = order_test(ButcherTableau::cg4());
    const double secs = since(t0);
    return Outcome{r.order >= 3.7 && r.order <= 4.3 && secs < 30.0, fmt("order %.3f", r.order)};
  });

  run(3, "parameter counts", [&] {
    const int a = param_count(12, 36, 60), b = param_count(12, 60, 60);
    return Outcome{a == 3408 && b == 5160, fmt("%d, %d", a, b)};
  });

  run(4, "DART trace identity", [&] {
    d.build_data();
    const NeuralPolicy bc = behavior_cloning(d.data, d.cfg.arch, d.cfg.imitation);
    double worst = 0.0;
    for (double alpha_d : {1e-6, 1e-4, 1e-2, 1.0}) {
      const DartNoise n = dart_noise(bc, d.data, alpha_d);
      worst = std::max(worst, std::abs(n.Sigma.trace() - alpha_d / n.N));
    }
    return Outcome{worst <= 1e-12, fmt("max |tr Sigma - alpha_d / N| = %.1e", worst)};
  });

  run(5, "FIM and KL properties", [&] {
    d.build_data();
    const NeuralPolicy bc = behavior_cloning(d.data, d.cfg.arch, d.cfg.imitation);
    const FisherMatrix F = fim_estimate(bc, d.data.X, d.data.Y);
    const Eigen::MatrixXd D = F.dense();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff(), lmax = es.eigenvalues().maxCoeff();
    const bool psd = lmin >= -1e-12 * lmax;
    const double kl0 = kl_gaussian(bc, bc, F);
    double qerr = 0.0;
    for (int t = 0; t < 10; ++t) {
      const Eigen::VectorXd v = gaussian(bc.size(), 1, 100 + t);
      const double q = v.dot(D * v);
      qerr = std::max(qerr, std::abs(F.quadratic(v) - q) / std::abs(q));
    }
    return Outcome{psd && kl0 == 0.0 && qerr <= 1e-10,
                   fmt("min eig %.1e (max %.1e), kl(theta, theta) %.1e, quadratic rel err %.1e",
                       lmin, lmax, kl0, qerr)};
  });

  run(6, "gradient oracle", [&] {
    const auto t0 = Clock::now();
    const NeuralPolicy net = NeuralPolicy::random(NetArch{}, 42);
    const Eigen::VectorXd x = gaussian(12, 1, 1, 0.5);
    const Eigen::VectorXd up = gaussian(60, 1, 2);
    const Eigen::VectorXd g = net.grad_theta(x, up);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pick(0, net.size() - 1);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const int k = pick(rng);
      const double h = 1e-6;
      Eigen::VectorXd tp = net.theta(), tm = net.theta();
      tp[k] += h;
      tm[k] -= h;
      const double fd = (up.dot(NeuralPolicy(net.arch(), tp).forward(x)) -
                         up.dot(NeuralPolicy(net.arch(), tm).forward(x))) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[k]) / std::max(std::abs(g[k]), 1e-3 * g.cwiseAbs().maxCoeff()));
    }
    const double secs = since(t0);
    return Outcome{worst <= 1e-6 && secs < 5.0, fmt("max relative error %.1e", worst)};
  });

  std::map<std::string, Trained> algs;

  run(7, "COIL constraint", [&] {
    d.build_data();
    const auto t0 = Clock::now();
    Trained bc;
    bc.policy = behavior_cloning(d.data, d.cfg.arch, d.cfg.imitation);
    bc.seconds = d.data_seconds + since(t0);
    const ILResult r = coil(d.data, d.cfg.arch, d.cfg.imitation);
    Trained c;
    c.policy = r.policy;
    c.seconds = d.data_seconds + r.wall_time;
    double proj = 0.0;
    for (std::size_t i = 1; i < r.log.size(); ++i) proj = std::max(proj, r.log[i].f0_projected);
    const double f_bc = zero_output_norm(bc.policy), f_coil = zero_output_norm(c.policy);
    algs["BC"] = bc;
    algs["COIL"] = c;
    const double secs = since(t0) + d.data_seconds;
    return Outcome{d.data.size() == 240 && f_coil <= 0.05 * f_bc && proj <= 1e-8 && secs < 600.0,
                   fmt("N %d, |f(0)| BC %.3e, COIL %.3e (ratio %.4f), projected %.1e", d.data.size(),
                       f_bc, f_coil, f_coil / f_bc, proj)};
  });

  run(8, "closed-loop ordering", [&] {
    d.build_data();
    const auto t0 = Clock::now();
    if (!algs.count("BC") || !algs.count("COIL")) throw std::runtime_error("criterion 7 did not train");
    NetArch da = d.cfg.arch;
    da.n_hidden = d.cfg.dagger_hidden;
    const ILResult dg = dagger(d.data, da, d.cfg.imitation, *d.expert);
    algs["DAgger"] = Trained{dg.policy, d.data_seconds + dg.wall_time, {}};
    const ILResult dt = dart(d.data, d.cfg.arch, d.cfg.imitation, *d.expert);
    algs["DART"] = Trained{dt.policy, d.data_seconds + dt.wall_time, {}};
    std::string detail;
    for (auto& [name, t] : algs) {
      t.sweep = sweep(t.policy, *d.dyn, d.orbit, d.cfg.weights().W_x, d.cfg.sweep);
      save(name + ".envelope.csv", [&](std::ostream& os) { write_envelope_csv(os, t.sweep); });
      const BoundednessMetrics& m = t.sweep.metrics;
      detail += fmt("%s b %s%.4f g %.3f t %.0fs; ", name.c_str(), m.bounded ? "" : "(unbounded) ",
                    m.b, m.gamma, t.seconds);
    }
    const auto& bc = algs["BC"].sweep.metrics;
    bool bc_worst = !bc.bounded;
    if (!bc_worst) {
      bc_worst = true;
      for (const auto& [name, t] : algs) {
        if (name != "BC" && t.sweep.metrics.bounded && t.sweep.metrics.b > bc.b) bc_worst = false;
      }
    }
    const auto& coil_m = algs["COIL"].sweep.metrics;
    const auto& dag_m = algs["DAgger"].sweep.metrics;
    const bool coil_le_dagger = coil_m.bounded && (!dag_m.bounded || coil_m.b <= dag_m.b);
    const bool coil_fast = algs["COIL"].seconds <= 0.5 * algs["DAgger"].seconds;
    const double secs = since(t0);
    detail += fmt("(a) %d (b) %d (c) %d", bc_worst, coil_le_dagger, coil_fast);
    return Outcome{bc_worst && coil_le_dagger && coil_fast && secs < 7200.0, detail};
  });

  run(9, "expert sanity", [&] {
    d.build_model();
    const auto t0 = Clock::now();
    const Vec12 W_x = d.cfg.weights().W_x;
    const MpcExpert& ex = *d.expert;
    const Controller mpc = [&ex](int, double, const FreeState& s) {
      return ControlSchedule::from_u(ex.solve(s).u, ex.orbit().period(), ex.options().delta_max);
    };
    SimOptions so;
    so.steps_per_period = d.cfg.orbit.steps_per_period;
    so.record_stride = so.steps_per_period;
    std::string detail;
    bool ok = true;
    for (std::uint64_t seed : {1, 2, 3, 4}) {
      std::mt19937_64 rng(seed);
      StateError e = sample_initial_error(rng, d.cfg.dataset.scales, W_x);
      e *= 0.5 / weighted_norm(e, W_x);
      const Trajectory tr = simulate(*d.dyn, perturb_state(d.orbit, e), 10, mpc, so);
      int reached = -1;
      for (std::size_t k = 0; k < tr.states.size(); ++k) {
        if (weighted_norm(state_error(tr.states[k], d.orbit.initial()), W_x) < 0.05) {
          reached = static_cast<int>(k);
          break;
        }
      }
      ok = ok && !tr.failed && reached >= 0;
      detail += reached >= 0 ? fmt("%d ", reached) : std::string("never ");
    }
    const double secs = since(t0);
    return Outcome{ok && secs < 1800.0, "periods to < 0.05: " + detail};
  });

  run(10, "noise robustness", [&] {
    if (!algs.count("COIL")) throw std::runtime_error("criterion 7 did not train");
    SweepOptions so = d.cfg.sweep;
    so.noise_sigma = d.cfg.noise_sigma;
    const NoiseSweepResult r = noise_sweep(algs["COIL"].policy, *d.dyn, d.orbit, d.cfg.weights().W_x,
                                           so, d.cfg.noise_skip);
    save("COIL.boxstats.csv", [&](std::ostream& os) { write_boxstats_csv(os, r.stats); });
    return Outcome{r.median_slope <= 0.0 && r.sweep.failures == 0,
                   fmt("sigma %.0e, median slope over periods %d-%d: %.3e, median at end %.2e",
                       so.noise_sigma, d.cfg.noise_skip, so.horizon, r.median_slope,
                       r.stats.empty() ? 0.0 : r.stats.back().median)};
  });

  run(11, "determinism", [&] {
    d.build_model();
    const ReferenceOrbit again =
        find_periodic_orbit(d.cfg.morphology, WingPair::symmetric(d.cfg.waveform), d.cfg.orbit);
    bool same = orbit_to_json(again, "").dump() == orbit_to_json(d.orbit, "").dump();
    std::string detail = same ? "" : "orbit differs; ";
    const auto a = pipeline_outputs(d, 1);
    const auto b = pipeline_outputs(d, 1);
    const auto c = pipeline_outputs(d, 3);
    for (const auto& [name, text] : a) {
      if (text != b.at(name) || text != c.at(name)) {
        same = false;
        detail += name + " differs; ";
      }
    }
    return Outcome{same, same ? fmt("%zu stage outputs identical across reruns and 1/3 workers", a.size() + 1)
                              : detail};
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
