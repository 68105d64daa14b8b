#include "fwuav/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "fwuav/errors.hpp"
#include "fwuav/parallel.hpp"

namespace fwuav {

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("ls_slope: need two or more points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

BoundednessMetrics boundedness_fit(const std::vector<double>& e) {
  const int n = static_cast<int>(e.size());
  if (n < 10) throw DomainError("boundedness_fit: need at least 10 periods");
  BoundednessMetrics m;
  for (double v : e) {
    if (!std::isfinite(v) || v < 0.0) {
      m.b = std::numeric_limits<double>::infinity();
      return m;
    }
  }
  const int tail0 = n / 2;
  const auto peak = std::max_element(e.begin() + tail0, e.end());
  m.b = *peak;

  std::vector<double> tx, ty;
  for (int k = tail0; k < n; ++k) {
    tx.push_back(k);
    ty.push_back(e[k]);
  }
  const double tail_mean = std::accumulate(ty.begin(), ty.end(), 0.0) / ty.size();
  const double rise = ls_slope(tx, ty) * (n - 1 - tail0);
  m.bounded = !(peak == e.end() - 1 && rise > 0.05 * tail_mean);

  int tT = n - 1;
  while (tT > 0 && e[tT - 1] <= m.b) --tT;
  m.t_T = tT;

  if (e[0] > 0.0 && tT > 0) {
    double gamma = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= tT; ++k) {
      const double r = e[k] > 0.0 ? -std::log(e[k] / e[0]) / k
                                  : std::numeric_limits<double>::infinity();
      gamma = std::min(gamma, r);
    }
    m.gamma = std::isfinite(gamma) ? std::max(gamma, 0.0) : 0.0;
  }
  return m;
}

SweepResult sweep(const NeuralPolicy& net, const Dynamics& dyn, const ReferenceOrbit& orbit,
                  const Vec12& W_x, const SweepOptions& opts) {
  if (opts.n_traj < 1 || opts.horizon < 1) throw DomainError("sweep: need trajectories and a horizon");
  SweepResult out;
  out.series.assign(opts.n_traj, {});
  std::vector<char> failed(opts.n_traj, 0);
  SimOptions sim;
  sim.steps_per_period = opts.steps_per_period;
  sim.record_stride = opts.steps_per_period;
  const std::uint64_t noise_base = splitmix64(opts.seed ^ 0x6e6f697365ULL);
  parallel_for(opts.n_traj, opts.jobs, [&](int j) {
    std::mt19937_64 rng = substream(opts.seed, static_cast<std::uint64_t>(j));
    const StateError e0 = sample_initial_error(rng, opts.scales, W_x);
    const Controller ctrl = policy_controller(net, orbit, W_x, dyn.options().delta_max,
                                              opts.noise_sigma, noise_base + j);
    const Trajectory tr = simulate(dyn, perturb_state(orbit, e0), opts.horizon, ctrl, sim);
    auto& s = out.series[j];
    s.assign(opts.horizon + 1, std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
      s[k] = weighted_norm(state_error(tr.states[k], orbit.initial()), W_x);
    }
    failed[j] = tr.failed;
  });
  out.failures = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
  out.envelope.assign(opts.horizon + 1, 0.0);
  for (const auto& s : out.series) {
    for (int k = 0; k <= opts.horizon; ++k) out.envelope[k] = std::max(out.envelope[k], s[k]);
  }
  out.metrics = boundedness_fit(out.envelope);
  return out;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw DomainError("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile: q must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

NoiseSweepResult noise_sweep(const NeuralPolicy& net, const Dynamics& dyn,
                             const ReferenceOrbit& orbit, const Vec12& W_x,
                             const SweepOptions& opts, int skip) {
  NoiseSweepResult out;
  out.sweep = sweep(net, dyn, orbit, W_x, opts);
  std::vector<double> px, pm;
  for (int k = skip + 1; k <= opts.horizon; ++k) {
    std::vector<double> col;
    for (const auto& s : out.sweep.series) col.push_back(s[k]);
    BoxStats b;
    b.period = k;
    b.min = quantile(col, 0.0);
    b.q25 = quantile(col, 0.25);
    b.median = quantile(col, 0.5);
    b.q75 = quantile(col, 0.75);
    b.max = quantile(col, 1.0);
    out.stats.push_back(b);
    px.push_back(k);
    pm.push_back(b.median);
  }
  if (px.size() >= 2) out.median_slope = ls_slope(px, pm);
  return out;
}

double policy_latency(const NeuralPolicy& net, int repeats) {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(net.arch().n_in, 0.1);
  double sink = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) {
    x[i % x.size()] += 1e-9;
    sink += net.forward(x)[0];
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!std::isfinite(sink)) throw NumericError("policy_latency: non-finite output");
  return dt / repeats;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::vector<std::string>> report_rows(const std::vector<AlgorithmSummary>& algs) {
  std::vector<std::vector<std::string>> rows = {{"metric"},
                                                {"computation_time_min"},
                                                {"ultimate_bound_b"},
                                                {"initial_decay_rate"},
                                                {"f0_norm"},
                                                {"mse"}};
  for (const auto& a : algs) {
    rows[0].push_back(a.name);
    rows[1].push_back(std::isfinite(a.wall_time_min) ? fmt("%.4g", a.wall_time_min) : "N/A");
    rows[2].push_back(a.metrics.bounded ? fmt("%.4g", a.metrics.b) : "N/A");
    rows[3].push_back(fmt("%.4g", a.metrics.gamma));
    rows[4].push_back(fmt("%.4g", a.f0_norm));
    rows[5].push_back(fmt("%.4g", a.mse));
  }
  return rows;
}

}  // namespace

void compare_report_csv(std::ostream& os, const std::vector<AlgorithmSummary>& algs) {
  for (const auto& row : report_rows(algs)) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
}

void compare_report_text(std::ostream& os, const std::vector<AlgorithmSummary>& algs) {
  const auto rows = report_rows(algs);
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      os << row[i] << std::string(width[i] - row[i].size() + 2, ' ');
    }
    os << '\n';
  }
}

void write_envelope_csv(std::ostream& os, const SweepResult& r) {
  os << "period,envelope,median,mean\n";
  char buf[128];
  for (std::size_t k = 0; k < r.envelope.size(); ++k) {
    std::vector<double> col;
    for (const auto& s : r.series) col.push_back(s[k]);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
    std::snprintf(buf, sizeof buf, "%zu,%.10e,%.10e,%.10e\n", k, r.envelope[k], quantile(col, 0.5),
                  mean);
    os << buf;
  }
}

void write_boxstats_csv(std::ostream& os, const std::vector<BoxStats>& stats) {
  os << "period,min,q25,median,q75,max\n";
  char buf[160];
  for (const auto& b : stats) {
    std::snprintf(buf, sizeof buf, "%d,%.10e,%.10e,%.10e,%.10e,%.10e\n", b.period, b.min, b.q25,
                  b.median, b.q75, b.max);
    os << buf;
  }
}

}  // namespace fwuav
