#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "fwuav/errors.hpp"
#include "fwuav/evalharness.hpp"

using namespace fwuav;

namespace {

std::vector<double> series(int n, double (*f)(int)) {
  std::vector<double> s(n);
  for (int k = 0; k < n; ++k) s[k] = f(k);
  return s;
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

SweepOptions small_sweep() {
  SweepOptions o;
  o.n_traj = 3;
  o.horizon = 10;
  o.scales = BlockScales{0.05, 0.05, 0.05, 0.05};
  return o;
}

}  // namespace

TEST(BoundednessFit, ExponentialDecay) {
  const auto e = series(40, [](int k) { return 0.5 * std::pow(0.8, k); });
  const BoundednessMetrics m = boundedness_fit(e);
  EXPECT_TRUE(m.bounded);
  EXPECT_NEAR(m.gamma, -std::log(0.8), 1e-12);
  EXPECT_DOUBLE_EQ(m.b, e[20]);
  EXPECT_EQ(m.t_T, 20.0);
}

TEST(BoundednessFit, GrowthIsUnbounded) {
  const auto e = series(30, [](int k) { return 0.1 + 0.01 * k; });
  const BoundednessMetrics m = boundedness_fit(e);
  EXPECT_FALSE(m.bounded);
  EXPECT_EQ(m.gamma, 0.0);
}

TEST(BoundednessFit, PlateauSetsTheBound) {
  const auto e = series(60, [](int k) { return std::max(0.5 * std::pow(0.7, k), 0.01); });
  const BoundednessMetrics m = boundedness_fit(e);
  EXPECT_TRUE(m.bounded);
  EXPECT_DOUBLE_EQ(m.b, 0.01);
  EXPECT_LE(m.t_T, 11.0);
  // the clipped sample at t_T binds the rate
  EXPECT_NEAR(m.gamma, std::log(0.5 / 0.01) / m.t_T, 1e-12);
}

TEST(BoundednessFit, SmallFinalBumpStaysBounded) {
  auto e = series(40, [](int k) { return 0.01 + 0.001 * std::sin(1.3 * k); });
  e.back() = 0.0112;
  const BoundednessMetrics m = boundedness_fit(e);
  EXPECT_TRUE(m.bounded);
  EXPECT_DOUBLE_EQ(m.b, 0.0112);
}

TEST(BoundednessFit, NonFiniteAndShortSeries) {
  auto e = series(20, [](int k) { return 1.0 / (k + 1); });
  e[15] = std::numeric_limits<double>::infinity();
  const BoundednessMetrics m = boundedness_fit(e);
  EXPECT_FALSE(m.bounded);
  EXPECT_TRUE(std::isinf(m.b));
  EXPECT_THROW(boundedness_fit(std::vector<double>(9, 0.1)), DomainError);
}

TEST(Statistics, Quantile) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.3), 7.0);
  EXPECT_THROW(quantile({}, 0.5), DomainError);
  EXPECT_THROW(quantile({1.0}, 1.5), DomainError);
}

TEST(Statistics, LeastSquaresSlope) {
  EXPECT_NEAR(ls_slope({0, 1, 2, 3}, {1, 3, 5, 7}), 2.0, 1e-15);
  EXPECT_NEAR(ls_slope({0, 1, 2}, {1, 0, 1}), 0.0, 1e-15);
  EXPECT_EQ(ls_slope({1, 1}, {0, 5}), 0.0);
  EXPECT_THROW(ls_slope({1}, {1}), DomainError);
  EXPECT_THROW(ls_slope({1, 2}, {1}), DomainError);
}

TEST(Sweep, ZeroErrorStartsOnTheOrbit) {
  const ReferenceOrbit& orbit = fwuav::testing::desk_orbit();
  const NeuralPolicy zero(NetArch{});
  SweepOptions o = small_sweep();
  o.scales = BlockScales{0, 0, 0, 0};
  const SweepResult r = sweep(zero, fwuav::testing::desk_dynamics(), orbit,
                              CostWeights::defaults().W_x, o);
  ASSERT_EQ(r.series.size(), 3u);
  EXPECT_EQ(r.failures, 0);
  for (const auto& s : r.series) {
    EXPECT_EQ(s, r.series[0]);
    EXPECT_EQ(s[0], 0.0);
    // only the orbit's periodicity defect drives the error
    EXPECT_LE(s[1], 1e-3);
  }
}

TEST(Sweep, EnvelopeAndJobIndependence) {
  const Vec12 W_x = CostWeights::defaults().W_x;
  const NeuralPolicy net = NeuralPolicy::random(NetArch{}, 4);
  NeuralPolicy small(NetArch{}, net.theta() * 1e-3);
  SweepOptions o = small_sweep();
  const SweepResult a = sweep(small, fwuav::testing::desk_dynamics(), fwuav::testing::desk_orbit(), W_x, o);
  o.jobs = 2;
  const SweepResult b = sweep(small, fwuav::testing::desk_dynamics(), fwuav::testing::desk_orbit(), W_x, o);
  EXPECT_EQ(a.series, b.series);
  ASSERT_EQ(a.envelope.size(), 11u);
  for (int k = 0; k <= o.horizon; ++k) {
    double m = 0.0;
    for (const auto& s : a.series) m = std::max(m, s[k]);
    EXPECT_EQ(a.envelope[k], m);
  }
  for (const auto& s : a.series) EXPECT_LE(s[0], 0.05 * 2.0 + 1e-12);

  std::ostringstream os;
  write_envelope_csv(os, a);
  EXPECT_EQ(os.str().rfind("period,envelope,median,mean\n", 0), 0u);
  EXPECT_EQ(count_lines(os.str()), 12);
}

TEST(NoiseSweep, ZeroSigmaMatchesPlainSweep) {
  const Vec12 W_x = CostWeights::defaults().W_x;
  const NeuralPolicy zero(NetArch{});
  const Dynamics& dyn = fwuav::testing::desk_dynamics();
  const ReferenceOrbit& orbit = fwuav::testing::desk_orbit();
  SweepOptions o = small_sweep();
  o.n_traj = 4;
  const SweepResult plain = sweep(zero, dyn, orbit, W_x, o);
  const NoiseSweepResult ns = noise_sweep(zero, dyn, orbit, W_x, o, 5);
  EXPECT_EQ(ns.sweep.series, plain.series);
  ASSERT_EQ(ns.stats.size(), 5u);
  EXPECT_EQ(ns.stats.front().period, 6);
  for (const BoxStats& b : ns.stats) {
    EXPECT_LE(b.min, b.q25);
    EXPECT_LE(b.q25, b.median);
    EXPECT_LE(b.median, b.q75);
    EXPECT_LE(b.q75, b.max);
  }
  std::ostringstream os;
  write_boxstats_csv(os, ns.stats);
  EXPECT_EQ(count_lines(os.str()), 6);
}

TEST(NoiseSweep, NoiseChangesAPolicyDependentOnItsInput) {
  const Vec12 W_x = CostWeights::defaults().W_x;
  const NeuralPolicy net(NetArch{}, NeuralPolicy::random(NetArch{}, 5).theta() * 1e-3);
  const Dynamics& dyn = fwuav::testing::desk_dynamics();
  const ReferenceOrbit& orbit = fwuav::testing::desk_orbit();
  SweepOptions o = small_sweep();
  o.n_traj = 2;
  o.horizon = 10;
  const NoiseSweepResult clean = noise_sweep(net, dyn, orbit, W_x, o, 2);
  o.noise_sigma = 0.05;
  const NoiseSweepResult a = noise_sweep(net, dyn, orbit, W_x, o, 2);
  const NoiseSweepResult b = noise_sweep(net, dyn, orbit, W_x, o, 2);
  EXPECT_EQ(a.sweep.series, b.sweep.series);
  EXPECT_EQ(a.median_slope, b.median_slope);
  EXPECT_NE(a.sweep.series, clean.sweep.series);
  // noise enters from the first decision onward; the start is unchanged
  EXPECT_EQ(a.sweep.series[0][0], clean.sweep.series[0][0]);
}

TEST(Report, NotAvailableEntries) {
  AlgorithmSummary bc{"BC", std::numeric_limits<double>::quiet_NaN(), {}, 0.3, 1e-3};
  bc.metrics.bounded = false;
  bc.metrics.b = 2.0;
  AlgorithmSummary coil{"COIL", 0.66, {}, 1e-4, 2e-3};
  coil.metrics.bounded = true;
  coil.metrics.b = 1e-4;
  coil.metrics.gamma = 0.2;
  std::ostringstream csv;
  compare_report_csv(csv, {bc, coil});
  const std::string s = csv.str();
  EXPECT_EQ(s.rfind("metric,BC,COIL\n", 0), 0u);
  EXPECT_NE(s.find("computation_time_min,N/A,0.66\n"), std::string::npos);
  EXPECT_NE(s.find("ultimate_bound_b,N/A,0.0001\n"), std::string::npos);
  EXPECT_NE(s.find("initial_decay_rate,0,0.2\n"), std::string::npos);
  EXPECT_EQ(count_lines(s), 6);

  std::ostringstream only;
  compare_report_csv(only, {coil});
  EXPECT_EQ(only.str().find("BC"), std::string::npos);

  std::ostringstream text;
  compare_report_text(text, {bc, coil});
  EXPECT_NE(text.str().find("N/A"), std::string::npos);
}

TEST(Latency, PolicyIsFarCheaperThanTheExpert) {
  const MpcExpert& expert = fwuav::testing::desk_expert();
  const FreeState s = perturb_state(expert.orbit(), StateError::Constant(1e-3));
  const auto t0 = std::chrono::steady_clock::now();
  (void)expert.solve(s);
  const double t_expert = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double t_policy = policy_latency(NeuralPolicy::random(NetArch{}, 1), 2000);
  EXPECT_GT(t_policy, 0.0);
  EXPECT_GE(t_expert / t_policy, 1e3);
}
