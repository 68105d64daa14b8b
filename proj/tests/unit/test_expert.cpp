#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "fwuav/datagen.hpp"
#include "fwuav/errors.hpp"

using namespace fwuav;
using fwuav::testing::desk_dynamics;
using fwuav::testing::desk_expert;
using fwuav::testing::desk_orbit;

namespace {

StateError random_error(std::mt19937_64& rng, double att) {
  std::normal_distribution<double> n(0.0, 1.0);
  StateError e;
  for (int i = 0; i < 12; ++i) e[i] = 0.01 * n(rng);
  e.segment<3>(3) = att * Vec3(n(rng), n(rng), n(rng)).normalized();
  return e;
}

}  // namespace

TEST(CostWeights, Defaults) {
  const CostWeights W = CostWeights::defaults();
  EXPECT_NO_THROW(W.validate());
  ASSERT_EQ(W.W_i.size(), static_cast<std::size_t>(kHorizonKnots));
  double sum = 0.0;
  for (std::size_t i = 0; i < W.W_i.size(); ++i) {
    sum += W.W_i[i];
    if (i > 0) EXPECT_GE(W.W_i[i], W.W_i[i - 1]);
  }
  EXPECT_NEAR(sum, 1.0, 1e-14);
  CostWeights bad = W;
  bad.W_i[3] = bad.W_i[4] * 2.0;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(WeightedError, Basics) {
  const ReferenceOrbit& orbit = desk_orbit();
  const WeightedError z = weighted_error(orbit.initial(), 0.0, orbit, CostWeights::defaults().W_x);
  EXPECT_LT(z.norm, 1e-15);
  EXPECT_LT(z.delta.norm(), 1e-15);

  std::mt19937_64 rng(1);
  const StateError e = random_error(rng, 0.3);
  const FreeState s = perturb_state(orbit, e);
  const WeightedError w = weighted_error(s, 0.0, orbit, Vec12::Ones());
  EXPECT_NEAR(w.norm, w.delta.norm(), 1e-15);

  // with R = R_d the rate error is the plain difference
  FreeState q = orbit.initial();
  q.xi.w += Vec3(0.1, -0.2, 0.3);
  EXPECT_LT((state_error(q, orbit.initial()).tail<3>() - Vec3(0.1, -0.2, 0.3)).norm(), 1e-15);
}

TEST(PerturbState, RoundTrip) {
  const ReferenceOrbit& orbit = desk_orbit();
  EXPECT_LT(state_error(perturb_state(orbit, StateError::Zero()), orbit.initial()).norm(), 1e-15);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const StateError e = random_error(rng, 0.3);
    EXPECT_LT((state_error(perturb_state(orbit, e), orbit.initial()) - e).norm(), 1e-8);
  }
  // single-axis attitude: the recovered error is sin of the angle
  const FreeState& d = orbit.initial();
  FreeState s = d;
  s.g.R = d.R() * exp_so3(Vec3(0.0, 0.4, 0.0));
  EXPECT_NEAR(state_error(s, d)[4], std::sin(0.4), 1e-14);
}

TEST(Orbit, Quality) {
  const ReferenceOrbit& orbit = desk_orbit();
  const Dynamics& dyn = desk_dynamics();
  const Morphology m;
  const Vec12 W_x = CostWeights::defaults().W_x;
  EXPECT_LE(orbit.defect, 1e-4);
  EXPECT_EQ(orbit.samples.size(), static_cast<std::size_t>(orbit.steps_per_period + 1));

  SimOptions so;
  so.record_stride = so.steps_per_period;
  const Trajectory tr = simulate(dyn, orbit.initial(), 10, zero_controller(dyn.period()), so);
  ASSERT_FALSE(tr.failed);
  EXPECT_LE(weighted_norm(state_error(tr.states[1], orbit.initial()), W_x), 1e-4);
  double drift = 0.0;
  for (const FreeState& s : tr.states) drift = std::max(drift, std::abs(s.x().z() - orbit.initial().x().z()));
  EXPECT_LE(drift, 0.01 * m.span());

  EXPECT_NEAR(orbit.mean_aero_force.z(), m.total_mass() * m.gravity, 0.01 * m.total_mass() * m.gravity);
}

TEST(Orbit, InfeasibleMorphologyFailsCleanly) {
  Morphology heavy;
  heavy.m_body *= 50.0;
  OrbitOptions o;
  o.max_iter = 4;
  EXPECT_THROW(find_periodic_orbit(heavy, WingPair::symmetric(WingParams{}), o), ConvergenceError);
}

TEST(OrbitHash, StableAndSensitive) {
  const ReferenceOrbit& orbit = desk_orbit();
  EXPECT_EQ(orbit_hash(orbit), orbit_hash(orbit));
  ReferenceOrbit other = orbit;
  other.params.right.phi_m += 1e-12;
  EXPECT_NE(orbit_hash(orbit), orbit_hash(other));
}

TEST(TrackingCost, Definition) {
  const ReferenceOrbit& orbit = desk_orbit();
  const CostWeights W = CostWeights::defaults();
  const double dt = orbit.period() / kKnotsPerPeriod;
  std::vector<FreeState> samples(kHorizonKnots + 1);
  for (int i = 0; i <= kHorizonKnots; ++i) samples[i] = orbit.desired(i * dt);
  EXPECT_LT(tracking_cost(samples, orbit, W), 1e-14);

  const int i = 7;
  const double e = 0.004;
  samples[i].g.x.y() += e;
  EXPECT_NEAR(tracking_cost(samples, orbit, W), W.W_i[i - 1] * W.W_x[1] * e, 1e-15);

  CostWeights W3 = W;
  for (double& w : W3.W_i) w *= 3.0;
  EXPECT_NEAR(tracking_cost(samples, orbit, W3), 3.0 * tracking_cost(samples, orbit, W), 1e-15);

  samples.resize(5);
  EXPECT_THROW(tracking_cost(samples, orbit, W), DomainError);
}

TEST(Mpc, ZeroErrorGivesZeroControl) {
  const MpcResult r = desk_expert().solve(desk_orbit().initial());
  EXPECT_LE(r.u.norm(), 1e-3);
  EXPECT_LE(r.cost, r.cost_zero);
}

TEST(Mpc, MonotoneDeterministicAndStructured) {
  const MpcExpert& ex = desk_expert();
  std::mt19937_64 rng(4);
  const Vec12 W_x = ex.weights().W_x;
  for (int i = 0; i < 3; ++i) {
    const StateError e = sample_initial_error(rng, BlockScales{}, W_x);
    const MpcResult a = ex.solve_error(e), b = ex.solve_error(e);
    EXPECT_LE(a.cost, a.cost_zero);
    EXPECT_EQ(a.u, b.u);
    EXPECT_LE(a.u.cwiseAbs().maxCoeff(), ex.options().delta_max);
    for (int c = 0; c < 6; ++c) EXPECT_EQ(a.u[c * kKnotsPerPeriod + kKnotsPerPeriod - 1], 0.0);
    // every knot of the two-period schedule at a period boundary is zero by construction
    const ControlSchedule s = ControlSchedule::from_u(a.u, ex.orbit().period());
    EXPECT_EQ(s.eval(0.0), ControlDelta::Zero());
    EXPECT_EQ(s.eval(ex.orbit().period()), ControlDelta::Zero());
  }
}

TEST(Mpc, RejectsLargeErrors) {
  StateError e = StateError::Zero();
  e[0] = 3.0 / CostWeights::defaults().W_x[0];
  EXPECT_THROW(desk_expert().solve_error(e), DomainError);
}

TEST(Mpc, ClosedLoopReducesError) {
  const MpcExpert& ex = desk_expert();
  const Vec12 W_x = ex.weights().W_x;
  std::mt19937_64 rng(12);
  StateError e = sample_initial_error(rng, BlockScales{}, W_x);
  e *= 0.5 / weighted_norm(e, W_x);
  SimOptions so;
  so.record_stride = so.steps_per_period;
  const Trajectory tr = simulate(ex.dynamics(), perturb_state(ex.orbit(), e), 4,
                                 fwuav::testing::mpc_controller(ex), so);
  ASSERT_FALSE(tr.failed);
  EXPECT_LT(weighted_norm(state_error(tr.states.back(), ex.orbit().initial()), W_x), 0.05);
}
