#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "fwuav/errors.hpp"
#include "fwuav/integrate.hpp"

using namespace fwuav;

namespace {

VectorField zero_field() {
  return [](double, const Vec3&, const Mat3&, const Vec3&, const Vec3&) { return Vec6::Zero().eval(); };
}

FreeState spinning() {
  FreeState s;
  s.g.x = Vec3(0.1, -0.2, 0.3);
  s.g.R = exp_so3(Vec3(0.4, 0.2, -0.1));
  s.xi.v = Vec3(0.5, 0.1, -0.3);
  s.xi.w = Vec3(2.0, -3.0, 1.5);
  return s;
}

}  // namespace

TEST(Tableau, ValidatesKnownMethods) {
  for (const auto& t : {ButcherTableau::cg4(), ButcherTableau::lie_euler(), ButcherTableau::rk4()}) {
    EXPECT_NO_THROW(t.validate()) << t.name;
    EXPECT_EQ(t.checksum().size(), 16u);
  }
  EXPECT_EQ(ButcherTableau::cg4().stages(), 5);
  EXPECT_EQ(ButcherTableau::cg4().order, 4);
  ButcherTableau bad = ButcherTableau::rk4();
  bad.b[0] += 0.01;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = ButcherTableau::rk4();
  bad.a(0, 0) = 0.1;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(CgStep, ZeroFieldAtRestIsStationary) {
  FreeState s;
  s.g.R = exp_so3(Vec3(0.3, 0.2, 0.1));
  const FreeState out = cg_step(s, 0.0, 0.01, zero_field(), ButcherTableau::cg4());
  EXPECT_EQ(out.x(), s.x());
  EXPECT_LT((out.R().matrix() - s.R().matrix()).norm(), 1e-16);
  EXPECT_EQ(out.v(), s.v());
  EXPECT_EQ(out.Omega(), s.Omega());
}

TEST(CgStep, ConstantVelocityIsExact) {
  const FreeState s = spinning();
  for (double h : {1e-3, 0.1, 1.0}) {
    const FreeState out = cg_step(s, 0.0, h, zero_field(), ButcherTableau::cg4());
    const Mat3 exact = s.R().matrix() * exp_so3(h * s.Omega()).matrix();
    EXPECT_LT((out.R().matrix() - exact).norm(), 1e-14);
    EXPECT_LT((out.x() - (s.x() + h * s.v())).norm(), 1e-14);
  }
}

TEST(CgStep, StaysOnGroupForAnyStep) {
  // A strongly nonlinear field; the rotation must stay orthogonal whatever h is.
  const VectorField f = [](double t, const Vec3& x, const Mat3& R, const Vec3& v, const Vec3& W) {
    Vec6 out;
    out << -x - 0.3 * v + R.col(2), Vec3(std::sin(3 * t), 2.0, -1.0) + W.cross(R.row(0).transpose()) * 5.0;
    return out;
  };
  FreeState s = spinning();
  for (double h : {1e-3, 0.05, 0.5, 2.0}) {
    FreeState q = s;
    for (int k = 0; k < 50; ++k) q = cg_step(q, k * h, h, f, ButcherTableau::cg4());
    EXPECT_LE(orthogonality_error(q.R().matrix()), 1e-12) << "h = " << h;
  }
}

TEST(FlatStep, ZeroFieldAndLinearDecay) {
  const FlatState s0 = FlatState::from(FreeState{});
  const FlatState s1 = rk4_step(s0, 0.0, 0.1, zero_field());
  EXPECT_EQ(s1.R, s0.R);
  EXPECT_EQ(s1.v, s0.v);

  // vdot = lambda v: one RK4 step has local error O(h^5)
  const double lambda = -2.0;
  const VectorField f = [lambda](double, const Vec3&, const Mat3&, const Vec3& v, const Vec3&) {
    Vec6 out;
    out << lambda * v, Vec3::Zero();
    return out;
  };
  FlatState s = FlatState::from(FreeState{});
  s.v = Vec3(1.0, 0.0, 0.0);
  double prev = 0.0;
  for (double h : {0.1, 0.05, 0.025}) {
    const double err = std::abs(rk4_step(s, 0.0, h, f).v.x() - std::exp(lambda * h));
    if (prev > 0.0) EXPECT_NEAR(std::log2(prev / err), 5.0, 0.15);
    prev = err;
  }
}

TEST(OrderTest, MeasuredOrders) {
  const OrderResult cg = order_test(ButcherTableau::cg4());
  EXPECT_GE(cg.order, 3.7);
  EXPECT_LE(cg.order, 4.3);
  const OrderResult le = order_test(ButcherTableau::lie_euler());
  EXPECT_GE(le.order, 0.8);
  EXPECT_LE(le.order, 1.2);
  const OrderResult rk = order_test(ButcherTableau::rk4(), true);
  EXPECT_GE(rk.order, 3.7);
  EXPECT_LE(rk.order, 4.3);
}

TEST(Simulate, LengthAndOrbitFixedPoint) {
  const ReferenceOrbit& orbit = fwuav::testing::desk_orbit();
  const Dynamics& dyn = fwuav::testing::desk_dynamics();
  const Vec12 W_x = CostWeights::defaults().W_x;
  SimOptions so;
  const Trajectory tr = simulate(dyn, orbit.initial(), 5, zero_controller(dyn.period()), so);
  ASSERT_FALSE(tr.failed);
  EXPECT_EQ(tr.states.size(), 5u * so.steps_per_period + 1);
  EXPECT_EQ(tr.times.size(), tr.states.size());
  for (std::size_t k = 1; k < tr.times.size(); ++k) ASSERT_GT(tr.times[k], tr.times[k - 1]);
  for (int p = 1; p <= 5; ++p) {
    const FreeState& s = tr.states[p * so.steps_per_period];
    EXPECT_LE(weighted_norm(state_error(s, orbit.initial()), W_x), 1e-6) << "period " << p;
  }
  std::ostringstream os;
  tr.write_csv(os);
  std::string header;
  std::getline(std::istringstream(os.str()) >> std::ws, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 19);
}

TEST(Simulate, ControllerQueriedEachPeriod) {
  const Dynamics& dyn = fwuav::testing::desk_dynamics();
  std::vector<int> calls;
  const Controller c = [&](int k, double, const FreeState&) {
    calls.push_back(k);
    return ControlSchedule(dyn.period());
  };
  SimOptions so;
  so.steps_per_period = 50;
  so.record_stride = 50;
  const Trajectory tr = simulate(dyn, fwuav::testing::desk_orbit().initial(), 3, c, so);
  EXPECT_EQ(calls, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(tr.states.size(), 4u);
  EXPECT_EQ(tr.schedules.size(), 3u);
}

TEST(Orthogonality, GroupBeatsFlat) {
  const Dynamics& dyn = fwuav::testing::desk_dynamics();
  const OrthogonalityComparison r =
      orthogonality_comparison(dyn, fwuav::testing::desk_orbit().initial(), 2, 200);
  EXPECT_EQ(r.times.size(), 401u);
  EXPECT_LE(r.group_max(), 1e-12);
  EXPECT_GT(r.flat_max(), 100.0 * r.group_max());
}
