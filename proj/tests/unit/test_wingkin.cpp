#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "fwuav/errors.hpp"
#include "fwuav/wingkin.hpp"

using namespace fwuav;

namespace {

WingParams shaped() {
  WingParams p;
  p.phi_m = 1.1;
  p.phi_0 = 0.1;
  p.phi_K = 0.7;
  p.theta_m = 0.6;
  p.theta_0 = -0.05;
  p.theta_C = 1.5;
  p.theta_a = 0.3;
  p.psi_m = 0.08;
  p.psi_0 = 0.02;
  p.psi_N = 2;
  p.psi_a = -0.4;
  p.beta = 0.2;
  return p;
}

using Waveform = std::function<AngleState(double, const WingParams&)>;

// Residual of the central difference of f' against the analytic value.
double fd_residual(const Waveform& w, const WingParams& p, double t, double h, bool second) {
  const AngleState a = w(t, p), ap = w(t + h, p), am = w(t - h, p);
  return second ? std::abs((ap.rate - am.rate) / (2 * h) - a.accel)
                : std::abs((ap.value - am.value) / (2 * h) - a.rate);
}

}  // namespace

TEST(FlapAngle, Extremes) {
  const WingParams p = shaped();
  EXPECT_NEAR(flap_angle(0.0, p).value, p.phi_m + p.phi_0, 1e-14);
  EXPECT_NEAR(flap_angle(p.period() / 2, p).value, -p.phi_m + p.phi_0, 1e-14);
  EXPECT_NEAR(flap_angle(0.0, p).rate, 0.0, 1e-12);
}

TEST(PitchAngle, Values) {
  WingParams p = shaped();
  p.theta_a = 0.0;
  EXPECT_NEAR(pitch_angle(0.0, p).value, p.theta_0, 1e-15);
  p.theta_a = M_PI / 2;
  EXPECT_NEAR(pitch_angle(0.0, p).value, p.theta_m + p.theta_0, 1e-14);
  // tanh(C s)/tanh(C) -> s as C -> 0
  p.theta_C = 1e-4;
  for (double t : {0.01, 0.03, 0.07}) {
    const double lim = p.theta_m * std::sin(2 * M_PI * p.f * t + p.theta_a) + p.theta_0;
    EXPECT_NEAR(pitch_angle(t, p).value, lim, 1e-6);
  }
}

TEST(DeviationAngle, Values) {
  WingParams p = shaped();
  p.psi_a = 0.0;
  EXPECT_NEAR(deviation_angle(0.0, p).value, p.psi_m + p.psi_0, 1e-15);
  const double dt = 1.0 / (p.psi_N * p.f);
  for (double t : {0.0, 0.013, 0.05}) {
    EXPECT_NEAR(deviation_angle(t, p).value, deviation_angle(t + dt, p).value, 1e-14);
  }
  p.psi_m = 0.0;
  for (double t : {0.0, 0.011, 0.042}) EXPECT_EQ(deviation_angle(t, p).value, p.psi_0);
}

TEST(Waveforms, Periodic) {
  const WingParams p = shaped();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double t = u(rng);
    EXPECT_NEAR(flap_angle(t, p).value, flap_angle(t + p.period(), p).value, 1e-12);
    EXPECT_NEAR(pitch_angle(t, p).value, pitch_angle(t + p.period(), p).value, 1e-12);
    EXPECT_NEAR(deviation_angle(t, p).value, deviation_angle(t + p.period(), p).value, 1e-12);
  }
}

TEST(Waveforms, DerivativesConvergeAtSecondOrder) {
  const WingParams p = shaped();
  const Waveform ws[] = {flap_angle, pitch_angle, deviation_angle};
  for (const auto& w : ws) {
    for (bool second : {false, true}) {
      for (double t : {0.007, 0.031, 0.062}) {
        const double r1 = fd_residual(w, p, t, 1e-3, second);
        const double r2 = fd_residual(w, p, t, 5e-4, second);
        EXPECT_NEAR(r1 / r2, 4.0, 0.2) << "t = " << t;
      }
    }
  }
}

TEST(WingAttitude, LimitingCases) {
  EXPECT_LT((wing_attitude(0, 0, 0, 0, WingSide::Right).matrix() - Mat3::Identity()).norm(), 1e-15);
  const Mat3 Q = wing_attitude(M_PI / 2, 0, 0, 0, WingSide::Right).matrix();
  EXPECT_LT((Q - exp_so3(Vec3(M_PI / 2, 0, 0)).matrix()).norm(), 1e-15);
}

TEST(WingAttitude, MirrorSymmetry) {
  const Mat3 M = Vec3(1, -1, 1).asDiagonal();
  const Mat3 QR = wing_attitude(0.4, 0.1, -0.2, 0.1, WingSide::Right).matrix();
  const Mat3 QL = wing_attitude(0.4, 0.1, -0.2, 0.1, WingSide::Left).matrix();
  EXPECT_LT((M * QR * M - QL).norm(), 1e-14);
}

TEST(WingVelocity, ConstantAnglesGiveZeroRates) {
  WingParams p = shaped();
  p.phi_m = p.theta_m = p.psi_m = 0.0;
  for (WingSide s : {WingSide::Right, WingSide::Left}) {
    const WingMotion w = wing_velocity_accel(0.02, p, s);
    EXPECT_LT(w.omega.norm(), 1e-15);
    EXPECT_LT(w.omega_dot.norm(), 1e-15);
  }
}

TEST(WingVelocity, MatchesFiniteDifferences) {
  const WingParams p = shaped();
  for (WingSide s : {WingSide::Right, WingSide::Left}) {
    for (double t : {0.004, 0.027, 0.06}) {
      const WingMotion w = wing_velocity_accel(t, p, s);
      double prev_w = 0.0, prev_a = 0.0;
      for (double h : {2e-4, 1e-4}) {
        const WingMotion a = wing_velocity_accel(t + h, p, s), b = wing_velocity_accel(t - h, p, s);
        const Mat3 dQ = (a.Q.matrix() - b.Q.matrix()) / (2 * h);
        const Mat3 skew = w.Q.matrix().transpose() * dQ;
        const double rw = (vee(0.5 * (skew - skew.transpose())) - w.omega).norm();
        const double ra = ((a.omega - b.omega) / (2 * h) - w.omega_dot).norm();
        if (prev_w > 0.0) {
          EXPECT_NEAR(prev_w / rw, 4.0, 0.3);
          EXPECT_NEAR(prev_a / ra, 4.0, 0.3);
        }
        prev_w = rw;
        prev_a = ra;
      }
      const WingMotion a = wing_velocity_accel(t + 1e-5, p, s), b = wing_velocity_accel(t - 1e-5, p, s);
      const Mat3 skew = w.Q.matrix().transpose() * (a.Q.matrix() - b.Q.matrix()) / 2e-5;
      EXPECT_LT((vee(0.5 * (skew - skew.transpose())) - w.omega).norm(), 1e-5 * (1 + w.omega.norm()));
    }
  }
}

TEST(ApplyDelta, ChannelAlgebra) {
  const WingPair ref = WingPair::symmetric(shaped());
  EXPECT_EQ(apply_delta(ref, ControlDelta::Zero()), ref);

  ControlDelta d = ControlDelta::Zero();
  d[0] = 0.1;
  d[2] = 0.02;
  WingPair s = apply_delta(ref, d);
  EXPECT_NEAR(s.right.phi_m - ref.right.phi_m, 0.12, 1e-15);
  EXPECT_NEAR(s.left.phi_m - ref.left.phi_m, 0.08, 1e-15);

  d.setZero();
  d[5] = 0.05;
  s = apply_delta(ref, d);
  EXPECT_NEAR(s.right.psi_0 - ref.right.psi_0, 0.05, 1e-15);
  EXPECT_NEAR(s.left.psi_0 - ref.left.psi_0, -0.05, 1e-15);
}

TEST(ApplyDelta, RoundTripAndClamp) {
  const WingPair ref = WingPair::symmetric(shaped());
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int i = 0; i < 50; ++i) {
    ControlDelta d;
    for (int k = 0; k < 6; ++k) d[k] = u(rng);
    EXPECT_LT((extract_delta(ref, apply_delta(ref, d)) - d).norm(), 1e-14);
  }
  ControlDelta big = ControlDelta::Zero();
  big[1] = 0.31;
  EXPECT_THROW(apply_delta(ref, big), DomainError);
}

TEST(Schedule, Interpolation) {
  const double T = 0.1;
  ControlSchedule s(T);
  EXPECT_EQ(s.eval(0.0), ControlDelta::Zero());
  EXPECT_EQ(s.eval(T), ControlDelta::Zero());
  ControlDelta a;
  a << 0.1, -0.2, 0.05, 0.0, 0.3, -0.1;
  // the coarse schedule [0, a, 0] on {0, T/2, T}, written on the fine knot grid
  for (int k = 1; k < kKnotsPerPeriod; ++k) s.set_knot(k, a * (1.0 - std::abs(k - 5) / 5.0));
  EXPECT_LT((s.eval(T / 4) - a / 2).norm(), 1e-15);
  EXPECT_LT((s.eval(T / 2) - a).norm(), 1e-15);
  EXPECT_LT((s.eval(0.3 * T) - 0.6 * a).norm(), 1e-15);
  EXPECT_THROW(s.eval(-1e-6), DomainError);
  EXPECT_THROW(s.eval(T * 1.001), DomainError);
  EXPECT_THROW(s.set_knot(10, a), DomainError);
}

TEST(Schedule, ULayout) {
  ControlVector u;
  for (int i = 0; i < kControlDim; ++i) u[i] = 0.001 * (i + 1);
  const ControlSchedule s = ControlSchedule::from_u(u, 0.1);
  const ControlVector back = s.to_u();
  for (int c = 0; c < 6; ++c) {
    for (int k = 1; k <= kKnotsPerPeriod; ++k) {
      const int idx = c * kKnotsPerPeriod + (k - 1);
      EXPECT_EQ(back[idx], k == kKnotsPerPeriod ? 0.0 : u[idx]);
      if (k < kKnotsPerPeriod) EXPECT_EQ(s.knot(k)[c], u[idx]);
    }
  }
}
