#include "fwuav/wingkin.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fwuav/errors.hpp"

namespace fwuav {

void WingParams::validate() const {
  auto fail = [](const std::string& what) { throw DomainError("WingParams: " + what); };
  if (!(f > 0.0) || !std::isfinite(f)) fail("frequency must be positive");
  if (!(phi_K > 0.0 && phi_K <= 1.0)) fail("phi_K must lie in (0, 1]");
  if (!(theta_C > 0.0) || !std::isfinite(theta_C)) fail("theta_C must be positive");
  if (!(theta_a > -M_PI && theta_a < M_PI)) fail("theta_a must lie in (-pi, pi)");
  if (!(psi_a > -M_PI && psi_a < M_PI)) fail("psi_a must lie in (-pi, pi)");
  if (psi_N < 1) fail("psi_N must be a positive integer");
  for (double v : {phi_m, phi_0, theta_m, theta_0, psi_m, psi_0, beta}) {
    if (!std::isfinite(v)) fail("non-finite waveform parameter");
  }
}

AngleState flap_angle(double t, const WingParams& p) {
  const double w = 2.0 * M_PI * p.f;
  const double amp = p.phi_m / std::asin(p.phi_K);
  const double c = std::cos(w * t), s = std::sin(w * t);
  const double arg = p.phi_K * c;
  AngleState out;
  out.value = amp * std::asin(arg) + p.phi_0;
  const double one_minus = 1.0 - arg * arg;
  if (one_minus <= 0.0) return out;  // phi_K = 1 at a turning point: kink, rates set to zero
  const double d = 1.0 / std::sqrt(one_minus);
  const double u = -p.phi_K * w * s;      // d(arg)/dt
  const double du = -p.phi_K * w * w * c;  // d^2(arg)/dt^2
  out.rate = amp * u * d;
  out.accel = amp * (du * d + u * u * arg * d * d * d);
  return out;
}

AngleState pitch_angle(double t, const WingParams& p) {
  const double w = 2.0 * M_PI * p.f;
  const double amp = p.theta_m / std::tanh(p.theta_C);
  const double phase = w * t + p.theta_a;
  const double z = p.theta_C * std::sin(phase);
  const double dz = p.theta_C * w * std::cos(phase);
  const double ddz = -p.theta_C * w * w * std::sin(phase);
  const double th = std::tanh(z);
  const double sech2 = 1.0 - th * th;
  return {amp * th + p.theta_0, amp * sech2 * dz, amp * (sech2 * ddz - 2.0 * th * sech2 * dz * dz)};
}

AngleState deviation_angle(double t, const WingParams& p) {
  const double w = 2.0 * M_PI * p.psi_N * p.f;
  const double phase = w * t + p.psi_a;
  return {p.psi_m * std::cos(phase) + p.psi_0, -p.psi_m * w * std::sin(phase),
          -p.psi_m * w * w * std::cos(phase)};
}

namespace {

struct Factor {
  int axis;
  AngleState angle;
};

// Attitude, body angular velocity and acceleration of exp(q1 e_a1^)...exp(qn e_an^).
WingMotion compose(const std::array<Factor, 4>& factors) {
  Mat3 tail = Mat3::Identity();  // product of the factors after the current one
  Vec3 omega = Vec3::Zero();
  Vec3 omega_dot = Vec3::Zero();
  for (int k = static_cast<int>(factors.size()) - 1; k >= 0; --k) {
    const Factor& fk = factors[k];
    const Vec3 v = tail.transpose().col(fk.axis);
    omega_dot += fk.angle.accel * v - fk.angle.rate * omega.cross(v);
    omega += fk.angle.rate * v;
    tail = exp_so3_matrix(fk.angle.value * Vec3::Unit(fk.axis)) * tail;
  }
  return {Rotation(tail), omega, omega_dot};
}

AngleState negate(const AngleState& a) { return {-a.value, -a.rate, -a.accel}; }

}  // namespace

Rotation wing_attitude(double phi, double psi, double theta, double beta, WingSide side) {
  const double sign = side == WingSide::Right ? 1.0 : -1.0;
  return compose({Factor{1, {beta, 0, 0}}, Factor{0, {sign * phi, 0, 0}},
                  Factor{2, {-sign * psi, 0, 0}}, Factor{1, {theta, 0, 0}}})
      .Q;
}

WingMotion wing_velocity_accel(double t, const WingParams& p, WingSide side) {
  AngleState phi = flap_angle(t, p);
  AngleState psi = negate(deviation_angle(t, p));
  if (side == WingSide::Left) {
    phi = negate(phi);
    psi = negate(psi);
  }
  return compose({Factor{1, {p.beta, 0, 0}}, Factor{0, phi}, Factor{2, psi},
                  Factor{1, pitch_angle(t, p)}});
}

WingPair apply_delta(const WingPair& reference, const ControlDelta& delta, double delta_max) {
  for (int i = 0; i < 6; ++i) {
    if (!std::isfinite(delta[i])) throw DomainError("apply_delta: non-finite control");
    if (std::abs(delta[i]) > delta_max * (1.0 + 1e-12)) {
      throw DomainError("apply_delta: |Delta_" + std::to_string(i) + "| = " +
                        std::to_string(std::abs(delta[i])) + " exceeds clamp " +
                        std::to_string(delta_max));
    }
  }
  WingPair out = reference;
  out.right.phi_m += delta[0] + delta[2];
  out.left.phi_m += delta[0] - delta[2];
  out.right.theta_0 += delta[1] + delta[4];
  out.left.theta_0 += delta[1] - delta[4];
  out.right.phi_0 += delta[3];
  out.left.phi_0 += delta[3];
  out.right.psi_0 += delta[5];
  out.left.psi_0 -= delta[5];
  out.right.validate();
  out.left.validate();
  return out;
}

ControlDelta extract_delta(const WingPair& reference, const WingPair& shifted) {
  auto sym = [](double r, double l) { return 0.5 * (r + l); };
  auto asym = [](double r, double l) { return 0.5 * (r - l); };
  const double dphim_r = shifted.right.phi_m - reference.right.phi_m;
  const double dphim_l = shifted.left.phi_m - reference.left.phi_m;
  const double dth0_r = shifted.right.theta_0 - reference.right.theta_0;
  const double dth0_l = shifted.left.theta_0 - reference.left.theta_0;
  const double dphi0_r = shifted.right.phi_0 - reference.right.phi_0;
  const double dphi0_l = shifted.left.phi_0 - reference.left.phi_0;
  const double dpsi0_r = shifted.right.psi_0 - reference.right.psi_0;
  const double dpsi0_l = shifted.left.psi_0 - reference.left.psi_0;
  ControlDelta d;
  d << sym(dphim_r, dphim_l), sym(dth0_r, dth0_l), asym(dphim_r, dphim_l),
      sym(dphi0_r, dphi0_l), asym(dth0_r, dth0_l), asym(dpsi0_r, dpsi0_l);
  return d;
}

ControlSchedule::ControlSchedule(double period, int n_periods)
    : period_(period), n_periods_(n_periods) {
  if (!(period > 0.0)) throw DomainError("ControlSchedule: period must be positive");
  if (n_periods < 1) throw DomainError("ControlSchedule: need at least one period");
  knots_.assign(static_cast<size_t>(n_periods * kKnotsPerPeriod + 1), ControlDelta::Zero());
}

ControlSchedule ControlSchedule::from_u(const ControlVector& u, double period, double delta_max) {
  ControlSchedule s(period, 1);
  for (int k = 1; k < kKnotsPerPeriod; ++k) {
    for (int c = 0; c < 6; ++c) {
      s.knots_[k][c] = std::clamp(u[c * kKnotsPerPeriod + (k - 1)], -delta_max, delta_max);
    }
  }
  return s;
}

ControlVector ControlSchedule::to_u() const {
  ControlVector u = ControlVector::Zero();
  for (int k = 1; k < kKnotsPerPeriod; ++k) {
    for (int c = 0; c < 6; ++c) u[c * kKnotsPerPeriod + (k - 1)] = knots_[k][c];
  }
  return u;
}

void ControlSchedule::set_knot(int i, const ControlDelta& value) {
  if (i < 0 || i >= n_knots()) throw DomainError("ControlSchedule: knot index out of range");
  if (is_boundary_knot(i)) {
    throw DomainError("ControlSchedule: period-boundary knots are fixed at zero");
  }
  knots_[i] = value;
}

ControlDelta ControlSchedule::eval(double t) const {
  const double total = duration();
  const double slack = 1e-12 * total;
  if (!(t >= -slack && t <= total + slack)) {
    throw DomainError("ControlSchedule: t = " + std::to_string(t) + " outside [0, " +
                      std::to_string(total) + "]");
  }
  const double dt = period_ / kKnotsPerPeriod;
  const double pos = std::clamp(t / dt, 0.0, static_cast<double>(n_knots() - 1));
  int i = static_cast<int>(std::floor(pos));
  if (i >= n_knots() - 1) return knots_.back();
  const double frac = pos - i;
  if (frac == 0.0) return knots_[i];
  return (1.0 - frac) * knots_[i] + frac * knots_[i + 1];
}

ControlSchedule ControlSchedule::period_slice(int k) const {
  if (k < 0 || k >= n_periods_) throw DomainError("ControlSchedule: period index out of range");
  ControlSchedule s(period_, 1);
  for (int i = 0; i <= kKnotsPerPeriod; ++i) s.knots_[i] = knots_[k * kKnotsPerPeriod + i];
  return s;
}

}  // namespace fwuav
