#include "fwuav/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <iomanip>

#include "fwuav/errors.hpp"

namespace fwuav {

namespace {

const Mat3 kMirror = Vec3(1.0, -1.0, 1.0).asDiagonal();

constexpr std::array<WingSide, 2> kSides{WingSide::Right, WingSide::Left};

int offset(WingSide s) { return s == WingSide::Right ? 0 : 3; }

bool is_spd(const Mat3& A) {
  if ((A - A.transpose()).norm() > 1e-12 * (1.0 + A.norm())) return false;
  Eigen::SelfAdjointEigenSolver<Mat3> es(A);
  return es.eigenvalues().minCoeff() > 0.0;
}

// Quantities of one wing that several terms share.
struct WingKin {
  Mat3 Q;
  Vec3 Ow;     // relative angular velocity, wing frame
  Vec3 mu;
  Vec3 nu;
  Mat3 Iw;
  Vec3 r;      // wing CoM in the body frame
  Vec3 rdot;   // its rate relative to the body
};

WingKin wing_kin(const WingMotion& w, WingSide side, const Morphology& m) {
  WingKin k;
  k.Q = w.Q.matrix();
  k.Ow = w.omega;
  k.mu = m.mu(side);
  k.nu = m.nu(side);
  k.Iw = m.I_w(side);
  k.r = k.mu + k.Q * k.nu;
  k.rdot = k.Q * k.Ow.cross(k.nu);
  return k;
}

Vec12 stack(const Vec3& v, const Vec3& Omega, const WingState& w) {
  Vec12 xi;
  xi << v, Omega, w.right.omega, w.left.omega;
  return xi;
}

}  // namespace

Vec3 Morphology::mu(WingSide side) const {
  return side == WingSide::Right ? mu_right : Vec3(kMirror * mu_right);
}

Vec3 Morphology::nu(WingSide side) const {
  return side == WingSide::Right ? nu_right : Vec3(kMirror * nu_right);
}

Mat3 Morphology::I_w(WingSide side) const {
  return side == WingSide::Right ? I_wing : Mat3(kMirror * I_wing * kMirror);
}

void Morphology::validate() const {
  auto fail = [](const std::string& what) { throw DomainError("Morphology: " + what); };
  if (!(m_body > 0.0)) fail("body mass must be positive");
  if (!(m_wing > 0.0)) fail("wing mass must be positive");
  if (!is_spd(I_body)) fail("body inertia must be symmetric positive definite");
  if (!is_spd(I_wing)) fail("wing inertia must be symmetric positive definite");
  if (!(wing_length > 0.0) || !(chord > 0.0)) fail("wing length and chord must be positive");
  if (!(ac_fraction >= 0.0 && ac_fraction <= 1.0)) fail("ac_fraction must lie in [0, 1]");
  if (n_strips < 1) fail("need at least one blade element");
  if (!(rho >= 0.0) || !(gravity >= 0.0)) fail("rho and gravity must be non-negative");
  if (!mu_right.allFinite() || !nu_right.allFinite()) fail("non-finite offsets");
}

std::string Morphology::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(m_body);
  mix(m_wing);
  for (int i = 0; i < 9; ++i) mix(I_body(i));
  for (int i = 0; i < 9; ++i) mix(I_wing(i));
  for (int i = 0; i < 3; ++i) mix(mu_right(i));
  for (int i = 0; i < 3; ++i) mix(nu_right(i));
  for (double v : {wing_length, chord, ac_fraction, static_cast<double>(n_strips), rho, gravity,
                   aero.cl_max, aero.cd_0, aero.cd_k}) {
    mix(v);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Vec6 WingState::xi2() const {
  Vec6 out;
  out << right.omega, left.omega;
  return out;
}

Vec6 WingState::xi2_dot() const {
  Vec6 out;
  out << right.omega_dot, left.omega_dot;
  return out;
}

WingState wing_state_at(double t, const WingPair& params) {
  return {wing_velocity_accel(t, params.right, WingSide::Right),
          wing_velocity_accel(t, params.left, WingSide::Left)};
}

InertiaBlocks inertia_blocks(const Mat3& R, const Vec3& Omega, const WingState& wings,
                             const Morphology& m) {
  InertiaBlocks b;
  b.J.setZero();
  b.L.setZero();
  const double mw = m.m_wing;
  const Mat3 Oh = hat(Omega);
  b.J.block<3, 3>(0, 0) = m.total_mass() * Mat3::Identity();
  b.J.block<3, 3>(3, 3) = m.I_body;
  for (WingSide s : kSides) {
    const WingKin k = wing_kin(wings[s], s, m);
    const int c = 6 + offset(s);
    const Mat3 rh = hat(k.r);
    const Mat3 rdh = hat(k.rdot);
    const Mat3 nh = hat(k.nu);
    const Mat3 Owh = hat(k.Ow);
    const Mat3 Qnh = k.Q * nh;

    const Mat3 Jxo = -mw * R * rh;
    const Mat3 Jxw = -mw * R * Qnh;
    const Mat3 Joo = mw * rh.transpose() * rh + k.Q * k.Iw * k.Q.transpose();
    const Mat3 Jow = mw * rh.transpose() * Qnh + k.Q * k.Iw;
    const Mat3 Jww = mw * nh.transpose() * nh + k.Iw;

    const Mat3 Lxo = -mw * (R * Oh * rh + R * rdh);
    const Mat3 Lxw = -mw * (R * Oh * Qnh + R * k.Q * Owh * nh);
    const Mat3 Loo = mw * (rdh.transpose() * rh + rh.transpose() * rdh) +
                     k.Q * (Owh * k.Iw - k.Iw * Owh) * k.Q.transpose();
    const Mat3 Low = mw * (rdh.transpose() * Qnh + rh.transpose() * k.Q * Owh * nh) +
                     k.Q * Owh * k.Iw;

    b.J.block<3, 3>(0, 3) += Jxo;
    b.J.block<3, 3>(3, 0) += Jxo.transpose();
    b.J.block<3, 3>(0, c) = Jxw;
    b.J.block<3, 3>(c, 0) = Jxw.transpose();
    b.J.block<3, 3>(3, 3) += Joo;
    b.J.block<3, 3>(3, c) = Jow;
    b.J.block<3, 3>(c, 3) = Jow.transpose();
    b.J.block<3, 3>(c, c) = Jww;

    b.L.block<3, 3>(0, 3) += Lxo;
    b.L.block<3, 3>(3, 0) += Lxo.transpose();
    b.L.block<3, 3>(0, c) = Lxw;
    b.L.block<3, 3>(c, 0) = Lxw.transpose();
    b.L.block<3, 3>(3, 3) += Loo;
    b.L.block<3, 3>(3, c) = Low;
    b.L.block<3, 3>(c, 3) = Low.transpose();
  }
  return b;
}

InertiaBlocks inertia_blocks(const FreeState& s, const WingState& wings, const Morphology& m) {
  return inertia_blocks(s.R().matrix(), s.Omega(), wings, m);
}

Wrench aero_wrench(const Mat3& R, const Vec3& v, const Vec3& Omega, const WingState& wings,
                   const Morphology& m, double* aero_power) {
  Wrench out;
  double power = 0.0;
  const int n = m.n_strips;
  const double dy = m.wing_length / n;
  const double dA = m.chord * dy;
  const Vec3 v_body = R.transpose() * v;
  for (WingSide s : kSides) {
    const WingMotion& w = wings[s];
    const Mat3& Q = w.Q.matrix();
    const Vec3 mu = m.mu(s);
    const double side = s == WingSide::Right ? 1.0 : -1.0;
    const Vec3 omega = Q.transpose() * Omega + w.omega;
    const Vec3 u_root = Q.transpose() * (v_body + Omega.cross(mu));
    Vec3 force_w = Vec3::Zero();   // wing frame
    Vec3 moment_w = Vec3::Zero();  // about the root, wing frame
    for (int k = 0; k < n; ++k) {
      const Vec3 rk(-m.ac_fraction * m.chord, side * (k + 0.5) * dy, 0.0);
      const Vec3 u = u_root + omega.cross(rk);
      const double wc = -u.x();
      const double wn = -u.z();
      const double w2 = wc * wc + wn * wn;
      if (w2 <= 0.0) continue;
      const double wmag = std::sqrt(w2);
      const double sin2a = 2.0 * wn * wc / w2;
      const double cos2a = (wc * wc - wn * wn) / w2;
      const double cd = m.aero.cd_0 + m.aero.cd_k * (1.0 - cos2a);
      const double cl = m.aero.cl_max * sin2a;
      const double scale = 0.5 * m.rho * w2 * dA / wmag;
      const Vec3 F = scale * Vec3(cd * wc - cl * wn, 0.0, cd * wn + cl * wc);
      force_w += F;
      moment_w += rk.cross(F);
      power -= F.dot(u);
    }
    const Vec3 force_b = Q * force_w;
    out.body.head<3>() += R * force_b;
    out.body.tail<3>() += mu.cross(force_b);
    out.wings.segment<3>(offset(s)) = moment_w;
  }
  if (aero_power) *aero_power = power;
  return out;
}

Wrench aero_wrench(const FreeState& s, const WingState& wings, const Morphology& m) {
  return aero_wrench(s.R().matrix(), s.v(), s.Omega(), wings, m);
}

Wrench gravity_wrench(const Mat3& R, const WingState& wings, const Morphology& m) {
  Wrench out;
  const Vec3 down(0.0, 0.0, -m.gravity);
  out.body.head<3>() = m.total_mass() * down;
  const Vec3 gw_body = R.transpose() * (m.m_wing * down);
  for (WingSide s : kSides) {
    out.body.tail<3>() += m.mu(s).cross(gw_body);
    out.wings.segment<3>(offset(s)) =
        m.nu(s).cross(wings[s].Q.matrix().transpose() * gw_body);
  }
  return out;
}

Wrench gravity_wrench(const FreeState& s, const WingState& wings, const Morphology& m) {
  return gravity_wrench(s.R().matrix(), wings, m);
}

Mat6 coupling_matrix(const Rotation& QR, const Rotation& QL) {
  Mat6 C = Mat6::Zero();
  C.block<3, 3>(3, 0) = -QR.matrix();
  C.block<3, 3>(3, 3) = -QL.matrix();
  return C;
}

RhsResult eom_evaluate(const Mat3& R, const Vec3& v, const Vec3& Omega, const WingState& wings,
                       const Morphology& m, const DynamicsOptions& opts) {
  const InertiaBlocks ib = inertia_blocks(R, Omega, wings, m);
  const Vec12 xi = stack(v, Omega, wings);
  const Vec12 p = ib.J * xi;
  const Vec12 Lxi = ib.L * xi;

  Wrench f;
  RhsResult out;
  if (opts.aero) f += aero_wrench(R, v, Omega, wings, m, &out.aero_power);
  if (opts.gravity) f += gravity_wrench(R, wings, m);

  // d(T)/dR and d(T)/dQ_w in left-trivialized form
  Vec3 A = Vec3::Zero();
  Vec6 dTdQ = Vec6::Zero();
  const Vec3 v_body = R.transpose() * v;
  for (WingSide s : kSides) {
    const WingKin k = wing_kin(wings[s], s, m);
    const Vec3 a = -k.r.cross(Omega) - k.Q * k.nu.cross(k.Ow);
    A += m.m_wing * a;
    const Vec3 vw = v_body + a;  // wing CoM velocity, body frame
    const Vec3 QtO = k.Q.transpose() * Omega;
    const Vec3 omega = QtO + k.Ow;
    dTdQ.segment<3>(offset(s)) =
        m.m_wing * (-hat(k.nu) * k.Q.transpose() * hat(Omega) - hat(k.nu.cross(k.Ow)) *
                                                                     k.Q.transpose()) *
            vw -
        hat(QtO) * k.Iw * omega;
  }
  const Vec3 dTdR = A.cross(v_body);

  const Mat6 C = coupling_matrix(wings.right.Q, wings.left.Q);
  const Vec6 xi2_dot = wings.xi2_dot();

  Vec6 rhs1 = f.body - C * f.wings - ib.J12() * xi2_dot - Lxi.head<6>();
  rhs1.tail<3>() += dTdR - Omega.cross(p.segment<3>(3));

  const Mat6 J11 = ib.J11();
  Eigen::LDLT<Mat6> ldlt(J11);
  const double rcond = ldlt.rcond();
  if (ldlt.info() != Eigen::Success || !(rcond * opts.max_condition >= 1.0)) {
    std::ostringstream os;
    os << "eom: reduced mass matrix is near-singular (rcond " << rcond << ")";
    throw NumericError(os.str());
  }
  out.xi1_dot = ldlt.solve(rhs1);

  Vec12 xi_dot;
  xi_dot << out.xi1_dot, xi2_dot;
  const Vec12 Jxd = ib.J * xi_dot;
  for (WingSide s : kSides) {
    const int o = offset(s);
    const Vec3 Ow = wings[s].omega;
    out.joint_torque.segment<3>(o) = Jxd.segment<3>(6 + o) + Lxi.segment<3>(6 + o) +
                                     Ow.cross(p.segment<3>(6 + o)) - dTdQ.segment<3>(o) -
                                     f.wings.segment<3>(o);
  }
  if (!out.xi1_dot.allFinite()) throw NumericError("eom: non-finite acceleration");
  return out;
}

Vec6 eom_rhs(double t, const FreeState& state, const ControlSchedule& schedule,
             const WingPair& p_ref, const Morphology& m, const DynamicsOptions& opts) {
  Dynamics dyn(m, p_ref, opts);
  const double local = std::fmod(t, schedule.duration());
  return dyn.rhs(local < 0.0 ? local + schedule.duration() : local, state, schedule);
}

Dynamics::Dynamics(Morphology m, WingPair reference, DynamicsOptions opts)
    : m_(std::move(m)), ref_(reference), opts_(opts) {
  m_.validate();
  ref_.right.validate();
  ref_.left.validate();
  if (ref_.right.f != ref_.left.f) throw DomainError("Dynamics: wings must share a frequency");
}

WingState Dynamics::wings(double t, const ControlSchedule& schedule, double t0) const {
  const double local = std::clamp(t - t0, 0.0, schedule.duration());
  const WingPair p = apply_delta(ref_, schedule.eval(local), opts_.delta_max);
  const double T = period();
  double phase = std::fmod(t, T);
  if (phase < 0.0) phase += T;
  return wing_state_at(phase, p);
}

RhsResult Dynamics::evaluate(double t, const Mat3& R, const Vec3& v, const Vec3& Omega,
                             const ControlSchedule& schedule, double t0) const {
  try {
    return eom_evaluate(R, v, Omega, wings(t, schedule, t0), m_, opts_);
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << e.what() << " at t = " << t << ", Omega = [" << Omega.transpose() << "]";
    throw NumericError(os.str());
  }
}

Vec6 Dynamics::rhs(double t, const FreeState& s, const ControlSchedule& schedule,
                   double t0) const {
  return evaluate(t, s.R().matrix(), s.v(), s.Omega(), schedule, t0).xi1_dot;
}

double Dynamics::energy(const FreeState& s, const WingState& w) const {
  const InertiaBlocks ib = inertia_blocks(s, w, m_);
  const Vec12 xi = stack(s.v(), s.Omega(), w);
  if (!opts_.gravity) return 0.5 * xi.dot(ib.J * xi);
  double V = m_.m_body * m_.gravity * s.x().z();
  for (WingSide side : kSides) {
    const Vec3 r = m_.mu(side) + w[side].Q.matrix() * m_.nu(side);
    V += m_.m_wing * m_.gravity * (s.x() + s.R().matrix() * r).z();
  }
  return 0.5 * xi.dot(ib.J * xi) + V;
}

Vec3 Dynamics::linear_momentum(const FreeState& s, const WingState& w) const {
  const InertiaBlocks ib = inertia_blocks(s, w, m_);
  return (ib.J * stack(s.v(), s.Omega(), w)).head<3>();
}

}  // namespace fwuav
