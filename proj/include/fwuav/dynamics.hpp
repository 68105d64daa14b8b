#pragma once

#include <string>

#include "fwuav/liegroup.hpp"
#include "fwuav/wingkin.hpp"

namespace fwuav {

/// Translational quasi-steady coefficients:
/// C_L(a) = cl_max sin 2a, C_D(a) = cd_0 + cd_k (1 - cos 2a).
struct AeroCoefficients {
  double cl_max = 1.8;
  double cd_0 = 0.4;
  double cd_k = 1.5;
  bool operator==(const AeroCoefficients&) const = default;
};

/// Mass and geometry of the thorax + two wings model. Right-wing quantities are
/// given; the left wing is their mirror image under diag(1, -1, 1).
struct Morphology {
  double m_body = 4.0e-4;                                   // kg
  Mat3 I_body = Vec3(7.2e-9, 9.5e-8, 9.5e-8).asDiagonal();  // kg m^2, about the body CoM
  double m_wing = 5.0e-5;                                   // kg, each
  Mat3 I_wing = Vec3(1.04e-8, 3.75e-9, 1.42e-8).asDiagonal();  // about the wing CoM, wing frame
  Vec3 mu_right = Vec3(0.0, 0.003, 0.002);     // wing root in the body frame (m)
  Vec3 nu_right = Vec3(-0.012, 0.02, 0.0);     // wing CoM in the right wing frame (m)
  double wing_length = 0.05;                   // root to tip (m)
  double chord = 0.03;                         // mean chord (m)
  double ac_fraction = 0.25;                   // aero center, fraction of chord behind the root line
  int n_strips = 10;
  double rho = 1.225;                          // kg/m^3
  double gravity = 9.81;                       // m/s^2
  AeroCoefficients aero;

  double total_mass() const { return m_body + 2.0 * m_wing; }
  /// Tip-to-tip span with the wings spread flat.
  double span() const { return 2.0 * (mu_right.y() + wing_length); }
  Vec3 mu(WingSide side) const;
  Vec3 nu(WingSide side) const;
  Mat3 I_w(WingSide side) const;

  /// Throws DomainError when masses, inertia tensors or geometry are invalid.
  void validate() const;
  /// Stable hexadecimal digest of every field.
  std::string hash() const;
  bool operator==(const Morphology&) const = default;
};

/// Configuration (x, R) and velocity (xdot, Omega) of the thorax.
struct FreeState {
  GroupElement g;
  Twist xi;

  const Vec3& x() const { return g.x; }
  const Rotation& R() const { return g.R; }
  const Vec3& v() const { return xi.v; }
  const Vec3& Omega() const { return xi.w; }
};

/// Prescribed wing attitudes, angular velocities and accelerations.
struct WingState {
  WingMotion right;
  WingMotion left;

  const WingMotion& operator[](WingSide s) const { return s == WingSide::Right ? right : left; }
  Vec6 xi2() const;
  Vec6 xi2_dot() const;
};

WingState wing_state_at(double t, const WingPair& params);

/// Kinetic-energy metric J(g) for xi = (xdot, Omega, Omega_R, Omega_L) and its
/// time derivative L = dJ/dt along the motion.
struct InertiaBlocks {
  Mat12 J;
  Mat12 L;

  Mat6 J11() const { return J.topLeftCorner<6, 6>(); }
  Mat6 J12() const { return J.topRightCorner<6, 6>(); }
  Mat6 J21() const { return J.bottomLeftCorner<6, 6>(); }
  Mat6 J22() const { return J.bottomRightCorner<6, 6>(); }
  Mat6 L11() const { return L.topLeftCorner<6, 6>(); }
  Mat6 L12() const { return L.topRightCorner<6, 6>(); }
  Mat6 L21() const { return L.bottomLeftCorner<6, 6>(); }
  Mat6 L22() const { return L.bottomRightCorner<6, 6>(); }
};

/// R is taken as a raw matrix so that non-orthogonal integrators can be compared.
InertiaBlocks inertia_blocks(const Mat3& R, const Vec3& Omega, const WingState& wings,
                             const Morphology& m);
InertiaBlocks inertia_blocks(const FreeState& s, const WingState& wings, const Morphology& m);

/// Generalized forces split as in the reduced equations: `body` holds the force
/// transmitted to the thorax (inertial frame) and its moment about the thorax CoM
/// (body frame); `wings` holds each wing's moment about its root (wing frame).
struct Wrench {
  Vec6 body = Vec6::Zero();
  Vec6 wings = Vec6::Zero();

  Wrench& operator+=(const Wrench& o) {
    body += o.body;
    wings += o.wings;
    return *this;
  }
};

Wrench aero_wrench(const Mat3& R, const Vec3& v, const Vec3& Omega, const WingState& wings,
                   const Morphology& m, double* aero_power = nullptr);
Wrench aero_wrench(const FreeState& s, const WingState& wings, const Morphology& m);

Wrench gravity_wrench(const Mat3& R, const WingState& wings, const Morphology& m);
Wrench gravity_wrench(const FreeState& s, const WingState& wings, const Morphology& m);

/// C = [[0, 0], [-Q_R, -Q_L]]; -C maps wing-root moments onto the thorax.
Mat6 coupling_matrix(const Rotation& QR, const Rotation& QL);

struct DynamicsOptions {
  bool aero = true;
  bool gravity = true;
  double delta_max = kDefaultDeltaMax;
  double max_condition = 1e12;
};

/// Time derivative of the thorax velocity and diagnostics for one evaluation.
struct RhsResult {
  Vec6 xi1_dot;
  Vec6 joint_torque;   // wing-row generalized force needed to enforce the prescribed motion
  double aero_power = 0.0;
};

/// Raw evaluation of the reduced Euler-Lagrange equations for prescribed wings.
RhsResult eom_evaluate(const Mat3& R, const Vec3& v, const Vec3& Omega, const WingState& wings,
                       const Morphology& m, const DynamicsOptions& opts);

/// Reduced equations with wings driven by apply_delta(p_ref, schedule(t mod duration)).
/// Throws NumericError when the mass matrix is near-singular.
Vec6 eom_rhs(double t, const FreeState& state, const ControlSchedule& schedule,
             const WingPair& p_ref, const Morphology& m, const DynamicsOptions& opts = {});

/// Bundles the model so that integrators can call it as a vector field.
class Dynamics {
 public:
  Dynamics(Morphology m, WingPair reference, DynamicsOptions opts = {});

  const Morphology& morphology() const { return m_; }
  const WingPair& reference() const { return ref_; }
  const DynamicsOptions& options() const { return opts_; }
  double period() const { return ref_.right.period(); }

  /// Wing state at absolute time t, with schedule local time t - t0.
  WingState wings(double t, const ControlSchedule& schedule, double t0 = 0.0) const;
  RhsResult evaluate(double t, const Mat3& R, const Vec3& v, const Vec3& Omega,
                     const ControlSchedule& schedule, double t0 = 0.0) const;
  Vec6 rhs(double t, const FreeState& s, const ControlSchedule& schedule, double t0 = 0.0) const;

  /// Total mechanical energy of the three bodies; the potential term only when gravity is on.
  double energy(const FreeState& s, const WingState& wings) const;
  /// Linear momentum of the three bodies (inertial frame).
  Vec3 linear_momentum(const FreeState& s, const WingState& wings) const;

 private:
  Morphology m_;
  WingPair ref_;
  DynamicsOptions opts_;
};

}  // namespace fwuav
