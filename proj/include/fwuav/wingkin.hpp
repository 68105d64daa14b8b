#pragma once

#include <array>
#include <vector>

#include "fwuav/liegroup.hpp"

namespace fwuav {

/// Waveform parameters of one wing. Angles in rad, frequency in Hz.
struct WingParams {
  double f = 11.75;
  double phi_m = 1.0;
  double phi_0 = 0.0;
  double phi_K = 0.9;
  double theta_m = 0.8;
  double theta_0 = 0.0;
  double theta_C = 2.0;
  double theta_a = 0.0;
  double psi_m = 0.05;
  double psi_0 = 0.0;
  int psi_N = 2;
  double psi_a = 0.0;
  double beta = -M_PI / 2.0;

  double period() const { return 1.0 / f; }
  /// Throws DomainError when an invariant is violated.
  void validate() const;
  bool operator==(const WingParams&) const = default;
};

struct WingPair {
  WingParams right;
  WingParams left;

  static WingPair symmetric(const WingParams& p) { return {p, p}; }
  bool operator==(const WingPair&) const = default;
};

enum class WingSide { Right, Left };

/// An angle with its first and second time derivatives.
struct AngleState {
  double value = 0.0;
  double rate = 0.0;
  double accel = 0.0;
};

AngleState flap_angle(double t, const WingParams& p);
AngleState pitch_angle(double t, const WingParams& p);
AngleState deviation_angle(double t, const WingParams& p);

/// Wing attitude relative to the body from flap, deviation and pitch angles
/// (1-3-2 sequence inside the stroke frame tilted by beta).
Rotation wing_attitude(double phi, double psi, double theta, double beta, WingSide side);

/// Attitude, body-frame angular velocity and angular acceleration of a wing.
struct WingMotion {
  Rotation Q;
  Vec3 omega = Vec3::Zero();
  Vec3 omega_dot = Vec3::Zero();
};

WingMotion wing_velocity_accel(double t, const WingParams& p, WingSide side);

/// Control deviation [dphi_m_s, dtheta_0_s, dphi_m_a, dphi_0_s, dtheta_0_a, dpsi_0_a].
using ControlDelta = Eigen::Matrix<double, 6, 1>;

inline constexpr double kDefaultDeltaMax = 0.3;

/// Shifts the reference pair by Delta. Throws DomainError if |Delta_i| exceeds
/// delta_max or the shifted parameters are invalid.
WingPair apply_delta(const WingPair& reference, const ControlDelta& delta,
                     double delta_max = kDefaultDeltaMax);

/// Symmetric/asymmetric averaging of the parameter differences (inverse of apply_delta).
ControlDelta extract_delta(const WingPair& reference, const WingPair& shifted);

/// Number of schedule intervals per flapping period.
inline constexpr int kKnotsPerPeriod = 10;
/// Length of the flat control vector u: 6 channels x knots 1..10, channel-major.
inline constexpr int kControlDim = 6 * kKnotsPerPeriod;
using ControlVector = Eigen::Matrix<double, kControlDim, 1>;
/// Layout version stamped into files that carry u vectors.
inline constexpr int kULayoutVersion = 1;

/// Piecewise-linear Delta(t) over [0, n_periods * T] with knots at i*T/N_s.
/// Knots at every period boundary are zero by construction.
class ControlSchedule {
 public:
  /// A zero schedule covering n_periods periods.
  ControlSchedule(double period, int n_periods = 1);

  /// One-period schedule from u (knot 10 ignored and forced to zero).
  /// Values are saturated to +-delta_max.
  static ControlSchedule from_u(const ControlVector& u, double period,
                                double delta_max = kDefaultDeltaMax);
  /// The u layout of the first period. Entry (c, 10) is always zero.
  ControlVector to_u() const;

  double period() const { return period_; }
  int n_periods() const { return n_periods_; }
  double duration() const { return period_ * n_periods_; }
  int n_knots() const { return static_cast<int>(knots_.size()); }

  const ControlDelta& knot(int i) const { return knots_.at(i); }
  /// Sets an interior knot. Throws DomainError for period-boundary knots.
  void set_knot(int i, const ControlDelta& value);
  bool is_boundary_knot(int i) const { return i % kKnotsPerPeriod == 0; }

  /// Delta(t) for 0 <= t <= duration(). Throws DomainError otherwise.
  ControlDelta eval(double t) const;

  /// Schedule for period k only, re-based at t = 0.
  ControlSchedule period_slice(int k) const;

 private:
  double period_;
  int n_periods_;
  std::vector<ControlDelta> knots_;
};

inline ControlDelta schedule_eval(const ControlSchedule& s, double t) { return s.eval(t); }

}  // namespace fwuav
