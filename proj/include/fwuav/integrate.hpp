#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fwuav/dynamics.hpp"

namespace fwuav {

/// Explicit Runge-Kutta coefficients shared by the Lie-group and flat integrators.
struct ButcherTableau {
  std::string name;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  int order = 0;

  int stages() const { return static_cast<int>(b.size()); }
  /// Throws DomainError unless a is strictly lower triangular, sum(b) = 1 and c = row sums of a.
  void validate() const;
  /// FNV-1a digest over the coefficient bits.
  std::string checksum() const;

  /// Five-stage, fourth-order Crouch-Grossman coefficients.
  static ButcherTableau cg4();
  static ButcherTableau lie_euler();
  static ButcherTableau rk4();
};

/// Vector field on the velocity part: returns xi1_dot = (xddot, Omega_dot) at (t, x, R, xdot, Omega).
/// R may be non-orthogonal when called from the flat integrator.
using VectorField =
    std::function<Vec6(double t, const Vec3& x, const Mat3& R, const Vec3& v, const Vec3& Omega)>;

/// Vector field of the controlled model under a fixed schedule that starts at t0.
VectorField make_field(const Dynamics& dyn, const ControlSchedule& schedule, double t0);

/// One Crouch-Grossman step. The rotation is advanced by products of exponentials only.
FreeState cg_step(const FreeState& s, double t, double h, const VectorField& f,
                  const ButcherTableau& tab);

/// Free state with an unconstrained 3x3 attitude matrix.
struct FlatState {
  Vec3 x = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 Omega = Vec3::Zero();

  static FlatState from(const FreeState& s) { return {s.x(), s.R().matrix(), s.v(), s.Omega()}; }
};

/// Explicit Runge-Kutta step on the flattened state with Rdot = R Omega^; no re-projection.
FlatState rk_flat_step(const FlatState& s, double t, double h, const VectorField& f,
                       const ButcherTableau& tab);
inline FlatState rk4_step(const FlatState& s, double t, double h, const VectorField& f) {
  return rk_flat_step(s, t, h, f, ButcherTableau::rk4());
}

struct Trajectory {
  std::vector<double> times;
  std::vector<FreeState> states;
  std::vector<ControlSchedule> schedules;  // one per period, as applied
  std::vector<double> errors;              // optional weighted error per recorded state
  double h = 0.0;
  int stride = 1;                          // integration steps between recorded states
  std::string method;
  std::string morphology_hash;
  bool failed = false;
  std::string failure;

  /// CSV with columns t, x(3), R(9, row-major), xdot(3), Omega(3), err.
  void write_csv(std::ostream& os) const;
};

/// Called at each period boundary with the period index, time and state; returns
/// the one-period schedule to apply next.
using Controller = std::function<ControlSchedule(int period, double t, const FreeState& s)>;

/// A controller that always returns the zero schedule.
Controller zero_controller(double period);

struct SimOptions {
  int steps_per_period = 500;
  int record_stride = 1;   // record every k-th step (period boundaries always land on a record)
  ButcherTableau tableau = ButcherTableau::cg4();
};

/// Integrates n_periods flapping periods from `initial` at time t0, querying the
/// controller at every period boundary. A NumericError stops the run and returns
/// the partial trajectory with `failed` set.
Trajectory simulate(const Dynamics& dyn, const FreeState& initial, int n_periods,
                    const Controller& controller, const SimOptions& opts = {}, double t0 = 0.0);

/// State after n_periods with a fixed multi-period schedule; the cheap path used by optimizers.
/// `samples` receives the states at every schedule knot (index 0 is the initial state).
FreeState rollout(const Dynamics& dyn, const FreeState& initial, const ControlSchedule& schedule,
                  int steps_per_period, std::vector<FreeState>* samples = nullptr,
                  const ButcherTableau& tab = ButcherTableau::cg4());

/// Result of a step-halving convergence study.
struct OrderResult {
  std::vector<double> steps;
  std::vector<double> errors;
  double order = 0.0;   // least-squares slope of log2(error) against log2(h)
};

/// Measures the convergence order of `tab` on a smooth nonlinear test problem on
/// R^3 x SO(3). flat = true runs the flattened integrator instead of the group one.
OrderResult order_test(const ButcherTableau& tab, bool flat = false);

/// Orthogonality error ||R^T R - I||_F of the group and flat integrators side by side.
struct OrthogonalityComparison {
  std::vector<double> times;
  std::vector<double> group;  // Crouch-Grossman
  std::vector<double> flat;   // unprojected RK4

  double group_max() const;
  double flat_max() const;
  /// CSV with columns t, cg, rk4.
  void write_csv(std::ostream& os) const;
};

/// Integrates the uncontrolled model from `initial` with both integrators and records
/// the orthogonality error after every step. The flat run stops recording on
/// non-finite values.
OrthogonalityComparison orthogonality_comparison(const Dynamics& dyn, const FreeState& initial,
                                                 int n_periods, int steps_per_period = 500);

}  // namespace fwuav
