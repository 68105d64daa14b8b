#pragma once

#include <string>
#include <vector>

#include "fwuav/integrate.hpp"

namespace fwuav {

/// [dx, dR, dxdot, dOmega]: position, attitude, velocity and angular-velocity errors.
using StateError = Vec12;

/// Prediction horizon in schedule knots (two periods).
inline constexpr int kHorizonKnots = 2 * kKnotsPerPeriod;

struct CostWeights {
  Vec12 W_x;
  std::vector<double> W_i;  // one per horizon knot i = 1..kHorizonKnots

  /// W_x from per-block scales (a unit weighted error per block) and W_i = r^i normalized to sum 1.
  static CostWeights defaults();
  static Vec12 state_weights(double pos, double att, double vel, double rate);
  static std::vector<double> geometric(double ratio, int n = kHorizonKnots);
  void validate() const;
};

/// sqrt(sum_i (W_x,i e_i)^2).
double weighted_norm(const StateError& e, const Vec12& W_x);

/// A periodic hover orbit sampled at integrator resolution over one period.
struct ReferenceOrbit {
  WingPair params;
  int steps_per_period = 500;
  std::vector<FreeState> samples;  // steps_per_period + 1 states, samples.back() ~ samples.front()
  double defect = 0.0;             // weighted periodicity defect
  double mean_power = 0.0;         // mean aerodynamic power over the period (W)
  Vec3 mean_aero_force = Vec3::Zero();
  std::string morphology_hash;

  double frequency() const { return params.right.f; }
  double period() const { return params.right.period(); }
  const FreeState& initial() const { return samples.front(); }
  /// Desired state at time t (nearest sample, periodic in t).
  const FreeState& desired(double t) const;
};

/// Digest of the waveform parameters, resolution, morphology and initial state.
std::string orbit_hash(const ReferenceOrbit& orbit);

/// Error of s against the desired state d: dR from attitude_error and dOmega = Omega - R^T R_d Omega_d.
StateError state_error(const FreeState& s, const FreeState& d);

struct WeightedError {
  StateError delta;
  double norm = 0.0;
};

WeightedError weighted_error(const FreeState& s, double t, const ReferenceOrbit& orbit,
                             const Vec12& W_x);

/// The state whose error against d is e. Requires ||dR|| < 1.
FreeState perturb_state(const FreeState& d, const StateError& e);
inline FreeState perturb_state(const ReferenceOrbit& orbit, const StateError& e) {
  return perturb_state(orbit.initial(), e);
}

struct OrbitOptions {
  int steps_per_period = 500;
  double tol = 1e-4;            // weighted defect accepted as periodic
  double polish_tol = 1e-11;    // the defect the final Newton phase aims for
  double lambda_E = 1e-2;
  int max_iter = 60;
  bool free_frequency = false;
  Vec12 W_x = CostWeights::defaults().W_x;
  bool verbose = false;
};

/// Searches initial velocities, attitude and symmetric waveform offsets (phi_m,
/// theta_0, phi_0 and optionally f) for a one-period periodic hover. Throws
/// ConvergenceError carrying the best defect when tol is not met.
ReferenceOrbit find_periodic_orbit(const Morphology& m, const WingPair& seed,
                                   const OrbitOptions& opts = {});

/// Sum over horizon knots of W_i * ||x(t_i) - x_d(t_i)||_{W_x}. `samples` holds the
/// states at knots 0..N_p (index 0 unused).
double tracking_cost(const std::vector<FreeState>& samples, const ReferenceOrbit& orbit,
                     const CostWeights& W);

struct MpcOptions {
  int steps_per_period = 100;  // internal model resolution
  double delta_max = kDefaultDeltaMax;
  int max_iter = 12;
  double fd_step = 1e-4;
  int refresh_every = 0;  // recompute the finite-difference Jacobian every k iterations; 0 keeps the orbit one
  int jobs = 1;
  double max_error = 2.0;
  double effort_weight = 0.3;   // rho in J + rho ||z||^2; selects the least-effort schedule
  double rel_tol = 1e-4;        // stop once an accepted step gains less than rel_tol * J
  bool verbose = false;
};

struct MpcResult {
  ControlVector u = ControlVector::Zero();  // first-period schedule
  Eigen::VectorXd knots;                    // all free knots of the horizon, channel-major per knot
  double cost = 0.0;
  double cost_zero = 0.0;
  int iterations = 0;
  int rollouts = 0;
};

/// Horizon optimizer over the free knots of a two-period schedule. Minimizes the
/// tracking cost plus effort_weight * ||z||^2; the reported cost is the tracking cost alone. Holds a
/// finite-difference sensitivity of the knot errors at the orbit, shared by all
/// solves; each solve refines it with Broyden updates.
class MpcExpert {
 public:
  /// dyn must use orbit.params as its reference. Computes the orbit sensitivity.
  MpcExpert(const Dynamics& dyn, const ReferenceOrbit& orbit, CostWeights W, MpcOptions opts = {});

  /// Optimized schedule starting from `initial` at a period boundary. Never returns
  /// a cost above the zero-control cost.
  MpcResult solve(const FreeState& initial) const;
  /// solve() for the orbit state perturbed by a raw error.
  MpcResult solve_error(const StateError& e) const;

  const CostWeights& weights() const { return W_; }
  const MpcOptions& options() const { return opts_; }
  const ReferenceOrbit& orbit() const { return orbit_; }
  const Dynamics& dynamics() const { return dyn_; }
  static constexpr int kFree = 6 * (kHorizonKnots - 2);

 private:
  using Residual = Eigen::VectorXd;
  using Jac = Eigen::MatrixXd;

  ControlSchedule schedule(const Eigen::VectorXd& z) const;
  Residual residual(const FreeState& initial, const Eigen::VectorXd& z) const;
  double cost(const Residual& r) const;
  Jac jacobian(const FreeState& initial, const Eigen::VectorXd& z, const Residual& r0) const;

  Dynamics dyn_;
  ReferenceOrbit orbit_;
  CostWeights W_;
  MpcOptions opts_;
  Jac J0_;
};

/// Convenience wrapper matching the single-call interface.
MpcResult mpc_solve(const FreeState& initial, const Dynamics& dyn, const ReferenceOrbit& orbit,
                    const CostWeights& W, const MpcOptions& opts = {});

}  // namespace fwuav
