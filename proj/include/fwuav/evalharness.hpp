#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fwuav/imitation.hpp"

namespace fwuav {

/// e(t) <= e(0) exp(-gamma t) on [0, t_T] and e(t) <= b for t >= t_T, in periods.
struct BoundednessMetrics {
  double gamma = 0.0;
  double t_T = 0.0;
  double b = 0.0;
  bool bounded = false;  // b is meaningful only when set
};

/// Fits the metrics to a per-period series (index = period).
///  b     the maximum over the last half of the series
///  t_T   the first period after which the series never exceeds b
///  gamma the largest rate whose exponential from e(0) dominates the series up to t_T
/// The series is reported unbounded when it is non-finite, or when its tail peaks at
/// the final sample while its least-squares trend over the tail rises by more than 5%
/// of the tail mean. Throws DomainError for fewer than 10 samples.
BoundednessMetrics boundedness_fit(const std::vector<double>& series);

struct SweepOptions {
  int n_traj = 256;
  int horizon = 60;  // periods
  BlockScales scales;
  std::uint64_t seed = 7;
  int jobs = 1;
  int steps_per_period = 500;
  double noise_sigma = 0.0;  // weighted input noise
};

struct SweepResult {
  std::vector<std::vector<double>> series;  // per trajectory, horizon + 1 weighted errors
  std::vector<double> envelope;             // per-period maximum over trajectories
  BoundednessMetrics metrics;               // fitted on the envelope
  int failures = 0;                         // trajectories that stopped on a numeric failure
};

/// Closed-loop runs of the policy from errors sampled in the unit weighted ball.
/// Trajectory j draws its initial error and input noise from its own substream, so
/// the result is independent of jobs. A failed trajectory contributes +inf from the
/// failure onward.
SweepResult sweep(const NeuralPolicy& net, const Dynamics& dyn, const ReferenceOrbit& orbit,
                  const Vec12& W_x, const SweepOptions& opts);

struct BoxStats {
  int period = 0;
  double min = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, max = 0.0;
};

/// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> v, double q);

struct NoiseSweepResult {
  SweepResult sweep;
  std::vector<BoxStats> stats;  // periods after `skip`
  double median_slope = 0.0;    // least-squares slope of the median against the period
};

/// sweep() with opts.noise_sigma applied to the policy input, summarized per period
/// for periods greater than skip.
NoiseSweepResult noise_sweep(const NeuralPolicy& net, const Dynamics& dyn,
                             const ReferenceOrbit& orbit, const Vec12& W_x,
                             const SweepOptions& opts, int skip = 10);

/// Least-squares slope of y against x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Mean wall time of one single-input forward pass, in seconds.
double policy_latency(const NeuralPolicy& net, int repeats = 20000);

struct AlgorithmSummary {
  std::string name;
  double wall_time_min = 0.0;  // non-finite prints N/A
  BoundednessMetrics metrics;
  double f0_norm = 0.0;
  double mse = 0.0;
};

/// Rows: computation time, ultimate bound (N/A when unbounded), decay rate, constraint
/// norm, MSE. One column per algorithm present.
void compare_report_csv(std::ostream& os, const std::vector<AlgorithmSummary>& algs);
void compare_report_text(std::ostream& os, const std::vector<AlgorithmSummary>& algs);

/// period, envelope, median, mean over trajectories.
void write_envelope_csv(std::ostream& os, const SweepResult& r);
void write_boxstats_csv(std::ostream& os, const std::vector<BoxStats>& stats);

}  // namespace fwuav
