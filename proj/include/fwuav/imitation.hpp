#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fwuav/datagen.hpp"
#include "fwuav/policy.hpp"

namespace fwuav {

struct ILConfig {
  int iterations = 5;
  double alpha = 0.75;          // COIL target blend
  double dart_scale = 1e-4;     // alpha_d / (N tr Sigma_hat)
  int rollout_periods = 5;
  int rollouts_per_iter = 30;   // fresh initial errors per DAgger/DART iteration
  BlockScales scales;
  double mu_c = 1.0;            // extra weight on ||f(0, theta)||^2 in the COIL retrain
  bool warm_start = true;       // retrain from the previous parameters
  int steps_per_period = 500;
  TrainOptions train;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool verbose = false;

  void validate() const;
};

/// One row of the per-iteration metrics log. Iteration 0 is the initial training.
struct ILIteration {
  int iteration = 0;
  int dataset_size = 0;
  double mse = 0.0;
  double f0_norm = 0.0;        // ||f(0, theta)||_2 of the iterate
  double f0_projected = -1.0;  // COIL: ||f(0, theta_z)||_2 after projection; -1 otherwise
  int expert_calls = 0;
  double wall_time = 0.0;      // seconds, cumulative
};

struct ILResult {
  NeuralPolicy policy;
  Dataset data;  // final aggregated dataset
  std::vector<ILIteration> log;
  int expert_calls = 0;
  double wall_time = 0.0;
  std::vector<std::string> warnings;
};

/// Deterministic columns only (iteration, N, MSE, f0 norms, expert calls).
void write_metrics_csv(std::ostream& os, const std::vector<ILIteration>& log);
/// Wall-clock columns, kept apart so the metrics file is reproducible byte for byte.
void write_timing_csv(std::ostream& os, const std::vector<ILIteration>& log);

/// ||f(0, theta)||_2.
double zero_output_norm(const NeuralPolicy& net);

/// Closed-loop controller evaluating the policy at each period boundary. With
/// noise_sigma > 0, Gaussian noise of that standard deviation is added to each
/// weighted input component (not to the state), drawn from substream(noise_seed, 0).
Controller policy_controller(const NeuralPolicy& net, const ReferenceOrbit& orbit,
                             const Vec12& W_x, double delta_max = kDefaultDeltaMax,
                             double noise_sigma = 0.0, std::uint64_t noise_seed = 0);

NeuralPolicy behavior_cloning(const Dataset& ds, const NetArch& arch, const ILConfig& cfg,
                              TrainResult* result = nullptr);

ILResult dagger(const Dataset& ds0, const NetArch& arch, const ILConfig& cfg,
                const MpcExpert& expert);

/// Noise covariance of one DART iteration.
struct DartNoise {
  Eigen::MatrixXd Sigma_hat;  // mean outer product of policy-minus-expert residuals
  Eigen::MatrixXd Sigma;      // alpha_d / (N tr Sigma_hat) * Sigma_hat
  double alpha_d = 0.0;
  int N = 0;
};
/// Residual covariance of net on ds and its scaled noise covariance for the given
/// alpha_d. A zero residual gives a zero covariance.
DartNoise dart_noise(const NeuralPolicy& net, const Dataset& ds, double alpha_d);
/// A draw from N(mean, Sigma) through a symmetric square root of Sigma.
ControlVector sample_gaussian(std::mt19937_64& rng, const ControlVector& mean,
                              const Eigen::MatrixXd& Sigma);

ILResult dart(const Dataset& ds0, const NetArch& arch, const ILConfig& cfg,
              const MpcExpert& expert);

/// Empirical Fisher information F = G G^T with G = [g_1 ... g_N] / sqrt(N), held factored.
class FisherMatrix {
 public:
  FisherMatrix() = default;
  explicit FisherMatrix(Eigen::MatrixXd G);

  const Eigen::MatrixXd& factor() const { return G_; }
  int dim() const { return static_cast<int>(G_.rows()); }
  Eigen::MatrixXd dense() const { return G_ * G_.transpose(); }
  double trace() const { return G_.squaredNorm(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return G_ * (G_.transpose() * v); }
  double quadratic(const Eigen::VectorXd& v) const { return (G_.transpose() * v).squaredNorm(); }
  /// (F + eps I)^{-1} V via the N x N Gram matrix of G.
  Eigen::MatrixXd solve_regularized(const Eigen::MatrixXd& V, double eps) const;
  /// eps (F + eps I)^{-1} V, which avoids dividing by a small eps.
  Eigen::MatrixXd scaled_inverse(const Eigen::MatrixXd& V, double eps) const;

 private:
  void factorize() const;

  Eigen::MatrixXd G_;
  // F = Q diag(d) Q^T over the numerically non-zero spectrum, computed on first use
  mutable Eigen::MatrixXd Q_;
  mutable Eigen::VectorXd d_;
  mutable bool factored_ = false;
};

/// g_k = grad_theta(net, X_k, Y_k - f(X_k)), unit output covariance.
FisherMatrix fim_estimate(const NeuralPolicy& net, const Eigen::MatrixXd& X,
                          const Eigen::MatrixXd& Y);

/// 0.5 (theta_a - theta_b)^T F (theta_a - theta_b).
double kl_gaussian(const NeuralPolicy& a, const NeuralPolicy& b, const FisherMatrix& F);

struct ProjectOptions {
  double tol = 1e-8;
  int max_iter = 50;
  double eps_rel = 1e-8;  // F regularization relative to tr(F) / N_theta
  double step_tol = 1e-12;  // stationarity: KKT step length relative to 1 + |theta0|
};

struct ProjectResult {
  Eigen::VectorXd theta;
  double constraint_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// argmin 0.5 ||theta - theta0||_F^2 subject to f(0, theta) = 0, by linearized KKT
/// steps on (F + eps I). A rank-deficient constraint Jacobian is handled by a
/// least-squares multiplier solve. Iterates until feasible and the step is below
/// step_tol; without feasibility the least-violating iterate is returned.
ProjectResult constrained_project(const Eigen::VectorXd& theta0, const FisherMatrix& F,
                                  const NetArch& arch, const ProjectOptions& opts = {});

/// Constrained imitation learning on a fixed dataset. Takes no expert.
ILResult coil(const Dataset& ds, const NetArch& arch, const ILConfig& cfg);

}  // namespace fwuav
