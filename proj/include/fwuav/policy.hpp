#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fwuav {

struct NetArch {
  int n_in = 12;
  int n_hidden = 36;
  int n_out = 60;
  double leak = 0.01;
  bool cascade = true;  // direct input-to-output connection

  int param_count() const;
  void validate() const;
  bool operator==(const NetArch&) const = default;
};

inline int param_count(const NetArch& a) { return a.param_count(); }
inline int param_count(int n_in, int n_hidden, int n_out, bool cascade = true) {
  return NetArch{n_in, n_hidden, n_out, 0.01, cascade}.param_count();
}

/// Single-hidden-layer cascade-forward network
///   y = W_o act(W_h x + b_h) + W_d x + b_o,  act(z) = z for z >= 0, leak * z otherwise.
/// theta = [W_h, b_h, W_o, W_d, b_o], matrices stored column-major.
class NeuralPolicy {
 public:
  NeuralPolicy() = default;
  /// All-zero parameters.
  explicit NeuralPolicy(NetArch arch);
  NeuralPolicy(NetArch arch, Eigen::VectorXd theta);

  /// Fan-in scaled uniform initialization: every weight and bias of a layer is
  /// drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static NeuralPolicy random(const NetArch& arch, std::uint64_t seed);

  const NetArch& arch() const { return arch_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  void set_theta(const Eigen::VectorXd& theta);
  int size() const { return static_cast<int>(theta_.size()); }

  using MatMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<const Eigen::VectorXd>;
  MatMap W_h() const;
  VecMap b_h() const;
  MatMap W_o() const;
  MatMap W_d() const;  // empty without the cascade connection
  VecMap b_o() const;

  /// Columns of X are inputs; returns one output column per input.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  /// (d f(x) / d theta)^T upstream.
  Eigen::VectorXd grad_theta(const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) const;
  /// Sum over columns of (d f(X_k) / d theta)^T U_k.
  Eigen::VectorXd vjp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U) const;
  /// Directional derivative of the batch output along v.
  Eigen::MatrixXd jvp(const Eigen::MatrixXd& X, const Eigen::VectorXd& v) const;

  /// Upper bound on the Lipschitz constant of forward (spectral norms of the layers).
  double lipschitz_bound() const;

 private:
  struct Offsets {
    int Wh, bh, Wo, Wd, bo, total;
  };
  Offsets offsets() const;

  NetArch arch_;
  Eigen::VectorXd theta_;
};

enum class Trainer { LevenbergMarquardt, Momentum };

struct TrainOptions {
  Trainer method = Trainer::LevenbergMarquardt;
  double lambda = 1e-7;      // weight on ||theta||^2
  int max_iter = 200;
  int cg_iter = 60;          // inner conjugate-gradient iterations per LM step
  double tol = 1e-10;        // stop when the relative loss decrease stalls below this
  double target_loss = 0.0;  // stop once the loss falls below this
  bool ridge_init = true;    // fit the output layer exactly before iterating
  double lr = 1e-2;          // momentum trainer
  double momentum = 0.9;
  std::vector<double> weights;  // per-sample weights on the squared residual; empty means 1
  bool verbose = false;
};

struct TrainResult {
  double loss = 0.0;  // mse + lambda ||theta||^2
  double mse = 0.0;
  int iterations = 0;
  std::vector<double> trace;  // loss after each accepted iteration
};

/// Mean of squared entries of Y - f(X).
double mse(const NeuralPolicy& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

/// Minimizes sum_k w_k ||Y_k - f(X_k)||^2 / Y.size() + lambda ||theta||^2 starting from net's parameters. Throws
/// NumericError when the loss becomes non-finite.
TrainResult train(NeuralPolicy& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                  const TrainOptions& opts = {});

}  // namespace fwuav
