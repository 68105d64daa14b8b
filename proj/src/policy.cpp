#include "fwuav/policy.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "fwuav/errors.hpp"
#include "fwuav/parallel.hpp"

namespace fwuav {

int NetArch::param_count() const {
  return n_in * n_hidden + n_hidden + n_hidden * n_out + (cascade ? n_in * n_out : 0) + n_out;
}

void NetArch::validate() const {
  if (n_in < 1 || n_hidden < 1 || n_out < 1) throw DomainError("NetArch: sizes must be positive");
  if (!(leak >= 0.0 && leak < 1.0)) throw DomainError("NetArch: leak must lie in [0, 1)");
}

NeuralPolicy::NeuralPolicy(NetArch arch) : arch_(arch) {
  arch_.validate();
  theta_ = Eigen::VectorXd::Zero(arch_.param_count());
}

NeuralPolicy::NeuralPolicy(NetArch arch, Eigen::VectorXd theta) : arch_(arch) {
  arch_.validate();
  set_theta(theta);
}

void NeuralPolicy::set_theta(const Eigen::VectorXd& theta) {
  if (theta.size() != arch_.param_count()) {
    std::ostringstream os;
    os << "NeuralPolicy: expected " << arch_.param_count() << " parameters, got " << theta.size();
    throw DomainError(os.str());
  }
  if (!theta.allFinite()) throw NumericError("NeuralPolicy: non-finite parameters");
  theta_ = theta;
}

NeuralPolicy NeuralPolicy::random(const NetArch& arch, std::uint64_t seed) {
  NeuralPolicy net(arch);
  std::mt19937_64 rng = substream(seed, 0x6e6574);
  const auto o = net.offsets();
  auto fill = [&](int begin, int end, double fan_in) {
    std::uniform_real_distribution<double> U(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (int i = begin; i < end; ++i) net.theta_[i] = U(rng);
  };
  fill(o.Wh, o.Wo, arch.n_in);
  fill(o.Wo, o.total, arch.n_hidden + (arch.cascade ? arch.n_in : 0));
  return net;
}

NeuralPolicy::Offsets NeuralPolicy::offsets() const {
  Offsets o;
  o.Wh = 0;
  o.bh = o.Wh + arch_.n_hidden * arch_.n_in;
  o.Wo = o.bh + arch_.n_hidden;
  o.Wd = o.Wo + arch_.n_out * arch_.n_hidden;
  o.bo = o.Wd + (arch_.cascade ? arch_.n_out * arch_.n_in : 0);
  o.total = o.bo + arch_.n_out;
  return o;
}

NeuralPolicy::MatMap NeuralPolicy::W_h() const {
  return MatMap(theta_.data() + offsets().Wh, arch_.n_hidden, arch_.n_in);
}
NeuralPolicy::VecMap NeuralPolicy::b_h() const {
  return VecMap(theta_.data() + offsets().bh, arch_.n_hidden);
}
NeuralPolicy::MatMap NeuralPolicy::W_o() const {
  return MatMap(theta_.data() + offsets().Wo, arch_.n_out, arch_.n_hidden);
}
NeuralPolicy::MatMap NeuralPolicy::W_d() const {
  return MatMap(theta_.data() + offsets().Wd, arch_.n_out, arch_.cascade ? arch_.n_in : 0);
}
NeuralPolicy::VecMap NeuralPolicy::b_o() const {
  return VecMap(theta_.data() + offsets().bo, arch_.n_out);
}

namespace {

void check_input(const NetArch& a, const Eigen::MatrixXd& X) {
  if (X.rows() != a.n_in) {
    std::ostringstream os;
    os << "NeuralPolicy: input has " << X.rows() << " rows, expected " << a.n_in;
    throw DomainError(os.str());
  }
}

}  // namespace

Eigen::MatrixXd NeuralPolicy::forward(const Eigen::MatrixXd& X) const {
  check_input(arch_, X);
  const double leak = arch_.leak;
  const Eigen::MatrixXd Z = (W_h() * X).colwise() + b_h();
  const Eigen::MatrixXd A = Z.unaryExpr([leak](double z) { return z >= 0.0 ? z : leak * z; });
  Eigen::MatrixXd Y = W_o() * A;
  if (arch_.cascade) Y.noalias() += W_d() * X;
  Y.colwise() += b_o();
  return Y;
}

Eigen::VectorXd NeuralPolicy::forward(const Eigen::VectorXd& x) const {
  return forward(Eigen::MatrixXd(x)).col(0);
}

Eigen::VectorXd NeuralPolicy::vjp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U) const {
  check_input(arch_, X);
  if (U.rows() != arch_.n_out || U.cols() != X.cols()) {
    throw DomainError("NeuralPolicy: upstream shape does not match the batch");
  }
  const double leak = arch_.leak;
  const auto o = offsets();
  const Eigen::MatrixXd Z = (W_h() * X).colwise() + b_h();
  const Eigen::MatrixXd A = Z.unaryExpr([leak](double z) { return z >= 0.0 ? z : leak * z; });
  const Eigen::MatrixXd D = Z.unaryExpr([leak](double z) { return z >= 0.0 ? 1.0 : leak; });
  Eigen::VectorXd g(o.total);
  using Map = Eigen::Map<Eigen::MatrixXd>;
  Map(g.data() + o.Wo, arch_.n_out, arch_.n_hidden).noalias() = U * A.transpose();
  if (arch_.cascade) Map(g.data() + o.Wd, arch_.n_out, arch_.n_in).noalias() = U * X.transpose();
  g.segment(o.bo, arch_.n_out) = U.rowwise().sum();
  const Eigen::MatrixXd dZ = (W_o().transpose() * U).cwiseProduct(D);
  Map(g.data() + o.Wh, arch_.n_hidden, arch_.n_in).noalias() = dZ * X.transpose();
  g.segment(o.bh, arch_.n_hidden) = dZ.rowwise().sum();
  return g;
}

Eigen::VectorXd NeuralPolicy::grad_theta(const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& upstream) const {
  return vjp(Eigen::MatrixXd(x), Eigen::MatrixXd(upstream));
}

Eigen::MatrixXd NeuralPolicy::jvp(const Eigen::MatrixXd& X, const Eigen::VectorXd& v) const {
  check_input(arch_, X);
  const double leak = arch_.leak;
  const auto o = offsets();
  using CMap = Eigen::Map<const Eigen::MatrixXd>;
  const Eigen::MatrixXd Z = (W_h() * X).colwise() + b_h();
  const Eigen::MatrixXd A = Z.unaryExpr([leak](double z) { return z >= 0.0 ? z : leak * z; });
  const Eigen::MatrixXd D = Z.unaryExpr([leak](double z) { return z >= 0.0 ? 1.0 : leak; });
  const Eigen::MatrixXd dZ =
      (CMap(v.data() + o.Wh, arch_.n_hidden, arch_.n_in) * X).colwise() +
      v.segment(o.bh, arch_.n_hidden);
  Eigen::MatrixXd dY = CMap(v.data() + o.Wo, arch_.n_out, arch_.n_hidden) * A;
  dY.noalias() += W_o() * dZ.cwiseProduct(D);
  if (arch_.cascade) dY.noalias() += CMap(v.data() + o.Wd, arch_.n_out, arch_.n_in) * X;
  dY.colwise() += v.segment(o.bo, arch_.n_out);
  return dY;
}

double NeuralPolicy::lipschitz_bound() const {
  auto spec = [](const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0);
  };
  return spec(W_o()) * spec(W_h()) * std::max(1.0, arch_.leak) +
         (arch_.cascade ? spec(W_d()) : 0.0);
}

double mse(const NeuralPolicy& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  if (Y.cols() == 0) return 0.0;
  return (Y - net.forward(X)).squaredNorm() / static_cast<double>(Y.size());
}

namespace {

// Exact ridge solution for the output layer with the hidden layer held fixed.
void ridge_output_layer(NeuralPolicy& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                        const Eigen::RowVectorXd& w, double lambda) {
  const NetArch& a = net.arch();
  const double leak = a.leak;
  const int nf = a.n_hidden + (a.cascade ? a.n_in : 0) + 1;
  const int N = static_cast<int>(X.cols());
  Eigen::MatrixXd Phi(nf, N);
  const Eigen::MatrixXd Z = (net.W_h() * X).colwise() + net.b_h();
  Phi.topRows(a.n_hidden) = Z.unaryExpr([leak](double z) { return z >= 0.0 ? z : leak * z; });
  if (a.cascade) Phi.middleRows(a.n_hidden, a.n_in) = X;
  Phi.bottomRows(1).setOnes();
  const Eigen::MatrixXd Phi_w = Phi.array().rowwise() * w.array();
  Eigen::MatrixXd G = Phi_w * Phi.transpose();
  G.diagonal().array() += lambda * static_cast<double>(Y.size()) + 1e-12 * G.diagonal().maxCoeff();
  const Eigen::MatrixXd W = G.ldlt().solve(Phi_w * Y.transpose()).transpose();  // n_out x nf
  Eigen::VectorXd theta = net.theta();
  const int Wo = a.n_hidden * a.n_in + a.n_hidden;
  Eigen::Map<Eigen::MatrixXd>(theta.data() + Wo, a.n_out, a.n_hidden) = W.leftCols(a.n_hidden);
  int next = Wo + a.n_out * a.n_hidden;
  if (a.cascade) {
    Eigen::Map<Eigen::MatrixXd>(theta.data() + next, a.n_out, a.n_in) =
        W.middleCols(a.n_hidden, a.n_in);
    next += a.n_out * a.n_in;
  }
  theta.segment(next, a.n_out) = W.col(nf - 1);
  net.set_theta(theta);
}

}  // namespace

TrainResult train(NeuralPolicy& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                  const TrainOptions& opts) {
  const NetArch& a = net.arch();
  if (X.rows() != a.n_in || Y.rows() != a.n_out || X.cols() != Y.cols()) {
    throw DomainError("train: X and Y dimensions do not match the architecture");
  }
  TrainResult out;
  if (X.cols() == 0) return out;
  const double M = static_cast<double>(Y.size());
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Ones(X.cols());
  if (!opts.weights.empty()) {
    if (static_cast<Eigen::Index>(opts.weights.size()) != X.cols()) {
      throw DomainError("train: one weight per sample required");
    }
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
      if (!(opts.weights[k] >= 0.0)) throw DomainError("train: weights must be non-negative");
      w[k] = opts.weights[k];
    }
  }
  auto weighted = [&w](const Eigen::MatrixXd& R) -> Eigen::MatrixXd {
    return R.array().rowwise() * w.array();
  };
  auto loss_of = [&](const Eigen::VectorXd& th, double* m = nullptr) {
    NeuralPolicy probe(a, th);
    const Eigen::MatrixXd R = Y - probe.forward(X);
    const double e = (R.array().square().rowwise() * w.array()).sum() / M;
    if (m) *m = e;
    return e + opts.lambda * th.squaredNorm();
  };
  if (opts.ridge_init) ridge_output_layer(net, X, Y, w, opts.lambda);
  Eigen::VectorXd theta = net.theta();
  double mse_now = 0.0;
  double loss = loss_of(theta, &mse_now);
  if (!std::isfinite(loss)) throw NumericError("train: initial loss is not finite");

  if (opts.method == Trainer::Momentum) {
    Eigen::VectorXd vel = Eigen::VectorXd::Zero(theta.size());
    for (int it = 0; it < opts.max_iter && loss > opts.target_loss; ++it) {
      NeuralPolicy cur(a, theta);
      const Eigen::VectorXd g =
          -2.0 / M * cur.vjp(X, weighted(Y - cur.forward(X))) + 2.0 * opts.lambda * theta;
      vel = opts.momentum * vel - opts.lr * g;
      theta += vel;
      loss = loss_of(theta, &mse_now);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "train: loss diverged at iteration " << it;
        throw NumericError(os.str());
      }
      out.trace.push_back(loss);
      out.iterations = it + 1;
    }
  } else {
    double mu = 1e-3;
    int stalls = 0;
    for (int it = 0; it < opts.max_iter && loss > opts.target_loss; ++it) {
      NeuralPolicy cur(a, theta);
      const Eigen::MatrixXd R = Y - cur.forward(X);
      const Eigen::VectorXd rhs = cur.vjp(X, weighted(R)) / M - opts.lambda * theta;
      bool accepted = false;
      for (int tries = 0; tries < 10 && !accepted; ++tries) {
        // conjugate gradients on (J^T J / M + (lambda + mu) I) step = rhs
        const double shift = opts.lambda + mu;
        Eigen::VectorXd step = Eigen::VectorXd::Zero(theta.size());
        Eigen::VectorXd r = rhs, p = rhs;
        double rr = r.squaredNorm();
        const double stop = 1e-20 * rhs.squaredNorm();
        for (int k = 0; k < opts.cg_iter && rr > stop; ++k) {
          const Eigen::VectorXd Ap = cur.vjp(X, weighted(cur.jvp(X, p))) / M + shift * p;
          const double pAp = p.dot(Ap);
          if (!(pAp > 0.0)) break;  // exhausted at underflow
          const double alpha = rr / pAp;
          step += alpha * p;
          r -= alpha * Ap;
          const double rr_new = r.squaredNorm();
          p = r + (rr_new / rr) * p;
          rr = rr_new;
        }
        if (!step.allFinite()) {
          mu *= 8.0;
          continue;
        }
        double m_new = 0.0;
        const double l_new = loss_of(theta + step, &m_new);
        if (std::isfinite(l_new) && l_new < loss) {
          const double gain = loss - l_new;
          theta += step;
          loss = l_new;
          mse_now = m_new;
          mu = std::max(mu / 3.0, 1e-12);
          accepted = true;
          stalls = gain < opts.tol * loss ? stalls + 1 : 0;
        } else {
          mu *= 8.0;
        }
      }
      if (!accepted) break;
      out.trace.push_back(loss);
      out.iterations = it + 1;
      if (opts.verbose) std::fprintf(stderr, "train %d: loss %.6e mu %.1e\n", it, loss, mu);
      if (stalls >= 3) break;
    }
  }
  net.set_theta(theta);
  out.loss = loss;
  out.mse = mse_now;
  return out;
}

}  // namespace fwuav
