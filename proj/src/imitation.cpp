#include "fwuav/imitation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>

#include "fwuav/errors.hpp"
#include "fwuav/parallel.hpp"

namespace fwuav {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Substream bases keep the random draws of each algorithm and iteration disjoint.
constexpr std::uint64_t kDaggerStream = 1ULL << 40;
constexpr std::uint64_t kDartStream = 2ULL << 40;
constexpr std::uint64_t kIterStride = 1ULL << 20;

ILIteration make_row(int it, const NeuralPolicy& net, const Dataset& ds, int calls,
                     Clock::time_point t0) {
  ILIteration row;
  row.iteration = it;
  row.dataset_size = ds.size();
  row.mse = mse(net, ds.X, ds.Y);
  row.f0_norm = zero_output_norm(net);
  row.expert_calls = calls;
  row.wall_time = seconds_since(t0);
  return row;
}

void report(const ILConfig& cfg, const char* name, const ILIteration& r) {
  if (!cfg.verbose) return;
  std::fprintf(stderr, "%s iter %d: N %d  mse %.4e  |f(0)| %.3e  calls %d  %.1fs\n", name,
               r.iteration, r.dataset_size, r.mse, r.f0_norm, r.expert_calls, r.wall_time);
}

NeuralPolicy retrain(const NeuralPolicy& prev, const Dataset& ds, const NetArch& arch,
                     const ILConfig& cfg, int iteration) {
  NeuralPolicy net = cfg.warm_start
                         ? prev
                         : NeuralPolicy::random(arch, cfg.seed + static_cast<std::uint64_t>(iteration));
  train(net, ds.X, ds.Y, cfg.train);
  return net;
}

struct Label {
  Vec12 x;
  MpcResult r;
  bool ok = false;
};

// Expert labels for a batch of states at period boundaries.
std::vector<Label> label_states(const MpcExpert& expert, const std::vector<FreeState>& states,
                                int jobs, std::vector<std::string>* warnings) {
  std::vector<Label> out(states.size());
  std::vector<std::string> errors(states.size());
  const Vec12& W_x = expert.weights().W_x;
  parallel_for(static_cast<int>(states.size()), jobs, [&](int i) {
    out[i].x = weighted_input(state_error(states[i], expert.orbit().initial()), W_x);
    try {
      out[i].r = expert.solve(states[i]);
      out[i].ok = true;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) warnings->push_back("expert failed on state " + std::to_string(i) + ": " + errors[i]);
  }
  return out;
}

}  // namespace

void ILConfig::validate() const {
  if (iterations < 0) throw DomainError("ILConfig: iterations must be non-negative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("ILConfig: alpha must lie in [0, 1]");
  if (!(dart_scale >= 0.0)) throw DomainError("ILConfig: dart_scale must be non-negative");
  if (rollout_periods < 1 || rollouts_per_iter < 0) throw DomainError("ILConfig: bad rollout counts");
  if (!(mu_c >= 0.0)) throw DomainError("ILConfig: mu_c must be non-negative");
}

void write_metrics_csv(std::ostream& os, const std::vector<ILIteration>& log) {
  os << "iteration,dataset_size,mse,f0_norm,f0_projected,expert_calls\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.10e,%.10e,%.10e,%d\n", r.iteration, r.dataset_size,
                  r.mse, r.f0_norm, r.f0_projected, r.expert_calls);
    os << buf;
  }
}

void write_timing_csv(std::ostream& os, const std::vector<ILIteration>& log) {
  os << "iteration,wall_time_s\n";
  for (const auto& r : log) os << r.iteration << ',' << r.wall_time << '\n';
}

double zero_output_norm(const NeuralPolicy& net) {
  return net.forward(Eigen::VectorXd(Eigen::VectorXd::Zero(net.arch().n_in))).norm();
}

Controller policy_controller(const NeuralPolicy& net, const ReferenceOrbit& orbit,
                             const Vec12& W_x, double delta_max, double noise_sigma,
                             std::uint64_t noise_seed) {
  if (net.arch().n_in != 12 || net.arch().n_out != kControlDim) {
    throw DomainError("policy_controller: network must map 12 inputs to 60 outputs");
  }
  auto rng = std::make_shared<std::mt19937_64>(substream(noise_seed, 0));
  const double T = orbit.period();
  return [net, &orbit, W_x, delta_max, noise_sigma, rng, T](int, double t, const FreeState& s) {
    Eigen::VectorXd x = weighted_input(weighted_error(s, t, orbit, W_x).delta, W_x);
    if (noise_sigma > 0.0) {
      std::normal_distribution<double> n(0.0, noise_sigma);
      for (int i = 0; i < x.size(); ++i) x[i] += n(*rng);
    }
    const ControlVector u = net.forward(x);
    return ControlSchedule::from_u(u, T, delta_max);
  };
}

NeuralPolicy behavior_cloning(const Dataset& ds, const NetArch& arch, const ILConfig& cfg,
                              TrainResult* result) {
  ds.validate();
  NeuralPolicy net = NeuralPolicy::random(arch, cfg.seed);
  const TrainResult r = train(net, ds.X, ds.Y, cfg.train);
  if (result) *result = r;
  return net;
}

ILResult dagger(const Dataset& ds0, const NetArch& arch, const ILConfig& cfg,
                const MpcExpert& expert) {
  cfg.validate();
  const auto t0 = Clock::now();
  ILResult out;
  out.data = ds0;
  out.policy = behavior_cloning(out.data, arch, cfg);
  out.log.push_back(make_row(0, out.policy, out.data, 0, t0));
  report(cfg, "dagger", out.log.back());

  const Dynamics& dyn = expert.dynamics();
  const ReferenceOrbit& orbit = expert.orbit();
  const Vec12& W_x = expert.weights().W_x;
  SimOptions sim;
  sim.steps_per_period = cfg.steps_per_period;
  sim.record_stride = cfg.steps_per_period;

  for (int it = 1; it <= cfg.iterations; ++it) {
    const int n_before = out.data.size();
    // on-policy rollouts from fresh initial errors; keep every period-boundary state
    std::vector<std::vector<FreeState>> visited(cfg.rollouts_per_iter);
    const Controller ctrl = policy_controller(out.policy, orbit, W_x, expert.options().delta_max);
    parallel_for(cfg.rollouts_per_iter, cfg.jobs, [&](int j) {
      std::mt19937_64 rng = substream(cfg.seed, kDaggerStream + it * kIterStride + j);
      const FreeState s0 = perturb_state(orbit, sample_initial_error(rng, cfg.scales, W_x));
      const Trajectory tr = simulate(dyn, s0, cfg.rollout_periods, ctrl, sim);
      for (std::size_t k = 1; k < tr.states.size(); ++k) {
        const double e = weighted_norm(state_error(tr.states[k], orbit.initial()), W_x);
        if (e <= expert.options().max_error) visited[j].push_back(tr.states[k]);
      }
    });
    std::vector<FreeState> states;
    for (const auto& v : visited) states.insert(states.end(), v.begin(), v.end());
    const std::vector<Label> labels = label_states(expert, states, cfg.jobs, &out.warnings);
    out.expert_calls += static_cast<int>(states.size());
    for (const Label& l : labels) {
      if (l.ok) out.data.append(l.x, l.r.u, Provenance::DAgger, l.r.cost, l.r.cost_zero);
    }
    if (out.data.size() > n_before) out.policy = retrain(out.policy, out.data, arch, cfg, it);
    out.log.push_back(make_row(it, out.policy, out.data, out.expert_calls, t0));
    report(cfg, "dagger", out.log.back());
  }
  out.wall_time = seconds_since(t0);
  return out;
}

DartNoise dart_noise(const NeuralPolicy& net, const Dataset& ds, double alpha_d) {
  DartNoise n;
  n.N = ds.size();
  n.alpha_d = alpha_d;
  if (n.N == 0) throw DomainError("dart_noise: empty dataset");
  const Eigen::MatrixXd R = net.forward(ds.X) - ds.Y;
  n.Sigma_hat = R * R.transpose() / static_cast<double>(n.N);
  const double tr = n.Sigma_hat.trace();
  n.Sigma = tr > 0.0 ? Eigen::MatrixXd(alpha_d / (n.N * tr) * n.Sigma_hat)
                     : Eigen::MatrixXd::Zero(kControlDim, kControlDim);
  return n;
}

ControlVector sample_gaussian(std::mt19937_64& rng, const ControlVector& mean,
                              const Eigen::MatrixXd& Sigma) {
  if (Sigma.rows() != kControlDim || Sigma.cols() != kControlDim) {
    throw DomainError("sample_gaussian: covariance must be 60 x 60");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sigma);
  // round-off eigenvalues of a singular covariance would leak noise off its range
  const double floor = kControlDim * std::numeric_limits<double>::epsilon() *
                       es.eigenvalues().cwiseAbs().maxCoeff();
  const Eigen::VectorXd sd =
      es.eigenvalues().unaryExpr([floor](double l) { return l > floor ? std::sqrt(l) : 0.0; });
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd z(kControlDim);
  for (int i = 0; i < kControlDim; ++i) z[i] = n(rng);
  return mean + es.eigenvectors() * sd.cwiseProduct(z);
}

ILResult dart(const Dataset& ds0, const NetArch& arch, const ILConfig& cfg,
              const MpcExpert& expert) {
  cfg.validate();
  const auto t0 = Clock::now();
  ILResult out;
  out.data = ds0;
  out.policy = behavior_cloning(out.data, arch, cfg);
  out.log.push_back(make_row(0, out.policy, out.data, 0, t0));
  report(cfg, "dart", out.log.back());

  const Dynamics& dyn = expert.dynamics();
  const ReferenceOrbit& orbit = expert.orbit();
  const Vec12& W_x = expert.weights().W_x;
  const double T = orbit.period();
  const double delta_max = expert.options().delta_max;

  for (int it = 1; it <= cfg.iterations; ++it) {
    const int n_before = out.data.size();
    const Eigen::MatrixXd R = out.policy.forward(out.data.X) - out.data.Y;
    const double tr_hat = R.squaredNorm() / out.data.size();
    const DartNoise noise = dart_noise(out.policy, out.data, cfg.dart_scale * out.data.size() * tr_hat);
    std::vector<std::vector<Label>> labels(cfg.rollouts_per_iter);
    std::vector<int> calls(cfg.rollouts_per_iter, 0);
    // the noisy expert drives the system; the clean expert output is the label
    parallel_for(cfg.rollouts_per_iter, cfg.jobs, [&](int j) {
      std::mt19937_64 rng = substream(cfg.seed, kDartStream + it * kIterStride + j);
      FreeState s = perturb_state(orbit, sample_initial_error(rng, cfg.scales, W_x));
      for (int k = 0; k < cfg.rollout_periods; ++k) {
        const Vec12 e = state_error(s, orbit.initial());
        if (!(weighted_norm(e, W_x) <= expert.options().max_error)) break;
        Label l;
        l.x = weighted_input(e, W_x);
        ++calls[j];
        try {
          l.r = expert.solve(s);
        } catch (const std::exception&) {
          break;
        }
        l.ok = true;
        labels[j].push_back(l);
        const ControlVector u = sample_gaussian(rng, l.r.u, noise.Sigma);
        try {
          s = rollout(dyn, s, ControlSchedule::from_u(u, T, delta_max), cfg.steps_per_period);
        } catch (const std::exception&) {
          break;
        }
      }
    });
    for (int j = 0; j < cfg.rollouts_per_iter; ++j) {
      out.expert_calls += calls[j];
      for (const Label& l : labels[j]) {
        out.data.append(l.x, l.r.u, Provenance::DART, l.r.cost, l.r.cost_zero);
      }
    }
    if (out.data.size() > n_before) out.policy = retrain(out.policy, out.data, arch, cfg, it);
    out.log.push_back(make_row(it, out.policy, out.data, out.expert_calls, t0));
    report(cfg, "dart", out.log.back());
  }
  out.wall_time = seconds_since(t0);
  return out;
}

FisherMatrix::FisherMatrix(Eigen::MatrixXd G) : G_(std::move(G)) {
  if (!G_.allFinite()) throw NumericError("FisherMatrix: non-finite factor");
}

void FisherMatrix::factorize() const {
  if (factored_) return;
  // G = Q S U^T from the eigen-decomposition of the Gram matrix G^T G = U S^2 U^T
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G_.transpose() * G_);
  const Eigen::VectorXd s2 = es.eigenvalues();
  const double cut = 1e-14 * std::max(s2.size() ? s2.maxCoeff() : 0.0, 0.0);
  std::vector<int> keep;
  for (int i = 0; i < s2.size(); ++i) {
    if (s2[i] > cut && s2[i] > 0.0) keep.push_back(i);
  }
  Q_.resize(G_.rows(), static_cast<Eigen::Index>(keep.size()));
  d_.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    Q_.col(i) = G_ * es.eigenvectors().col(keep[i]) / std::sqrt(s2[keep[i]]);
    d_[i] = s2[keep[i]];
  }
  factored_ = true;
}

Eigen::MatrixXd FisherMatrix::scaled_inverse(const Eigen::MatrixXd& V, double eps) const {
  if (!(eps > 0.0)) throw DomainError("FisherMatrix: eps must be positive");
  if (V.rows() != G_.rows()) throw DomainError("FisherMatrix: dimension mismatch");
  factorize();
  const Eigen::ArrayXd shrink = d_.array() / (d_.array() + eps);
  return V - Q_ * ((Q_.transpose() * V).array().colwise() * shrink).matrix();
}

Eigen::MatrixXd FisherMatrix::solve_regularized(const Eigen::MatrixXd& V, double eps) const {
  return scaled_inverse(V, eps) / eps;
}

FisherMatrix fim_estimate(const NeuralPolicy& net, const Eigen::MatrixXd& X,
                          const Eigen::MatrixXd& Y) {
  if (X.cols() != Y.cols() || X.cols() == 0) throw DomainError("fim_estimate: bad batch");
  const Eigen::MatrixXd R = Y - net.forward(X);
  Eigen::MatrixXd G(net.size(), X.cols());
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    G.col(k) = net.grad_theta(X.col(k), R.col(k));
  }
  return FisherMatrix(G / std::sqrt(static_cast<double>(X.cols())));
}

double kl_gaussian(const NeuralPolicy& a, const NeuralPolicy& b, const FisherMatrix& F) {
  if (a.size() != b.size() || a.size() != F.dim()) throw DomainError("kl_gaussian: size mismatch");
  return 0.5 * F.quadratic(a.theta() - b.theta());
}

ProjectResult constrained_project(const Eigen::VectorXd& theta0, const FisherMatrix& F,
                                  const NetArch& arch, const ProjectOptions& opts) {
  arch.validate();
  if (theta0.size() != arch.param_count() || F.dim() != arch.param_count()) {
    throw DomainError("constrained_project: size mismatch");
  }
  const int n_out = arch.n_out;
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(arch.n_in, 1);
  const double trF = F.trace();
  const double eps = trF > 0.0 ? opts.eps_rel * trF / arch.param_count() : 1.0;
  const double step_tol = opts.step_tol * (1.0 + theta0.norm());

  ProjectResult best;
  best.theta = theta0;
  best.constraint_norm = std::numeric_limits<double>::infinity();
  Eigen::VectorXd theta = theta0;
  double prev = std::numeric_limits<double>::infinity();
  bool restore = false;
  for (int it = 0; it <= opts.max_iter; ++it) {
    const NeuralPolicy net(arch, theta);
    const Eigen::VectorXd c = net.forward(zero).col(0);
    const double cn = c.norm();
    // among feasible iterates the latest is the most nearly stationary
    if (cn < best.constraint_norm || cn <= opts.tol) {
      best.theta = theta;
      best.constraint_norm = cn;
      best.iterations = it;
      best.converged = cn <= opts.tol;
    }
    if (it == opts.max_iter) break;
    // if a KKT step fails to reduce |c|, restore feasibility from the best iterate
    if (!restore && cn > prev) {
      restore = true;
      theta = best.theta;
    }
    prev = cn;
    const NeuralPolicy at(arch, theta);
    const Eigen::VectorXd ca = at.forward(zero).col(0);
    // C^T, one column per constraint; at x = 0 only b_h, W_o and b_o contribute
    Eigen::MatrixXd Ct(theta.size(), n_out);
    Eigen::MatrixXd unit = Eigen::MatrixXd::Zero(n_out, 1);
    for (int i = 0; i < n_out; ++i) {
      unit(i, 0) = 1.0;
      Ct.col(i) = at.vjp(zero, unit);
      unit(i, 0) = 0.0;
    }
    // multipliers scaled by eps so that no term carries a 1 / eps factor
    const Eigen::MatrixXd P = F.scaled_inverse(Ct, eps);
    const auto S = (Ct.transpose() * P).eval().completeOrthogonalDecomposition();
    Eigen::VectorXd next;
    if (restore) {
      next = theta - P * S.solve(ca);
    } else {
      next = theta0 - P * S.solve(ca + Ct.transpose() * (theta0 - theta));
    }
    if (!next.allFinite()) break;
    const double moved = (next - theta).norm();
    theta = std::move(next);
    if (cn <= opts.tol && (restore || moved <= step_tol)) break;
  }
  return best;
}

ILResult coil(const Dataset& ds, const NetArch& arch, const ILConfig& cfg) {
  cfg.validate();
  ds.validate();
  const auto t0 = Clock::now();
  ILResult out;
  out.data = ds;
  out.policy = behavior_cloning(ds, arch, cfg);
  out.log.push_back(make_row(0, out.policy, ds, 0, t0));
  report(cfg, "coil", out.log.back());

  // the constraint penalty enters the retrain as a weighted zero pair
  Eigen::MatrixXd X8 = ds.X, Z8;
  TrainOptions opts8 = cfg.train;
  if (cfg.mu_c > 0.0) {
    X8.conservativeResize(Eigen::NoChange, ds.size() + 1);
    X8.col(ds.size()).setZero();
    opts8.weights.assign(ds.size() + 1, 1.0);
    opts8.weights.back() = cfg.mu_c * ds.size();
  }

  for (int it = 1; it <= cfg.iterations; ++it) {
    const Eigen::MatrixXd Yhat = out.policy.forward(ds.X);
    const Eigen::MatrixXd target = (1.0 - cfg.alpha) * ds.Y + cfg.alpha * Yhat;
    NeuralPolicy z0 = cfg.warm_start
                          ? out.policy
                          : NeuralPolicy::random(arch, cfg.seed + static_cast<std::uint64_t>(it));
    train(z0, ds.X, target, cfg.train);

    const FisherMatrix F = fim_estimate(z0, ds.X, ds.Y);
    const ProjectResult pr = constrained_project(z0.theta(), F, arch);
    if (!pr.converged) {
      out.warnings.push_back("iteration " + std::to_string(it) +
                             ": projection stalled at |c| = " + std::to_string(pr.constraint_norm));
    }
    const NeuralPolicy z(arch, pr.theta);
    Z8 = z.forward(X8);
    if (cfg.mu_c > 0.0) Z8.col(ds.size()).setZero();
    // retrain from theta_z0: starting at theta_z would already fit Z exactly
    NeuralPolicy next = z0;
    train(next, X8, Z8, opts8);
    out.policy = next;

    ILIteration row = make_row(it, out.policy, ds, 0, t0);
    row.f0_projected = zero_output_norm(z);
    out.log.push_back(row);
    report(cfg, "coil", row);
  }
  out.wall_time = seconds_since(t0);
  return out;
}

}  // namespace fwuav
