#include "fwuav/expert.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fwuav/errors.hpp"
#include "fwuav/hash.hpp"
#include "fwuav/parallel.hpp"

namespace fwuav {

CostWeights CostWeights::defaults() {
  return {state_weights(0.02, 0.2, 0.2, 2.0), geometric(1.2)};
}

Vec12 CostWeights::state_weights(double pos, double att, double vel, double rate) {
  Vec12 w;
  w << Vec3::Constant(1.0 / pos), Vec3::Constant(1.0 / att), Vec3::Constant(1.0 / vel),
      Vec3::Constant(1.0 / rate);
  return w;
}

std::vector<double> CostWeights::geometric(double ratio, int n) {
  std::vector<double> w(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += (w[i] = std::pow(ratio, i + 1));
  for (double& v : w) v /= sum;
  return w;
}

void CostWeights::validate() const {
  if (!(W_x.minCoeff() > 0.0) || !W_x.allFinite()) {
    throw DomainError("CostWeights: W_x must be positive");
  }
  if (static_cast<int>(W_i.size()) != kHorizonKnots) {
    throw DomainError("CostWeights: need one time weight per horizon knot");
  }
  for (size_t i = 0; i < W_i.size(); ++i) {
    if (!(W_i[i] > 0.0)) throw DomainError("CostWeights: W_i must be positive");
    if (i > 0 && W_i[i] < W_i[i - 1]) throw DomainError("CostWeights: W_i must be nondecreasing");
  }
}

double weighted_norm(const StateError& e, const Vec12& W_x) { return e.cwiseProduct(W_x).norm(); }

const FreeState& ReferenceOrbit::desired(double t) const {
  const double T = period();
  double phase = std::fmod(t, T);
  if (phase < 0.0) phase += T;
  const int n = static_cast<int>(samples.size()) - 1;
  const int k = static_cast<int>(std::lround(phase / T * n));
  return samples[std::clamp(k, 0, n) % n];
}

std::string orbit_hash(const ReferenceOrbit& orbit) {
  Fnv1a h;
  for (const WingParams* w : {&orbit.params.right, &orbit.params.left}) {
    for (double v : {w->f, w->phi_m, w->phi_0, w->phi_K, w->theta_m, w->theta_0, w->theta_C,
                     w->theta_a, w->psi_m, w->psi_0, w->psi_a, w->beta}) {
      h.add(v);
    }
    h.add(w->psi_N);
  }
  h.add(orbit.steps_per_period).add(std::string_view(orbit.morphology_hash));
  const FreeState& s = orbit.initial();
  for (int i = 0; i < 3; ++i) h.add(s.x()(i)).add(s.v()(i)).add(s.Omega()(i));
  for (int i = 0; i < 9; ++i) h.add(s.R().matrix()(i));
  return h.hex();
}

StateError state_error(const FreeState& s, const FreeState& d) {
  StateError e;
  e.segment<3>(0) = s.x() - d.x();
  e.segment<3>(3) = attitude_error(s.R(), d.R());
  e.segment<3>(6) = s.v() - d.v();
  e.segment<3>(9) = s.Omega() - s.R().matrix().transpose() * (d.R().matrix() * d.Omega());
  return e;
}

WeightedError weighted_error(const FreeState& s, double t, const ReferenceOrbit& orbit,
                             const Vec12& W_x) {
  const StateError e = state_error(s, orbit.desired(t));
  return {e, weighted_norm(e, W_x)};
}

FreeState perturb_state(const FreeState& d, const StateError& e) {
  const Vec3 dR = e.segment<3>(3);
  const double s = dR.norm();
  if (!(s < 1.0)) throw DomainError("perturb_state: attitude error must have norm below 1");
  const Vec3 eta = s > 0.0 ? Vec3(std::asin(s) / s * dR) : Vec3::Zero();
  const Rotation R = d.R() * Rotation::exp(eta);
  const Vec3 Omega = e.segment<3>(9) + R.matrix().transpose() * (d.R().matrix() * d.Omega());
  return {{d.x() + e.segment<3>(0), R}, {d.v() + e.segment<3>(6), Omega}};
}

namespace {

// Orbit unknowns: v(3), Omega(3), attitude(3), dphi_m, dtheta_0, dphi_0 [, log f ratio].
struct OrbitProblem {
  Morphology m;
  WingPair seed;
  OrbitOptions opts;

  int size() const { return opts.free_frequency ? 13 : 12; }

  WingPair params(const Eigen::VectorXd& z) const {
    WingPair p = seed;
    for (WingParams* w : {&p.right, &p.left}) {
      w->phi_m += z[9];
      w->theta_0 += z[10];
      w->phi_0 += z[11];
      if (opts.free_frequency) w->f *= std::exp(z[12]);
    }
    return p;
  }

  FreeState initial(const Eigen::VectorXd& z) const {
    return {{Vec3::Zero(), Rotation::exp(z.segment<3>(6))}, {z.segment<3>(0), z.segment<3>(3)}};
  }

  struct Eval {
    Eigen::VectorXd defect;
    double power = 0.0;
    Vec3 force = Vec3::Zero();
    std::vector<FreeState> samples;
  };

  Eval eval(const Eigen::VectorXd& z, bool keep) const {
    const WingPair p = params(z);
    Dynamics dyn(m, p);
    const ControlSchedule zero(dyn.period(), 1);
    const VectorField f = make_field(dyn, zero, 0.0);
    const int n = opts.steps_per_period;
    const double h = dyn.period() / n;
    const ButcherTableau tab = ButcherTableau::cg4();
    FreeState s = initial(z);
    Eval out;
    if (keep) out.samples.push_back(s);
    for (int j = 0; j < n; ++j) {
      const double t = j * h;
      double pw = 0.0;
      const Wrench a =
          aero_wrench(s.R().matrix(), s.v(), s.Omega(), dyn.wings(t, zero), m, &pw);
      out.power += pw / n;
      out.force += a.body.head<3>() / n;
      s = cg_step(s, t, h, f, tab);
      if (keep) out.samples.push_back(s);
    }
    const FreeState s0 = initial(z);
    StateError d;
    d << s.x() - s0.x(), attitude_error(s.R(), s0.R()), s.v() - s0.v(), s.Omega() - s0.Omega();
    out.defect = d.cwiseProduct(opts.W_x);
    return out;
  }
};

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                            const Eigen::VectorXd& z, const Eigen::VectorXd& f0, double step) {
  Eigen::MatrixXd J(f0.size(), z.size());
  for (int k = 0; k < z.size(); ++k) {
    Eigen::VectorXd zk = z;
    zk[k] += step;
    J.col(k) = (F(zk) - f0) / step;
  }
  return J;
}

}  // namespace

ReferenceOrbit find_periodic_orbit(const Morphology& m, const WingPair& seed,
                                   const OrbitOptions& opts) {
  m.validate();
  seed.right.validate();
  seed.left.validate();
  if (opts.steps_per_period < 1) throw DomainError("find_periodic_orbit: bad steps_per_period");
  const OrbitProblem prob{m, seed, opts};
  const int n = prob.size();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);

  OrbitProblem::Eval e0;
  try {
    e0 = prob.eval(z, false);
  } catch (const std::exception& ex) {
    throw ConvergenceError(std::string("find_periodic_orbit: seed is not simulable: ") + ex.what(),
                           std::numeric_limits<double>::infinity());
  }
  const double p_ref = std::max(e0.power, 1e-12);

  // Phase 1: periodicity defect plus the energy term, Levenberg-Marquardt.
  auto full = [&](const Eigen::VectorXd& zz) {
    const auto ev = prob.eval(zz, false);
    Eigen::VectorXd r(ev.defect.size() + 1);
    r << ev.defect, std::sqrt(opts.lambda_E * std::max(ev.power, 0.0) / p_ref);
    return r;
  };
  auto safe = [&](const auto& F, const Eigen::VectorXd& zz, Eigen::VectorXd& out) {
    try {
      out = F(zz);
      return out.allFinite();
    } catch (const std::exception&) {
      return false;
    }
  };

  Eigen::VectorXd r;
  if (!safe(full, z, r)) {
    throw ConvergenceError("find_periodic_orbit: seed is not simulable",
                           std::numeric_limits<double>::infinity());
  }
  double mu = 1e-3;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::MatrixXd J = fd_jacobian(full, z, r, 1e-7);
    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    for (int tries = 0; tries < 8 && !accepted; ++tries) {
      Eigen::MatrixXd A = H;
      A.diagonal() += mu * (H.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd step = -A.ldlt().solve(g);
      Eigen::VectorXd r_new;
      if (safe(full, z + step, r_new) && r_new.squaredNorm() < r.squaredNorm()) {
        const double gain = r.squaredNorm() - r_new.squaredNorm();
        z += step;
        r = r_new;
        mu = std::max(mu / 3.0, 1e-9);
        accepted = true;
        if (opts.verbose) {
          std::fprintf(stderr, "orbit LM %d: defect %.3e cost %.6e\n", it,
                       r.head(12).norm(), r.squaredNorm());
        }
        if (gain < 1e-12 * r.squaredNorm()) it = opts.max_iter;
      } else {
        mu *= 4.0;
      }
    }
    if (!accepted) break;
  }

  // Phase 2: drive the defect alone to zero with lightly damped Gauss-Newton steps.
  auto defect = [&](const Eigen::VectorXd& zz) { return prob.eval(zz, false).defect; };
  Eigen::VectorXd d;
  if (!safe(defect, z, d)) {
    throw ConvergenceError("find_periodic_orbit: lost the orbit", r.head(12).norm());
  }
  for (int it = 0; it < 40 && d.norm() > opts.polish_tol; ++it) {
    const Eigen::MatrixXd J = fd_jacobian(defect, z, d, 1e-8);
    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * d;
    bool accepted = false;
    for (double damp = 1e-12; damp < 1e3 && !accepted; damp *= 10.0) {
      Eigen::MatrixXd A = H;
      A.diagonal().array() += damp * H.diagonal().maxCoeff();
      const Eigen::VectorXd step = -A.ldlt().solve(g);
      Eigen::VectorXd d_new;
      if (safe(defect, z + step, d_new) && d_new.norm() < d.norm()) {
        z += step;
        d = d_new;
        accepted = true;
      }
    }
    if (opts.verbose) std::fprintf(stderr, "orbit Newton %d: defect %.3e\n", it, d.norm());
    if (!accepted) break;
  }
  if (!(d.norm() <= opts.tol)) {
    std::ostringstream os;
    os << "find_periodic_orbit: periodicity defect " << d.norm() << " above tolerance " << opts.tol;
    throw ConvergenceError(os.str(), d.norm());
  }

  const auto fin = prob.eval(z, true);
  ReferenceOrbit orbit;
  orbit.params = prob.params(z);
  orbit.steps_per_period = opts.steps_per_period;
  orbit.samples = fin.samples;
  orbit.defect = fin.defect.norm();
  orbit.mean_power = fin.power;
  orbit.mean_aero_force = fin.force;
  orbit.morphology_hash = m.hash();
  return orbit;
}

double tracking_cost(const std::vector<FreeState>& samples, const ReferenceOrbit& orbit,
                     const CostWeights& W) {
  const int np = static_cast<int>(W.W_i.size());
  if (static_cast<int>(samples.size()) < np + 1) {
    throw DomainError("tracking_cost: trajectory does not cover the horizon");
  }
  const double dt = orbit.period() / kKnotsPerPeriod;
  double J = 0.0;
  for (int i = 1; i <= np; ++i) {
    J += W.W_i[i - 1] * weighted_norm(state_error(samples[i], orbit.desired(i * dt)), W.W_x);
  }
  return J;
}

MpcExpert::MpcExpert(const Dynamics& dyn, const ReferenceOrbit& orbit, CostWeights W,
                     MpcOptions opts)
    : dyn_(dyn), orbit_(orbit), W_(std::move(W)), opts_(opts) {
  W_.validate();
  if (!(dyn_.reference() == orbit_.params)) {
    throw DomainError("MpcExpert: dynamics reference differs from the orbit parameters");
  }
  if (opts_.steps_per_period % kKnotsPerPeriod != 0) {
    throw DomainError("MpcExpert: steps_per_period must be a multiple of the knot count");
  }
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(kFree);
  J0_ = jacobian(orbit_.initial(), z, residual(orbit_.initial(), z));
}

ControlSchedule MpcExpert::schedule(const Eigen::VectorXd& z) const {
  ControlSchedule s(dyn_.period(), 2);
  int idx = 0;
  for (int k = 1; k < kHorizonKnots; ++k) {
    if (s.is_boundary_knot(k)) continue;
    s.set_knot(k, z.segment<6>(6 * idx++));
  }
  return s;
}

MpcExpert::Residual MpcExpert::residual(const FreeState& initial, const Eigen::VectorXd& z) const {
  std::vector<FreeState> samples;
  rollout(dyn_, initial, schedule(z), opts_.steps_per_period, &samples);
  Residual r(12 * kHorizonKnots);
  const double dt = dyn_.period() / kKnotsPerPeriod;
  for (int i = 1; i <= kHorizonKnots; ++i) {
    r.segment<12>(12 * (i - 1)) =
        state_error(samples[i], orbit_.desired(i * dt)).cwiseProduct(W_.W_x);
  }
  return r;
}

double MpcExpert::cost(const Residual& r) const {
  if (!r.allFinite()) return std::numeric_limits<double>::infinity();
  double J = 0.0;
  for (int i = 0; i < kHorizonKnots; ++i) J += W_.W_i[i] * r.segment<12>(12 * i).norm();
  return J;
}

MpcExpert::Jac MpcExpert::jacobian(const FreeState& initial, const Eigen::VectorXd& z,
                                   const Residual& r0) const {
  Jac J(r0.size(), kFree);
  parallel_for(kFree, opts_.jobs, [&](int k) {
    Eigen::VectorXd zk = z;
    // step inward at the upper bound so the perturbed knot stays admissible
    const double h = zk[k] + opts_.fd_step > opts_.delta_max ? -opts_.fd_step : opts_.fd_step;
    zk[k] += h;
    J.col(k) = (residual(initial, zk) - r0) / h;
  });
  return J;
}

MpcResult MpcExpert::solve(const FreeState& initial) const {
  const double e0 = weighted_norm(state_error(initial, orbit_.initial()), W_.W_x);
  if (!(e0 <= opts_.max_error)) {
    std::ostringstream os;
    os << "mpc_solve: initial weighted error " << e0 << " exceeds " << opts_.max_error;
    throw DomainError(os.str());
  }
  MpcResult out;
  const double rho = opts_.effort_weight;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(kFree);
  Residual r;
  auto eval = [&](const Eigen::VectorXd& zz, Residual& rr) {
    ++out.rollouts;
    try {
      rr = residual(initial, zz);
    } catch (const std::exception&) {
      rr = Residual::Constant(12 * kHorizonKnots, std::numeric_limits<double>::quiet_NaN());
    }
    return cost(rr) + rho * zz.squaredNorm();
  };
  double J = eval(z, r);
  if (!std::isfinite(J)) throw NumericError("mpc_solve: zero-control rollout failed");
  out.cost_zero = J;

  Jac Jk = J0_;
  double mu = 1e-6;
  for (int it = 0; it < opts_.max_iter; ++it) {
    out.iterations = it + 1;
    if (opts_.refresh_every > 0 && it % opts_.refresh_every == 0) {
      Jk = jacobian(initial, z, r);
      out.rollouts += kFree;
    }
    // reweighted Gauss-Newton model of the sum of norms
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(kFree, kFree);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(kFree);
    for (int i = 0; i < kHorizonKnots; ++i) {
      const auto Ji = Jk.middleRows<12>(12 * i);
      const auto ri = r.segment<12>(12 * i);
      const double w = W_.W_i[i] / std::max(ri.norm(), 1e-9);
      H.noalias() += w * Ji.transpose() * Ji;
      g.noalias() += w * Ji.transpose() * ri;
    }
    H.diagonal().array() += 2.0 * rho;
    g += 2.0 * rho * z;
    if (g.norm() == 0.0) break;
    // knots pinned at a bound with the descent direction pointing outward stay fixed
    std::vector<int> free;
    for (int k = 0; k < kFree; ++k) {
      const bool at_upper = z[k] >= opts_.delta_max - 1e-12 && g[k] < 0.0;
      const bool at_lower = z[k] <= -opts_.delta_max + 1e-12 && g[k] > 0.0;
      if (!at_upper && !at_lower) free.push_back(k);
    }
    if (free.empty()) break;
    const int nf = static_cast<int>(free.size());
    Eigen::MatrixXd Hf(nf, nf);
    Eigen::VectorXd gf(nf);
    for (int a = 0; a < nf; ++a) {
      gf[a] = g[free[a]];
      for (int b = 0; b < nf; ++b) Hf(a, b) = H(free[a], free[b]);
    }
    const double scale = Hf.diagonal().maxCoeff();
    bool accepted = false;
    for (int tries = 0; tries < 6 && !accepted; ++tries) {
      Eigen::MatrixXd A = Hf;
      A.diagonal().array() += mu * scale;
      const Eigen::VectorXd sf = -A.ldlt().solve(gf);
      Eigen::VectorXd step = Eigen::VectorXd::Zero(kFree);
      for (int a = 0; a < nf; ++a) step[free[a]] = sf[a];
      double alpha = 1.0;
      for (int ls = 0; ls < 3; ++ls, alpha *= 0.5) {
        const Eigen::VectorXd zc =
            (z + alpha * step).cwiseMax(-opts_.delta_max).cwiseMin(opts_.delta_max);
        const Eigen::VectorXd s = zc - z;
        if (s.squaredNorm() == 0.0) break;
        Residual rc;
        const double Jc = eval(zc, rc);
        if (rc.allFinite()) Jk += ((rc - r) - Jk * s) * s.transpose() / s.squaredNorm();
        if (Jc < J) {
          const double gain = J - Jc;
          z = zc;
          r = rc;
          J = Jc;
          accepted = true;
          mu = std::max(mu / 4.0, 1e-9);
          if (gain < opts_.rel_tol * J) it = opts_.max_iter;
          break;
        }
      }
      if (!accepted) mu *= 16.0;
    }
    if (opts_.verbose) {
      std::fprintf(stderr, "mpc %d: J %.6g free %d mu %.1e rollouts %d\n", it, J, nf, mu,
                   out.rollouts);
    }
    if (!accepted) break;
  }
  out.cost = cost(r);
  if (!(out.cost <= out.cost_zero)) {
    // the effort term traded tracking for smoothness past J(0); fall back to zero control
    z.setZero();
    out.cost = out.cost_zero;
  }
  out.knots = z;
  for (int k = 1; k < kKnotsPerPeriod; ++k) {
    for (int c = 0; c < 6; ++c) out.u[c * kKnotsPerPeriod + (k - 1)] = z[6 * (k - 1) + c];
  }
  return out;
}

MpcResult MpcExpert::solve_error(const StateError& e) const {
  return solve(perturb_state(orbit_, e));
}

MpcResult mpc_solve(const FreeState& initial, const Dynamics& dyn, const ReferenceOrbit& orbit,
                    const CostWeights& W, const MpcOptions& opts) {
  return MpcExpert(dyn, orbit, W, opts).solve(initial);
}

}  // namespace fwuav
