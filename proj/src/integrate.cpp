#include "fwuav/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fwuav/errors.hpp"

namespace fwuav {

void ButcherTableau::validate() const {
  const int s = stages();
  if (s < 1 || a.rows() != s || a.cols() != s || c.size() != s) {
    throw DomainError("ButcherTableau " + name + ": inconsistent sizes");
  }
  for (int i = 0; i < s; ++i) {
    for (int j = i; j < s; ++j) {
      if (a(i, j) != 0.0) throw DomainError("ButcherTableau " + name + ": not explicit");
    }
    if (std::abs(a.row(i).sum() - c[i]) > 1e-14) {
      throw DomainError("ButcherTableau " + name + ": c is not the row sum of a");
    }
  }
  if (std::abs(b.sum() - 1.0) > 1e-14) throw DomainError("ButcherTableau " + name + ": sum(b) != 1");
}

std::string ButcherTableau::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  for (int i = 0; i < a.size(); ++i) mix(a(i));
  for (int i = 0; i < b.size(); ++i) mix(b(i));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace {

ButcherTableau finish(std::string name, Eigen::MatrixXd a, Eigen::VectorXd b, int order) {
  ButcherTableau t{std::move(name), std::move(a), std::move(b), Eigen::VectorXd(), order};
  t.c = t.a.rowwise().sum();
  t.validate();
  return t;
}

}  // namespace

ButcherTableau ButcherTableau::cg4() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(5, 5);
  a(1, 0) = 0.8177227988124852;
  a(2, 0) = 0.3199876375476427;
  a(2, 1) = 0.0659864263556022;
  a(3, 0) = 0.9214417194464946;
  a(3, 1) = 0.4997857776773573;
  a(3, 2) = -1.0969984448371582;
  a(4, 0) = 0.3552358559023322;
  a(4, 1) = 0.2390958372307326;
  a(4, 2) = 1.3918565724203246;
  a(4, 3) = -1.1092979392113565;
  Eigen::VectorXd b(5);
  b << 0.1370831520630755, -0.0183698531564020, 0.7397813985370780, -0.1907142565505889,
      0.3322195591068374;
  return finish("cg4", a, b, 4);
}

ButcherTableau ButcherTableau::lie_euler() {
  return finish("lie_euler", Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1), 1);
}

ButcherTableau ButcherTableau::rk4() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
  a(1, 0) = 0.5;
  a(2, 1) = 0.5;
  a(3, 2) = 1.0;
  Eigen::VectorXd b(4);
  b << 1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0;
  return finish("rk4", a, b, 4);
}

VectorField make_field(const Dynamics& dyn, const ControlSchedule& schedule, double t0) {
  return [&dyn, schedule, t0](double t, const Vec3&, const Mat3& R, const Vec3& v,
                              const Vec3& Omega) {
    return dyn.evaluate(t, R, v, Omega, schedule, t0).xi1_dot;
  };
}

FreeState cg_step(const FreeState& s, double t, double h, const VectorField& f,
                  const ButcherTableau& tab) {
  const int n = tab.stages();
  std::vector<Vec6> xi(n), zeta(n);
  const Vec6 xi0 = s.xi.stacked();
  const Mat3& R0 = s.R().matrix();
  for (int i = 0; i < n; ++i) {
    Vec3 x = s.x();
    Mat3 R = R0;
    Vec6 xi_i = xi0;
    for (int j = 0; j < i; ++j) {
      const double ha = h * tab.a(i, j);
      if (ha == 0.0) continue;
      x += ha * xi[j].head<3>();
      R = R * exp_so3_matrix(ha * xi[j].tail<3>());
      xi_i += ha * zeta[j];
    }
    xi[i] = xi_i;
    try {
      zeta[i] = f(t + tab.c[i] * h, x, R, xi_i.head<3>(), xi_i.tail<3>());
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (stage " + std::to_string(i + 1) + ")");
    }
  }
  Vec3 x = s.x();
  Mat3 R = R0;
  Vec6 xi1 = xi0;
  for (int i = 0; i < n; ++i) {
    const double hb = h * tab.b[i];
    x += hb * xi[i].head<3>();
    R = R * exp_so3_matrix(hb * xi[i].tail<3>());
    xi1 += hb * zeta[i];
  }
  return {{x, Rotation(R)}, Twist::from(xi1)};
}

FlatState rk_flat_step(const FlatState& s, double t, double h, const VectorField& f,
                       const ButcherTableau& tab) {
  const int n = tab.stages();
  std::vector<Vec3> kx(n), kv(n), kw(n);
  std::vector<Mat3> kR(n);
  for (int i = 0; i < n; ++i) {
    FlatState y = s;
    for (int j = 0; j < i; ++j) {
      const double ha = h * tab.a(i, j);
      if (ha == 0.0) continue;
      y.x += ha * kx[j];
      y.R += ha * kR[j];
      y.v += ha * kv[j];
      y.Omega += ha * kw[j];
    }
    const Vec6 acc = f(t + tab.c[i] * h, y.x, y.R, y.v, y.Omega);
    kx[i] = y.v;
    kR[i] = y.R * hat(y.Omega);
    kv[i] = acc.head<3>();
    kw[i] = acc.tail<3>();
  }
  FlatState out = s;
  for (int i = 0; i < n; ++i) {
    const double hb = h * tab.b[i];
    out.x += hb * kx[i];
    out.R += hb * kR[i];
    out.v += hb * kv[i];
    out.Omega += hb * kw[i];
  }
  return out;
}

void Trajectory::write_csv(std::ostream& os) const {
  os << "t,x1,x2,x3,R11,R12,R13,R21,R22,R23,R31,R32,R33,v1,v2,v3,W1,W2,W3,err\n";
  os << std::setprecision(17);
  for (size_t k = 0; k < states.size(); ++k) {
    const FreeState& s = states[k];
    os << times[k];
    for (int i = 0; i < 3; ++i) os << ',' << s.x()[i];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) os << ',' << s.R().matrix()(r, c);
    }
    for (int i = 0; i < 3; ++i) os << ',' << s.v()[i];
    for (int i = 0; i < 3; ++i) os << ',' << s.Omega()[i];
    os << ',';
    if (k < errors.size()) os << errors[k];
    os << '\n';
  }
}

Controller zero_controller(double period) {
  return [period](int, double, const FreeState&) { return ControlSchedule(period, 1); };
}

Trajectory simulate(const Dynamics& dyn, const FreeState& initial, int n_periods,
                    const Controller& controller, const SimOptions& opts, double t0) {
  if (n_periods < 1) throw DomainError("simulate: n_periods must be at least 1");
  if (opts.steps_per_period < 1) throw DomainError("simulate: steps_per_period must be positive");
  if (opts.record_stride < 1 || opts.steps_per_period % opts.record_stride != 0) {
    throw DomainError("simulate: record_stride must divide steps_per_period");
  }
  const double T = dyn.period();
  const double h = T / opts.steps_per_period;
  Trajectory traj;
  traj.h = h;
  traj.stride = opts.record_stride;
  traj.method = opts.tableau.name;
  traj.morphology_hash = dyn.morphology().hash();
  traj.times.push_back(t0);
  traj.states.push_back(initial);

  FreeState s = initial;
  for (int k = 0; k < n_periods; ++k) {
    const double tk = t0 + k * T;
    try {
      ControlSchedule sched = controller(k, tk, s);
      if (sched.n_periods() != 1 || std::abs(sched.period() - T) > 1e-12 * T) {
        throw DomainError("simulate: controller must return a one-period schedule");
      }
      traj.schedules.push_back(sched);
      const VectorField f = make_field(dyn, traj.schedules.back(), tk);
      for (int j = 0; j < opts.steps_per_period; ++j) {
        s = cg_step(s, tk + j * h, h, f, opts.tableau);
        if ((j + 1) % opts.record_stride == 0) {
          traj.times.push_back(tk + (j + 1) * h);
          traj.states.push_back(s);
        }
      }
    } catch (const NumericError& e) {
      traj.failed = true;
      traj.failure = e.what();
      return traj;
    } catch (const std::invalid_argument& e) {
      // a diverging state can produce an attitude that fails validation
      if (dynamic_cast<const DomainError*>(&e)) throw;
      traj.failed = true;
      traj.failure = e.what();
      return traj;
    }
  }
  return traj;
}

FreeState rollout(const Dynamics& dyn, const FreeState& initial, const ControlSchedule& schedule,
                  int steps_per_period, std::vector<FreeState>* samples,
                  const ButcherTableau& tab) {
  if (steps_per_period % kKnotsPerPeriod != 0) {
    throw DomainError("rollout: steps_per_period must be a multiple of the knot count");
  }
  const double T = dyn.period();
  const double h = T / steps_per_period;
  const int per_knot = steps_per_period / kKnotsPerPeriod;
  const VectorField f = make_field(dyn, schedule, 0.0);
  FreeState s = initial;
  if (samples) {
    samples->clear();
    samples->push_back(s);
  }
  const int total = steps_per_period * schedule.n_periods();
  for (int j = 0; j < total; ++j) {
    s = cg_step(s, j * h, h, f, tab);
    if (samples && (j + 1) % per_knot == 0) samples->push_back(s);
  }
  return s;
}

namespace {

// Forced rigid body with a position-attitude coupling; smooth and non-commutative.
Vec6 test_field(double t, const Vec3& x, const Mat3& R, const Vec3& v, const Vec3& W) {
  const Vec3 I(1.0, 2.0, 3.0);
  const Vec3 IW = I.cwiseProduct(W);
  Vec6 out;
  out.head<3>() = -x - 0.5 * R.col(0) + std::cos(t) * Vec3::UnitZ() - 0.1 * v;
  out.tail<3>() = (IW.cross(W) + 0.4 * Vec3::UnitX().cross(R.transpose() * Vec3::UnitZ()) +
                   0.2 * std::sin(t) * Vec3::UnitY())
                      .cwiseQuotient(I);
  return out;
}

struct Endpoint {
  Vec3 x;
  Mat3 R;
};

Endpoint integrate_test(const ButcherTableau& tab, bool flat, int n, double t_end) {
  const double h = t_end / n;
  FreeState s{{Vec3(0.3, -0.2, 0.1), Rotation::exp(Vec3(0.2, -0.5, 0.3))},
              {Vec3(0.2, 0.0, 0.1), Vec3(0.7, -0.4, 1.1)}};
  if (flat) {
    FlatState y = FlatState::from(s);
    for (int k = 0; k < n; ++k) y = rk_flat_step(y, k * h, h, test_field, tab);
    return {y.x, y.R};
  }
  for (int k = 0; k < n; ++k) s = cg_step(s, k * h, h, test_field, tab);
  return {s.x(), s.R().matrix()};
}

}  // namespace

OrderResult order_test(const ButcherTableau& tab, bool flat) {
  tab.validate();
  const double t_end = 2.0;
  const Endpoint ref = integrate_test(flat ? ButcherTableau::rk4() : ButcherTableau::cg4(), flat,
                                      8192, t_end);
  OrderResult out;
  const std::vector<int> counts =
      tab.order >= 3 ? std::vector<int>{16, 32, 64, 128} : std::vector<int>{64, 128, 256, 512};
  for (int n : counts) {
    const Endpoint e = integrate_test(tab, flat, n, t_end);
    const Mat3 D = ref.R.transpose() * e.R;
    // the flat integrator leaves SO(3), so compare matrices directly
    const double rot = flat ? (e.R - ref.R).norm() : log_so3(D).norm();
    out.steps.push_back(t_end / n);
    out.errors.push_back((e.x - ref.x).norm() + rot);
  }
  const int m = static_cast<int>(counts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < m; ++i) {
    const double lx = std::log2(out.steps[i]);
    const double ly = std::log2(out.errors[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  out.order = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return out;
}

double OrthogonalityComparison::group_max() const {
  double m = 0.0;
  for (double v : group) m = std::max(m, v);
  return m;
}

double OrthogonalityComparison::flat_max() const {
  double m = 0.0;
  for (double v : flat) m = std::max(m, v);
  return m;
}

void OrthogonalityComparison::write_csv(std::ostream& os) const {
  os << "t,cg,rk4\n";
  char buf[96];
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.10e,%.10e,%.10e\n", times[k], group[k], flat[k]);
    os << buf;
  }
}

OrthogonalityComparison orthogonality_comparison(const Dynamics& dyn, const FreeState& initial,
                                                 int n_periods, int steps_per_period) {
  if (n_periods < 1 || steps_per_period < 1) {
    throw DomainError("orthogonality_comparison: need positive periods and steps");
  }
  const ControlSchedule zero(dyn.period(), n_periods);
  const VectorField f = make_field(dyn, zero, 0.0);
  const ButcherTableau cg = ButcherTableau::cg4();
  const double h = dyn.period() / steps_per_period;
  OrthogonalityComparison out;
  FreeState s = initial;
  FlatState q = FlatState::from(initial);
  out.times.push_back(0.0);
  out.group.push_back(orthogonality_error(s.R().matrix()));
  out.flat.push_back(orthogonality_error(q.R));
  const int n = n_periods * steps_per_period;
  for (int k = 0; k < n; ++k) {
    const double t = k * h;
    s = cg_step(s, t, h, f, cg);
    q = rk4_step(q, t, h, f);
    const double e = orthogonality_error(q.R);
    if (!std::isfinite(e)) break;
    out.times.push_back((k + 1) * h);
    out.group.push_back(orthogonality_error(s.R().matrix()));
    out.flat.push_back(e);
  }
  return out;
}

}  // namespace fwuav
