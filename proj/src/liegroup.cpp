#include "fwuav/liegroup.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fwuav {

Mat3 hat(const Vec3& v) {
  Mat3 A;
  A << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return A;
}

Vec3 vee(const Mat3& A) {
  const double asym = (A + A.transpose()).norm();
  if (asym > 1e-8) {
    throw std::invalid_argument("vee: matrix is not skew-symmetric (||A+A^T|| = " +
                                std::to_string(asym) + ")");
  }
  return {0.5 * (A(2, 1) - A(1, 2)), 0.5 * (A(0, 2) - A(2, 0)), 0.5 * (A(1, 0) - A(0, 1))};
}

Mat3 exp_so3_matrix(const Vec3& v) {
  const double theta2 = v.squaredNorm();
  const Mat3 W = hat(v);
  double a, b;
  if (theta2 < 1e-12) {
    // sin(t)/t and (1-cos t)/t^2 to fourth order
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * W + b * W * W;
}

Vec3 log_so3(const Mat3& R) {
  double c = 0.5 * (R.trace() - 1.0);
  c = std::clamp(c, -1.0, 1.0);
  const double theta = std::acos(c);
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (theta < 1e-6) return 0.5 * (1.0 + theta * theta / 6.0) * w;
  if (M_PI - theta < 1e-6) {
    // axis from the symmetric part, sign from the residual skew part
    const Mat3 B = 0.5 * (R + Mat3::Identity());
    Eigen::Index k;
    B.diagonal().maxCoeff(&k);
    Vec3 axis = B.col(k) / std::sqrt(std::max(B(k, k), 1e-300));
    if (axis.dot(w) < 0.0) axis = -axis;
    return theta * axis.normalized();
  }
  return 0.5 * theta / std::sin(theta) * w;
}

double orthogonality_error(const Mat3& R) {
  return (R.transpose() * R - Mat3::Identity()).norm();
}

Rotation::Rotation(const Mat3& m) : m_(m) {
  const double orth = orthogonality_error(m);
  const double det = m.determinant();
  if (!(orth <= kTolerance) || !(std::abs(det - 1.0) <= kTolerance)) {
    throw std::invalid_argument("Rotation: matrix is not in SO(3) (orthogonality error " +
                                std::to_string(orth) + ", det " + std::to_string(det) + ")");
  }
}

Rotation Rotation::exp(const Vec3& v) { return Rotation(exp_so3_matrix(v), Unchecked{}); }

Rotation Rotation::transpose() const { return Rotation(m_.transpose(), Unchecked{}); }

Rotation Rotation::operator*(const Rotation& other) const {
  return Rotation(m_ * other.m_);
}

Vec3 attitude_error(const Rotation& R, const Rotation& Rd) {
  const Mat3 E = Rd.matrix().transpose() * R.matrix();
  return 0.5 * Vec3(E(2, 1) - E(1, 2), E(0, 2) - E(2, 0), E(1, 0) - E(0, 1));
}

}  // namespace fwuav
