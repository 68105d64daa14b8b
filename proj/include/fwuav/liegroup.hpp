#pragma once

#include <Eigen/Dense>

namespace fwuav {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat12 = Eigen::Matrix<double, 12, 12>;

/// Skew-symmetric matrix such that hat(v) * w == v.cross(w).
Mat3 hat(const Vec3& v);

/// Inverse of hat. Throws std::invalid_argument when ||A + A^T||_F > 1e-8.
Vec3 vee(const Mat3& A);

/// Rodrigues exponential of so(3), with a Taylor fallback near zero.
Mat3 exp_so3_matrix(const Vec3& v);

/// Principal logarithm (rotation vector with norm in [0, pi]).
Vec3 log_so3(const Mat3& R);

/// ||R^T R - I||_F.
double orthogonality_error(const Mat3& R);

/// An element of SO(3). Construction validates orthogonality and determinant
/// but never re-orthonormalizes.
class Rotation {
 public:
  static constexpr double kTolerance = 1e-10;

  Rotation() : m_(Mat3::Identity()) {}
  explicit Rotation(const Mat3& m);

  static Rotation identity() { return Rotation(); }
  static Rotation exp(const Vec3& v);

  const Mat3& matrix() const { return m_; }
  Rotation transpose() const;
  Vec3 log() const { return log_so3(m_); }

  Rotation operator*(const Rotation& other) const;
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  struct Unchecked {};
  Rotation(const Mat3& m, Unchecked) : m_(m) {}

  Mat3 m_;
};

inline Rotation exp_so3(const Vec3& v) { return Rotation::exp(v); }

/// 1/2 (Rd^T R - R^T Rd)^vee.
Vec3 attitude_error(const Rotation& R, const Rotation& Rd);

/// Element of the direct product R^3 x SO(3).
struct GroupElement {
  Vec3 x = Vec3::Zero();
  Rotation R;

  GroupElement compose(const GroupElement& other) const {
    return {x + other.x, R * other.R};
  }
  static GroupElement identity() { return {}; }
};

/// Velocity (xdot, Omega): inertial linear velocity, body angular velocity.
struct Twist {
  Vec3 v = Vec3::Zero();
  Vec3 w = Vec3::Zero();

  Vec6 stacked() const {
    Vec6 out;
    out << v, w;
    return out;
  }
  static Twist from(const Vec6& s) { return {s.head<3>(), s.tail<3>()}; }
};

}  // namespace fwuav
