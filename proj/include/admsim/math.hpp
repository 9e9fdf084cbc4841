#pragma once

// Fixed-size linear algebra aliases, rigid poses, object-frame construction
// from two in-plane vectors, and Z-Y-X Euler extraction.

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "admsim/error.hpp"

namespace admsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using RotationMatrix = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kFrameEpsilon = 1e-9;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

/// Rigid transform: orientation maps body-frame vectors into the parent frame.
struct Pose {
  Vec3 position = Vec3::Zero();
  RotationMatrix orientation = RotationMatrix::Identity();

  static Pose identity() { return {}; }

  [[nodiscard]] Pose operator*(const Pose& rhs) const {
    return {position + orientation * rhs.position, orientation * rhs.orientation};
  }

  [[nodiscard]] Pose inverse() const {
    const Mat3 rt = orientation.transpose();
    return {-(rt * position), rt};
  }

  [[nodiscard]] Vec3 transform(const Vec3& p) const { return position + orientation * p; }
};

struct EulerAngles {
  double phi = 0.0;    // about y
  double theta = 0.0;  // about x
  double psi = 0.0;    // about z
  bool gimbal_lock = false;
};

struct Frame {
  Vec3 i;
  Vec3 j;
  Vec3 k;
};

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

/// Rotation-vector exponential.
inline RotationMatrix so3_exp(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-15) return RotationMatrix::Identity() + skew(rotvec);
  return Eigen::AngleAxisd(angle, rotvec / angle).toRotationMatrix();
}

/// Rotation-vector logarithm; angle in [0, pi].
inline Vec3 so3_log(const RotationMatrix& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

/// Geodesic angle between two orientations.
inline double rotation_distance(const RotationMatrix& a, const RotationMatrix& b) {
  return so3_log(a * b.transpose()).norm();
}

/// Twist taking `current` to `target`: (p_t - p_c, log(R_t R_c^T)).
inline Vector6 pose_error(const Pose& target, const Pose& current) {
  Vector6 e;
  e.head<3>() = target.position - current.position;
  e.tail<3>() = so3_log(target.orientation * current.orientation.transpose());
  return e;
}

/// Position followed by the rotation vector of the orientation.
inline Vector6 pose_to_vector(const Pose& p) {
  Vector6 v;
  v.head<3>() = p.position;
  v.tail<3>() = so3_log(p.orientation);
  return v;
}

inline Pose pose_from_vector(const Vector6& v) { return {v.head<3>(), so3_exp(v.tail<3>())}; }

/// Object frame from the in-plane x and y vectors. k follows the cross
/// product and j is recomputed as k x i so the triple is orthonormal even
/// when x and y are not perpendicular.
inline Frame orthonormal_frame(const Vec3& x_vec, const Vec3& y_vec) {
  const double nx = x_vec.norm();
  const Vec3 c = x_vec.cross(y_vec);
  const double nc = c.norm();
  if (!(nx > kFrameEpsilon) || !(nc > kFrameEpsilon)) {
    fail(ErrorCode::DegenerateFrame, "in-plane vectors are parallel or near zero");
  }
  Frame f;
  f.i = x_vec / nx;
  f.k = c / nc;
  f.j = f.k.cross(f.i);
  return f;
}

inline double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

/// Columns of the result are (i, j, k). Triples that are orthonormal to
/// rotation tolerance are placed verbatim; looser ones (up to 1e-6) get one
/// Gram-Schmidt pass.
inline RotationMatrix rotation_from_axes(const Vec3& i, const Vec3& j, const Vec3& k) {
  RotationMatrix r;
  r.col(0) = i;
  r.col(1) = j;
  r.col(2) = k;
  if (!r.allFinite()) fail(ErrorCode::NotOrthonormal, "non-finite axis");
  const double err = orthonormality_error(r);
  if (err > 1e-6 || r.determinant() < 0.0) {
    fail(ErrorCode::NotOrthonormal, "axis triple is not a right-handed orthonormal basis");
  }
  if (err <= 1e-9) return r;

  Vec3 c0 = r.col(0).normalized();
  Vec3 c1 = (r.col(1) - c0.dot(r.col(1)) * c0).normalized();
  Vec3 c2 = c0.cross(c1);
  r.col(0) = c0;
  r.col(1) = c1;
  r.col(2) = c2;
  return r;
}

namespace detail {
inline double wrap_half_open(double a) {
  // atan2 may return -pi; the range is (-pi, pi].
  return a <= -kPi ? a + 2.0 * kPi : a;
}
}  // namespace detail

/// Z-Y-X convention, R = Rz(psi) Ry(phi) Rx(theta):
///   theta = atan2(j_z, k_z), phi = asin(-i_z), psi = atan2(i_y, i_x).
/// At gimbal lock theta is fixed to 0 and the remaining yaw goes into psi.
inline EulerAngles euler_from_rotation(const RotationMatrix& r) {
  const double iz = r(2, 0);
  EulerAngles e;
  e.phi = std::asin(std::clamp(-iz, -1.0, 1.0));
  if (std::abs(iz) >= 1.0 - 1e-9) {
    e.gimbal_lock = true;
    e.phi = std::copysign(kPi / 2.0, -iz);
    e.theta = 0.0;
    // With theta = 0 the j column is Rz(psi) e_y.
    e.psi = detail::wrap_half_open(std::atan2(-r(0, 1), r(1, 1)));
    return e;
  }
  e.theta = detail::wrap_half_open(std::atan2(r(2, 1), r(2, 2)));
  e.psi = detail::wrap_half_open(std::atan2(r(1, 0), r(0, 0)));
  return e;
}

inline RotationMatrix rotation_from_euler(const EulerAngles& e) {
  return (Eigen::AngleAxisd(e.psi, Vec3::UnitZ()) * Eigen::AngleAxisd(e.phi, Vec3::UnitY()) *
          Eigen::AngleAxisd(e.theta, Vec3::UnitX()))
      .toRotationMatrix();
}

}  // namespace admsim
