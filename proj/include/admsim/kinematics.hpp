#pragma once

// Standard-DH serial chain: forward kinematics, geometric Jacobian and
// damped-least-squares velocity / pose inverse kinematics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/SVD>

#include "admsim/math.hpp"

namespace admsim {

inline constexpr std::size_t kJoints = 6;

using JointVector = Eigen::Matrix<double, 6, 1>;
using JacobianMatrix = Matrix6;

struct DhRow {
  double a = 0.0;      // m
  double alpha = 0.0;  // rad
  double d = 0.0;      // m
  double theta_offset = 0.0;
};

struct ManipulatorModel {
  std::string name = "custom";
  std::array<DhRow, kJoints> dh{};
  JointVector lower_limit = JointVector::Constant(-2.0 * kPi);
  JointVector upper_limit = JointVector::Constant(2.0 * kPi);
  JointVector velocity_limit = JointVector::Constant(kPi);
  Pose base = Pose::identity();

  void validate() const {
    for (std::size_t j = 0; j < kJoints; ++j) {
      const auto& row = dh[j];
      if (!std::isfinite(row.a) || !std::isfinite(row.alpha) || !std::isfinite(row.d) ||
          !std::isfinite(row.theta_offset)) {
        fail(ErrorCode::ConfigError, "non-finite DH entry on joint " + std::to_string(j + 1));
      }
      if (!(lower_limit[j] < upper_limit[j])) {
        fail(ErrorCode::ConfigError, "joint limits not ordered on joint " + std::to_string(j + 1));
      }
      if (!(velocity_limit[j] > 0.0)) {
        fail(ErrorCode::ConfigError, "velocity limit must be positive on joint " + std::to_string(j + 1));
      }
    }
    if (orthonormality_error(base.orientation) > 1e-9 || base.orientation.determinant() < 0.0) {
      fail(ErrorCode::ConfigError, "base orientation is not a rotation");
    }
  }

  [[nodiscard]] bool within_limits(const JointVector& theta) const {
    return (theta.array() >= lower_limit.array()).all() && (theta.array() <= upper_limit.array()).all();
  }

  /// Upper bound on the distance from any joint axis to the tool, used to
  /// turn joint-space steps into Cartesian displacement bounds.
  [[nodiscard]] double reach() const {
    double r = 0.0;
    for (const auto& row : dh) r += std::abs(row.a) + std::abs(row.d);
    return r;
  }
};

/// Nominal UR5e geometry (Universal Robots published DH table).
inline ManipulatorModel ur5e_model() {
  ManipulatorModel m;
  m.name = "ur5e";
  m.dh = {{
      {0.0, kPi / 2.0, 0.1625, 0.0},
      {-0.425, 0.0, 0.0, 0.0},
      {-0.3922, 0.0, 0.0, 0.0},
      {0.0, kPi / 2.0, 0.1333, 0.0},
      {0.0, -kPi / 2.0, 0.0997, 0.0},
      {0.0, 0.0, 0.0996, 0.0},
  }};
  m.lower_limit = JointVector::Constant(-2.0 * kPi);
  m.upper_limit = JointVector::Constant(2.0 * kPi);
  m.lower_limit[2] = -kPi;
  m.upper_limit[2] = kPi;
  m.velocity_limit = JointVector::Constant(kPi);
  return m;
}

inline Pose dh_transform(const DhRow& row, double q) {
  const double th = q + row.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  Pose t;
  t.orientation << ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca;
  t.position << row.a * ct, row.a * st, row.d;
  return t;
}

/// frames[0] is the base; frames[j] is the frame after joint j.
inline std::array<Pose, kJoints + 1> link_frames(const ManipulatorModel& model, const JointVector& theta) {
  std::array<Pose, kJoints + 1> frames;
  frames[0] = model.base;
  for (std::size_t j = 0; j < kJoints; ++j) frames[j + 1] = frames[j] * dh_transform(model.dh[j], theta[j]);
  return frames;
}

inline Pose forward_kinematics(const ManipulatorModel& model, const JointVector& theta) {
  Pose t = model.base;
  for (std::size_t j = 0; j < kJoints; ++j) t = t * dh_transform(model.dh[j], theta[j]);
  return t;
}

/// Geometric Jacobian, rows (linear; angular), expressed in the base frame's
/// parent and taken at the tool origin.
inline JacobianMatrix jacobian(const ManipulatorModel& model, const JointVector& theta) {
  const auto frames = link_frames(model, theta);
  const Vec3& pe = frames[kJoints].position;
  JacobianMatrix jac;
  for (std::size_t j = 0; j < kJoints; ++j) {
    const Vec3 z = frames[j].orientation.col(2);
    jac.block<3, 1>(0, j) = z.cross(pe - frames[j].position);
    jac.block<3, 1>(3, j) = z;
  }
  return jac;
}

inline constexpr double kDefaultDamping = 0.05;

/// theta_dot = J^T (J J^T + lambda^2 I)^-1 x_dot. With lambda = 0 this is
/// the exact inverse and refuses near-singular maps.
inline JointVector dls_joint_velocity(const JacobianMatrix& jac, const Vector6& x_dot, double lambda) {
  if (!(lambda >= 0.0)) fail(ErrorCode::InvalidArgument, "damping must be non-negative");
  if (lambda == 0.0) {
    const Eigen::JacobiSVD<Matrix6> svd(jac);
    if (svd.singularValues()[5] < 1e-10) fail(ErrorCode::SingularMap, "Jacobian is singular and damping is zero");
    return jac.partialPivLu().solve(x_dot);
  }
  const Matrix6 jjt = jac * jac.transpose() + lambda * lambda * Matrix6::Identity();
  return jac.transpose() * jjt.ldlt().solve(x_dot);
}

inline JointVector dls_joint_velocity(const ManipulatorModel& model, const JointVector& theta,
                                      const Vector6& x_dot, double lambda) {
  return dls_joint_velocity(jacobian(model, theta), x_dot, lambda);
}

struct IkOptions {
  double tol = 1e-6;
  int max_iters = 1000;
  double lambda = kDefaultDamping;
  double max_step = 0.5;  // rad, per iteration
};

struct IkResult {
  JointVector theta;
  int iterations = 0;
};

/// Newton-style pose IK driven by the DLS map on the pose-error twist. The
/// damping starts at `lambda` and adapts per iteration (shrinks on progress,
/// grows on a rejected step), so near-singular targets still converge.
/// Either returns a configuration whose FK is within tol of the target
/// (position in m, orientation geodesic in rad) or throws.
inline IkResult dls_pose_ik(const ManipulatorModel& model, const JointVector& theta_seed, const Pose& target,
                            const IkOptions& opt = {}) {
  JointVector theta = theta_seed;
  Vector6 err = pose_error(target, forward_kinematics(model, theta));
  double mu = opt.lambda;
  for (int it = 0; it <= opt.max_iters; ++it) {
    if (!err.allFinite()) fail(ErrorCode::NoConvergence, "non-finite pose error");
    if (err.head<3>().norm() <= opt.tol && err.tail<3>().norm() <= opt.tol) {
      if (!model.within_limits(theta)) {
        fail(ErrorCode::JointLimitViolation, "IK solution exceeds joint limits");
      }
      return {theta, it};
    }
    if (it == opt.max_iters) break;
    JointVector step = dls_joint_velocity(jacobian(model, theta), err, mu);
    const double n = step.norm();
    if (n > opt.max_step) step *= opt.max_step / n;
    const JointVector trial = theta + step;
    const Vector6 trial_err = pose_error(target, forward_kinematics(model, trial));
    if (trial_err.norm() < err.norm()) {
      theta = trial;
      err = trial_err;
      mu = std::max(mu * 0.3, 1e-9);
    } else {
      mu = std::min(mu * 4.0, 1e3);
    }
  }
  fail(ErrorCode::NoConvergence, "pose IK did not converge in " + std::to_string(opt.max_iters) + " iterations");
}

}  // namespace admsim
