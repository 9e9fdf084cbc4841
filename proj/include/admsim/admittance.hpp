#pragma once

// Virtual mass-spring-damper admittance: per-axis diagonal dynamics
//   M dd(dx) + B d(dx) + K dx = F_ext
// driven by the measured wrench, producing the compliance offset that is
// added to the nominal plan.

#include <array>
#include <cstdint>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "admsim/math.hpp"

namespace admsim {

struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();

  [[nodiscard]] Vector6 as_vector() const {
    Vector6 v;
    v << force, torque;
    return v;
  }
  static Wrench from_vector(const Vector6& v) { return {v.head<3>(), v.tail<3>()}; }

  Wrench& operator+=(const Wrench& o) {
    force += o.force;
    torque += o.torque;
    return *this;
  }
};

enum class AdmittanceIntegrator {
  /// Exact discretization of the linear dynamics under a force held
  /// constant over the step.
  ExactHold,
  /// v += a dt; x += v dt.
  SemiImplicitEuler,
};

inline constexpr const char* axis_names[6] = {"x", "y", "z", "rx", "ry", "rz"};

struct AdmittanceParams {
  Vector6 mass;
  Vector6 damping;
  Vector6 stiffness;
  std::array<bool, 6> axis_mask{true, true, true, false, false, false};
  double force_deadband = 0.5;  // N (and N m on rotational axes)
  Vector6 offset_limit;         // m / rad, per axis
  AdmittanceIntegrator integrator = AdmittanceIntegrator::ExactHold;

  AdmittanceParams() {
    mass << 5.0, 5.0, 5.0, 0.5, 0.5, 0.5;
    damping << 50.0, 50.0, 50.0, 5.0, 5.0, 5.0;
    stiffness << 100.0, 100.0, 100.0, 10.0, 10.0, 10.0;
    offset_limit << 0.30, 0.30, 0.30, 0.5, 0.5, 0.5;
  }

  /// Same scalar M, B, K on the three translational axes.
  static AdmittanceParams translational(double m, double b, double k) {
    AdmittanceParams p;
    p.mass.head<3>().setConstant(m);
    p.damping.head<3>().setConstant(b);
    p.stiffness.head<3>().setConstant(k);
    return p;
  }
};

struct AdmittanceState {
  Vector6 delta_x = Vector6::Zero();
  Vector6 delta_x_dot = Vector6::Zero();
  Vector6 last_force = Vector6::Zero();  // force actually fed to the dynamics
  std::uint8_t clamped_axes = 0;         // bitmask, set on the step that clamped
};

/// Passivity gate: M > 0, B > 0, K >= 0 on every enabled axis.
inline void validate_params(const AdmittanceParams& p) {
  for (int i = 0; i < 6; ++i) {
    if (!p.axis_mask[i]) continue;
    const std::string axis = axis_names[i];
    if (!(p.mass[i] > 0.0) || !std::isfinite(p.mass[i])) {
      fail(ErrorCode::PassivityViolation, "M_d[" + axis + "] must be > 0");
    }
    if (!(p.damping[i] > 0.0) || !std::isfinite(p.damping[i])) {
      fail(ErrorCode::PassivityViolation, "B_d[" + axis + "] must be > 0");
    }
    if (!(p.stiffness[i] >= 0.0) || !std::isfinite(p.stiffness[i])) {
      fail(ErrorCode::PassivityViolation, "K_d[" + axis + "] must be >= 0");
    }
    if (!(p.offset_limit[i] > 0.0)) {
      fail(ErrorCode::PassivityViolation, "offset_limit[" + axis + "] must be > 0");
    }
  }
  if (!(p.force_deadband >= 0.0)) fail(ErrorCode::PassivityViolation, "force_deadband must be >= 0");
}

/// Stored virtual energy 1/2 v'Mv + 1/2 x'Kx over enabled axes.
inline double virtual_energy(const AdmittanceState& s, const AdmittanceParams& p) {
  double e = 0.0;
  for (int i = 0; i < 6; ++i) {
    if (!p.axis_mask[i]) continue;
    e += 0.5 * p.mass[i] * s.delta_x_dot[i] * s.delta_x_dot[i] + 0.5 * p.stiffness[i] * s.delta_x[i] * s.delta_x[i];
  }
  return e;
}

/// Masks and deadbands a raw wrench into the force the dynamics consume.
inline Vector6 effective_force(const Vector6& raw, const std::array<bool, 6>& mask, double deadband) {
  Vector6 f = Vector6::Zero();
  for (int i = 0; i < 6; ++i) {
    if (mask[i] && std::abs(raw[i]) >= deadband) f[i] = raw[i];
  }
  return f;
}

/// Precomputed per-axis step for fixed (params, dt).
class AdmittanceStepper {
 public:
  AdmittanceStepper(const AdmittanceParams& params, double dt) : params_(params), dt_(dt) {
    validate_params(params_);
    if (!(dt > 0.0 && dt <= 0.01)) fail(ErrorCode::InvalidArgument, "admittance dt must be in (0, 0.01] s");
    for (int i = 0; i < 6; ++i) {
      if (!params_.axis_mask[i]) continue;
      const double m = params_.mass[i], b = params_.damping[i], k = params_.stiffness[i];
      Eigen::Matrix3d aug = Eigen::Matrix3d::Zero();
      aug(0, 1) = 1.0;
      aug(1, 0) = -k / m;
      aug(1, 1) = -b / m;
      aug(1, 2) = 1.0 / m;
      const Eigen::Matrix3d e = (aug * dt).exp();
      phi_[i] = e.topLeftCorner<2, 2>();
      gamma_[i] = e.topRightCorner<2, 1>();
    }
  }

  [[nodiscard]] const AdmittanceParams& params() const { return params_; }
  [[nodiscard]] double dt() const { return dt_; }

  [[nodiscard]] AdmittanceState step(const AdmittanceState& s, const Wrench& f_ext) const {
    AdmittanceState out;
    out.last_force = effective_force(f_ext.as_vector(), params_.axis_mask, params_.force_deadband);
    for (int i = 0; i < 6; ++i) {
      if (!params_.axis_mask[i]) continue;
      const double f = out.last_force[i];
      double x = s.delta_x[i], v = s.delta_x_dot[i];
      if (params_.integrator == AdmittanceIntegrator::ExactHold) {
        const double xn = phi_[i](0, 0) * x + phi_[i](0, 1) * v + gamma_[i][0] * f;
        const double vn = phi_[i](1, 0) * x + phi_[i](1, 1) * v + gamma_[i][1] * f;
        x = xn;
        v = vn;
      } else {
        const double acc = (f - params_.damping[i] * v - params_.stiffness[i] * x) / params_.mass[i];
        v += acc * dt_;
        x += v * dt_;
      }
      const double lim = params_.offset_limit[i];
      if (std::abs(x) > lim) {
        x = std::copysign(lim, x);
        v = 0.0;
        out.clamped_axes |= static_cast<std::uint8_t>(1u << i);
      }
      out.delta_x[i] = x;
      out.delta_x_dot[i] = v;
    }
    return out;
  }

 private:
  AdmittanceParams params_;
  double dt_;
  std::array<Eigen::Matrix2d, 6> phi_{};
  std::array<Eigen::Vector2d, 6> gamma_{};
};

inline AdmittanceState admittance_step(const AdmittanceState& state, const AdmittanceParams& params,
                                       const Wrench& f_ext, double dt) {
  return AdmittanceStepper(params, dt).step(state, f_ext);
}

/// Nominal Cartesian velocity plus the compliance velocity.
inline Vector6 reference_velocity(const AdmittanceState& state, const Vector6& nominal_velocity) {
  return nominal_velocity + state.delta_x_dot;
}

/// x_cmd = x_d + dx: additive in position, rotation-vector exponential
/// applied on the left in orientation.
inline Pose blend_command(const Pose& x_d, const AdmittanceState& state) {
  Pose cmd;
  cmd.position = x_d.position + state.delta_x.head<3>();
  const Vec3 rot = state.delta_x.tail<3>();
  cmd.orientation = rot.isZero(0.0) ? x_d.orientation : RotationMatrix(so3_exp(rot) * x_d.orientation);
  return cmd;
}

/// Work done by the held force over one step, f . (x' - x).
inline double step_work(const AdmittanceState& before, const AdmittanceState& after) {
  return after.last_force.dot(after.delta_x - before.delta_x);
}

}  // namespace admsim
