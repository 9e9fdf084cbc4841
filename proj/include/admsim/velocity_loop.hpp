#pragma once

// Joint-space velocity regulation: error junction, clamped-integral PID and
// a first-order joint-velocity plant.

#include <cmath>
#include <cstdint>
#include <random>

#include "admsim/kinematics.hpp"

namespace admsim {

struct PidGains {
  JointVector kp = JointVector::Constant(8.0);
  JointVector ki = JointVector::Constant(152.0);
  JointVector kd = JointVector::Constant(0.02);
  JointVector integral_limit = JointVector::Constant(10.0);

  void validate() const {
    if ((kp.array() < 0.0).any() || (ki.array() < 0.0).any() || (kd.array() < 0.0).any()) {
      fail(ErrorCode::ConfigError, "PID gains must be non-negative");
    }
    if (!(integral_limit.array() > 0.0).all()) fail(ErrorCode::ConfigError, "integral_limit must be positive");
  }
};

struct PidState {
  JointVector integral = JointVector::Zero();
  JointVector previous_error = JointVector::Zero();
  bool initialized = false;
};

struct JointPlantModel {
  JointVector time_constant = JointVector::Constant(0.05);  // s
  JointVector velocity_limit = JointVector::Constant(kPi);  // rad/s
  double noise_sigma = 0.0;                                 // rad/s

  void validate() const {
    if (!(time_constant.array() > 0.0).all()) fail(ErrorCode::ConfigError, "plant time constant must be positive");
    if (!(velocity_limit.array() > 0.0).all()) fail(ErrorCode::ConfigError, "plant velocity limit must be positive");
    if (!(noise_sigma >= 0.0)) fail(ErrorCode::ConfigError, "noise_sigma must be >= 0");
  }
};

/// Seeded mt19937_64 with hand-rolled transforms; identical streams on every
/// platform for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline JointVector velocity_error(const JointVector& theta_dot_ref, const JointVector& theta_dot_actual) {
  return theta_dot_ref - theta_dot_actual;
}

struct PidOutput {
  JointVector u;
  PidState state;
};

/// u = Kp e + Ki int(e) + Kd de/dt with the integral clamped (anti-windup)
/// and no derivative on the first sample.
inline PidOutput pid_step(const PidState& state, const PidGains& gains, const JointVector& e, double dt) {
  if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "pid dt must be positive");
  PidState next;
  next.integral = (state.integral + e * dt).cwiseMax(-gains.integral_limit).cwiseMin(gains.integral_limit);
  next.previous_error = e;
  next.initialized = true;
  JointVector derivative = JointVector::Zero();
  if (state.initialized) derivative = (e - state.previous_error) / dt;
  JointVector u = gains.kp.cwiseProduct(e) + gains.ki.cwiseProduct(next.integral) + gains.kd.cwiseProduct(derivative);
  return {u, next};
}

/// First-order lag toward u (exact over a step with u held), optional
/// Gaussian noise, then saturation.
inline JointVector plant_step(const JointPlantModel& plant, const JointVector& theta_dot_actual, const JointVector& u,
                              double dt, Rng& rng) {
  if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "plant dt must be positive");
  JointVector v;
  for (int j = 0; j < 6; ++j) {
    const double decay = std::exp(-dt / plant.time_constant[j]);
    v[j] = u[j] + (theta_dot_actual[j] - u[j]) * decay;
  }
  if (plant.noise_sigma > 0.0) {
    for (int j = 0; j < 6; ++j) v[j] += plant.noise_sigma * rng.normal();
  }
  return v.cwiseMax(-plant.velocity_limit).cwiseMin(plant.velocity_limit);
}

struct VelocityLoopState {
  PidState pid;
  JointVector theta_dot = JointVector::Zero();
  JointVector last_error = JointVector::Zero();
  JointVector last_u = JointVector::Zero();
};

/// error junction -> PID -> plant, in that order.
inline VelocityLoopState closed_loop_step(const VelocityLoopState& s, const PidGains& gains,
                                          const JointPlantModel& plant, const JointVector& theta_dot_ref, double dt,
                                          Rng& rng) {
  VelocityLoopState next;
  next.last_error = velocity_error(theta_dot_ref, s.theta_dot);
  auto [u, pid] = pid_step(s.pid, gains, next.last_error, dt);
  next.pid = pid;
  next.last_u = u;
  next.theta_dot = plant_step(plant, s.theta_dot, u, dt, rng);
  return next;
}

}  // namespace admsim
