#pragma once

// Fixed-timestep composition of planner, admittance, DLS and velocity loop,
// scripted force profiles and the per-tick run log.

#include <optional>
#include <string>
#include <vector>

#include "admsim/admittance.hpp"
#include "admsim/planner.hpp"
#include "admsim/velocity_loop.hpp"

namespace admsim {

#ifndef ADMSIM_VERSION
#define ADMSIM_VERSION "0.0.0"
#endif

inline constexpr const char* kVersion = ADMSIM_VERSION;

// ---------------------------------------------------------------------------
// Force profiles

inline constexpr double kDefaultRamp = 0.05;  // s

/// Wrench held over [start, start + duration) with cosine ramps inside the
/// segment at both edges.
struct ForceSegment {
  double start = 0.0;
  double duration = 0.0;
  Wrench wrench;
  double ramp = kDefaultRamp;

  [[nodiscard]] double end() const { return start + duration; }

  void validate() const {
    if (!std::isfinite(start) || !(duration > 0.0) || !std::isfinite(duration)) {
      fail(ErrorCode::ConfigError, "force segment needs finite start and duration > 0");
    }
    if (!(ramp >= 0.0) || 2.0 * ramp > duration) fail(ErrorCode::ConfigError, "force ramp must be in [0, duration/2]");
    if (!wrench.as_vector().allFinite()) fail(ErrorCode::ConfigError, "force segment wrench must be finite");
  }

  [[nodiscard]] double scale(double t) const {
    const double tau = t - start;
    if (tau < 0.0 || tau >= duration) return 0.0;
    if (ramp > 0.0) {
      if (tau < ramp) return 0.5 * (1.0 - std::cos(kPi * tau / ramp));
      if (duration - tau < ramp) return 0.5 * (1.0 - std::cos(kPi * (duration - tau) / ramp));
    }
    return 1.0;
  }

  [[nodiscard]] Vector6 at(double t) const {
    const double s = scale(t);
    return s == 0.0 ? Vector6::Zero() : Vector6(s * wrench.as_vector());
  }
};

struct ForceProfile {
  std::vector<ForceSegment> segments;

  /// Segments must be ordered and non-overlapping.
  void validate() const {
    for (std::size_t i = 0; i < segments.size(); ++i) {
      segments[i].validate();
      if (i > 0 && segments[i].start < segments[i - 1].end()) {
        fail(ErrorCode::ConfigError, "force segments overlap or are out of order");
      }
    }
  }

  [[nodiscard]] Vector6 at(double t) const {
    Vector6 f = Vector6::Zero();
    for (const auto& s : segments) f += s.at(t);
    return f;
  }
};

// ---------------------------------------------------------------------------
// Scenario

struct GoalSpec {
  enum class Kind { Hold, Pose, Object };
  Kind kind = Kind::Hold;
  Pose pose;                     // Pose: target tool pose; Object: object pose
  bool relative_to_start = false;
  double approach_offset = 0.1;  // m along the object normal (Object)
};

/// Tool target for grasping an object: offset along the object's normal,
/// tool z pointing back at the object.
inline Pose grasp_pose(const Pose& object, double approach_offset) {
  Pose p;
  p.position = object.position + approach_offset * object.orientation.col(2);
  p.orientation = object.orientation * so3_exp({kPi, 0.0, 0.0});
  return p;
}

struct Scenario {
  std::string name = "scenario";
  ManipulatorModel model = ur5e_model();
  AdmittanceParams admittance;
  PidGains pid;
  JointPlantModel plant;
  RrtStarParams planner;
  ObstacleList obstacles;
  JointVector start = (JointVector() << 0.0, -1.2, 1.4, -1.77, -1.57, 0.0).finished();
  GoalSpec goal;
  double v_max = 0.1;          // m/s
  double a_max = 0.5;          // m/s^2
  double outer_gain = 50.0;    // 1/s, pose-correction gain k_x
  double dls_lambda = kDefaultDamping;
  ForceProfile force_profile;
  double tick_rate = 1000.0;   // Hz
  double duration = 8.0;       // s
  std::uint64_t seed = 1;
  int log_decimation = 10;     // export every n-th tick
  std::string hash;            // filled by the config loader

  [[nodiscard]] double dt() const { return 1.0 / tick_rate; }
  [[nodiscard]] std::size_t ticks() const {
    return static_cast<std::size_t>(std::floor(duration * tick_rate + 1e-9)) + 1;
  }

  void validate() const {
    model.validate();
    validate_params(admittance);
    pid.validate();
    plant.validate();
    force_profile.validate();
    if (!(tick_rate >= 100.0 && tick_rate <= 2000.0)) fail(ErrorCode::ConfigError, "tick_rate must be in [100, 2000] Hz");
    if (!(duration > 0.0) || !std::isfinite(duration)) fail(ErrorCode::ConfigError, "duration must be positive");
    if (!(v_max > 0.0) || !(a_max > 0.0)) fail(ErrorCode::ConfigError, "v_max and a_max must be positive");
    if (!(outer_gain >= 0.0)) fail(ErrorCode::ConfigError, "outer_gain must be >= 0");
    if (!(dls_lambda >= 0.0)) fail(ErrorCode::ConfigError, "dls_lambda must be >= 0");
    if (log_decimation < 1) fail(ErrorCode::ConfigError, "log_decimation must be >= 1");
    if (!model.within_limits(start)) fail(ErrorCode::ConfigError, "start configuration outside joint limits");
    for (const auto& o : obstacles) o.validate();
  }
};

// ---------------------------------------------------------------------------
// Run log

inline constexpr int kRunLogSchemaVersion = 1;

struct LogRow {
  double t = 0.0;
  Vector6 f_ext = Vector6::Zero();
  Vector6 x = Vector6::Zero();       // position, rotation vector
  Vector6 x_dot = Vector6::Zero();   // J theta_dot
  Vector6 x_d = Vector6::Zero();
  Vector6 x_cmd = Vector6::Zero();
  Vector6 dx = Vector6::Zero();
  Vector6 dx_dot = Vector6::Zero();
  JointVector theta = JointVector::Zero();
  JointVector theta_dot_ref = JointVector::Zero();
  JointVector theta_dot = JointVector::Zero();
  JointVector u = JointVector::Zero();

  static constexpr std::size_t kColumns = 1 + 11 * 6;

  template <class F>
  void for_each_column(F&& f) {
    f(t);
    for (Vector6* v : {&f_ext, &x, &x_dot, &x_d, &x_cmd, &dx, &dx_dot, &theta, &theta_dot_ref, &theta_dot, &u}) {
      for (int i = 0; i < 6; ++i) f((*v)[i]);
    }
  }
  template <class F>
  void for_each_column(F&& f) const {
    const_cast<LogRow*>(this)->for_each_column([&](double& v) { f(static_cast<const double&>(v)); });
  }

  [[nodiscard]] bool all_finite() const {
    bool ok = true;
    for_each_column([&](const double& v) { ok = ok && std::isfinite(v); });
    return ok;
  }

  [[nodiscard]] double deviation() const { return (x.head<3>() - x_d.head<3>()).norm(); }
};

inline std::vector<std::string> log_column_names() {
  std::vector<std::string> names{"t"};
  const char* cart[6] = {"x", "y", "z", "rx", "ry", "rz"};
  for (const char* g : {"F_ext", "x", "xdot", "x_d", "x_cmd", "dx", "dxdot"}) {
    for (const char* a : cart) names.push_back(std::string(g) + "." + a);
  }
  for (const char* g : {"theta", "theta_dot_ref", "theta_dot", "u"}) {
    for (int j = 1; j <= 6; ++j) names.push_back(std::string(g) + "." + std::to_string(j));
  }
  return names;
}

struct RunLogMeta {
  int schema_version = kRunLogSchemaVersion;
  std::string version = kVersion;
  std::string scenario_name;
  std::string scenario_hash;
  std::uint64_t seed = 0;
  double tick_dt = 1e-3;      // simulation step
  int decimation = 1;         // rows are every n-th tick
  double nominal_peak_speed = 0.0;  // m/s, peak of the planned profile
  AdmittanceParams admittance;
};

struct RunLog {
  RunLogMeta meta;
  std::vector<LogRow> rows;

  [[nodiscard]] double row_dt() const { return meta.tick_dt * meta.decimation; }
};

inline RunLog decimate(const RunLog& log, int factor) {
  if (factor < 1) fail(ErrorCode::InvalidArgument, "decimation factor must be >= 1");
  RunLog out;
  out.meta = log.meta;
  out.meta.decimation = log.meta.decimation * factor;
  for (std::size_t i = 0; i < log.rows.size(); i += static_cast<std::size_t>(factor)) out.rows.push_back(log.rows[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

/// Planned trajectory for a scenario; planner failures surface as PlanFailure.
inline Trajectory plan_trajectory(const Scenario& sc) {
  const Pose start_pose = forward_kinematics(sc.model, sc.start);
  PlannedPath path;
  path.waypoints = {sc.start};
  if (sc.goal.kind != GoalSpec::Kind::Hold) {
    Pose target = sc.goal.pose;
    if (sc.goal.relative_to_start) {
      target.position = start_pose.position + sc.goal.pose.position;
      target.orientation = sc.goal.pose.orientation * start_pose.orientation;
    }
    if (sc.goal.kind == GoalSpec::Kind::Object) target = grasp_pose(target, sc.goal.approach_offset);
    try {
      path = rrt_star_plan(sc.model, sc.start, target, sc.obstacles, sc.planner);
    } catch (const Error& e) {
      throw Error(ErrorCode::PlanFailure, std::string(to_string(e.code())) + ": " + e.detail());
    }
  }
  return time_parameterize(path, sc.model, sc.v_max, sc.a_max, sc.tick_rate);
}

/// One scenario run advanced tick by tick. Each step logs the state at t_n
/// and then advances admittance, command, velocity loop and joints to t_n+1.
class Simulation {
 public:
  explicit Simulation(Scenario sc) : sc_(std::move(sc)), stepper_(sc_.admittance, sc_.dt()) {
    sc_.validate();
    traj_ = plan_trajectory(sc_);
    reset();
  }

  Simulation(Scenario sc, Trajectory traj) : sc_(std::move(sc)), stepper_(sc_.admittance, sc_.dt()) {
    sc_.validate();
    traj_ = std::move(traj);
    reset();
  }

  void reset() {
    tick_ = 0;
    theta_ = sc_.start;
    adm_ = {};
    loop_ = {};
    rng_ = Rng(sc_.seed);
    interactive_.clear();
    stepper_ = AdmittanceStepper(sc_.admittance, sc_.dt());
  }

  [[nodiscard]] const Scenario& scenario() const { return sc_; }
  [[nodiscard]] const Trajectory& trajectory() const { return traj_; }
  [[nodiscard]] std::size_t tick() const { return tick_; }
  [[nodiscard]] double time() const { return static_cast<double>(tick_) * sc_.dt(); }
  [[nodiscard]] bool finished() const { return tick_ >= sc_.ticks(); }
  [[nodiscard]] const AdmittanceState& admittance_state() const { return adm_; }
  [[nodiscard]] const JointVector& joints() const { return theta_; }
  [[nodiscard]] const AdmittanceParams& admittance_params() const { return stepper_.params(); }

  /// Added on top of the scripted profile; segments may overlap.
  void apply_force(const ForceSegment& seg) {
    seg.validate();
    interactive_.push_back(seg);
  }
  void clear_force() { interactive_.clear(); }

  void set_admittance_params(const AdmittanceParams& p) { stepper_ = AdmittanceStepper(p, sc_.dt()); }

  [[nodiscard]] Vector6 applied_force(double t) const {
    Vector6 f = sc_.force_profile.at(t);
    for (const auto& s : interactive_) f += s.at(t);
    return f;
  }

  LogRow step() {
    const double dt = sc_.dt();
    const double t = time();
    LogRow row;
    row.t = t;
    row.f_ext = applied_force(t);

    const Reference ref = reference_at(traj_, t);
    const Pose x = forward_kinematics(sc_.model, theta_);
    const JacobianMatrix jac = jacobian(sc_.model, theta_);
    const Pose x_cmd = blend_command(ref.pose, adm_);

    row.x = pose_to_vector(x);
    row.x_dot = jac * loop_.theta_dot;
    row.x_d = pose_to_vector(ref.pose);
    row.x_cmd = pose_to_vector(x_cmd);
    row.dx = adm_.delta_x;
    row.dx_dot = adm_.delta_x_dot;
    row.theta = theta_;
    row.theta_dot = loop_.theta_dot;

    adm_ = stepper_.step(adm_, Wrench::from_vector(row.f_ext));
    const Vector6 v_cmd = reference_velocity(adm_, ref.velocity) + sc_.outer_gain * pose_error(x_cmd, x);
    row.theta_dot_ref = dls_joint_velocity(jac, v_cmd, sc_.dls_lambda);
    loop_ = closed_loop_step(loop_, sc_.pid, sc_.plant, row.theta_dot_ref, dt, rng_);
    row.u = loop_.last_u;
    theta_ += loop_.theta_dot * dt;
    ++tick_;

    if (!row.all_finite() || !theta_.allFinite() || !adm_.delta_x.allFinite()) {
      fail(ErrorCode::NumericalDivergence, "non-finite state at t = " + std::to_string(t));
    }
    return row;
  }

  [[nodiscard]] RunLogMeta meta() const {
    RunLogMeta m;
    m.scenario_name = sc_.name;
    m.scenario_hash = sc_.hash;
    m.seed = sc_.seed;
    m.tick_dt = sc_.dt();
    m.decimation = 1;
    m.admittance = stepper_.params();
    for (const auto& v : traj_.velocities) m.nominal_peak_speed = std::max(m.nominal_peak_speed, v.head<3>().norm());
    return m;
  }

 private:
  Scenario sc_;
  AdmittanceStepper stepper_;
  Trajectory traj_;
  std::size_t tick_ = 0;
  JointVector theta_;
  AdmittanceState adm_;
  VelocityLoopState loop_;
  Rng rng_;
  std::vector<ForceSegment> interactive_;
};

/// Full-rate log of the whole scenario.
inline RunLog run_scenario(const Scenario& sc) {
  Simulation sim(sc);
  RunLog log;
  log.meta = sim.meta();
  log.rows.reserve(sc.ticks());
  while (!sim.finished()) log.rows.push_back(sim.step());
  return log;
}

}  // namespace admsim
