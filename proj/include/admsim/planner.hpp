#pragma once

// Joint-space RRT* with link-segment collision checks, trapezoidal time
// parameterization of the FK image, and the nominal reference x_d(t).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "admsim/kinematics.hpp"
#include "admsim/velocity_loop.hpp"

namespace admsim {

struct WorkspaceObstacle {
  enum class Shape { Box, Sphere };
  Shape shape = Shape::Box;
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Zero();  // box
  double radius = 0.0;               // sphere

  static WorkspaceObstacle box(const Vec3& center, const Vec3& half_extents) {
    return {Shape::Box, center, half_extents, 0.0};
  }
  static WorkspaceObstacle sphere(const Vec3& center, double radius) {
    return {Shape::Sphere, center, Vec3::Zero(), radius};
  }

  void validate() const {
    if (shape == Shape::Box && !(half_extents.array() > 0.0).all()) {
      fail(ErrorCode::ConfigError, "box obstacle extents must be positive");
    }
    if (shape == Shape::Sphere && !(radius > 0.0)) fail(ErrorCode::ConfigError, "sphere radius must be positive");
  }

  /// Signed distance, negative inside.
  [[nodiscard]] double distance(const Vec3& p) const {
    if (shape == Shape::Sphere) return (p - center).norm() - radius;
    const Vec3 q = (p - center).cwiseAbs() - half_extents;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
  }
};

using ObstacleList = std::vector<WorkspaceObstacle>;

struct CollisionSettings {
  double margin = 0.01;      // m
  double resolution = 0.02;  // m, sampling along links and along edges
};

/// Smallest signed distance from the arm skeleton (segments between
/// consecutive joint frame origins, tool point included) to any obstacle.
inline double config_clearance(const ManipulatorModel& model, const JointVector& theta, const ObstacleList& obstacles,
                               double resolution) {
  double best = std::numeric_limits<double>::infinity();
  if (obstacles.empty()) return best;
  const auto frames = link_frames(model, theta);
  for (std::size_t s = 0; s < kJoints; ++s) {
    const Vec3& a = frames[s].position;
    const Vec3& b = frames[s + 1].position;
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / resolution)));
    for (int k = (s == 0 ? 0 : 1); k <= n; ++k) {
      const Vec3 p = a + (b - a) * (static_cast<double>(k) / n);
      for (const auto& o : obstacles) best = std::min(best, o.distance(p));
    }
  }
  return best;
}

inline bool config_clear(const ManipulatorModel& model, const JointVector& theta, const ObstacleList& obstacles,
                         const CollisionSettings& cs) {
  return obstacles.empty() || config_clearance(model, theta, obstacles, cs.resolution) >= cs.margin;
}

/// Number of interpolation steps so no arm point moves more than
/// `resolution` between checked configurations.
inline int edge_substeps(const ManipulatorModel& model, const JointVector& a, const JointVector& b, double resolution) {
  const double bound = (b - a).lpNorm<1>() * model.reach();
  return std::max(1, static_cast<int>(std::ceil(bound / resolution)));
}

inline double edge_clearance(const ManipulatorModel& model, const JointVector& a, const JointVector& b,
                             const ObstacleList& obstacles, double resolution) {
  double best = std::numeric_limits<double>::infinity();
  if (obstacles.empty()) return best;
  const int n = edge_substeps(model, a, b, resolution);
  for (int k = 0; k <= n; ++k) {
    const JointVector q = a + (b - a) * (static_cast<double>(k) / n);
    best = std::min(best, config_clearance(model, q, obstacles, resolution));
  }
  return best;
}

inline bool edge_clear(const ManipulatorModel& model, const JointVector& a, const JointVector& b,
                       const ObstacleList& obstacles, const CollisionSettings& cs) {
  if (obstacles.empty()) return true;
  const int n = edge_substeps(model, a, b, cs.resolution);
  for (int k = 1; k <= n; ++k) {
    const JointVector q = a + (b - a) * (static_cast<double>(k) / n);
    if (config_clearance(model, q, obstacles, cs.resolution) < cs.margin) return false;
  }
  return true;
}

struct PlannedPath {
  std::vector<JointVector> waypoints;
  double cost = 0.0;                  // rad, summed joint-space segment length
  std::vector<double> cost_history;   // best cost at each checkpoint (inf before the goal is reached)
  std::size_t tree_size = 0;
};

/// Independent re-check of a path at `resolution`; returns the minimum
/// clearance over every sampled point of every segment.
inline double path_min_clearance(const ManipulatorModel& model, const PlannedPath& path, const ObstacleList& obstacles,
                                 double resolution) {
  double best = std::numeric_limits<double>::infinity();
  if (path.waypoints.size() == 1) return config_clearance(model, path.waypoints.front(), obstacles, resolution);
  for (std::size_t i = 0; i + 1 < path.waypoints.size(); ++i) {
    best = std::min(best, edge_clearance(model, path.waypoints[i], path.waypoints[i + 1], obstacles, resolution));
  }
  return best;
}

struct RrtStarParams {
  int max_iters = 3000;
  double step_size = 0.3;       // rad
  double rewire_radius = 3.0;   // gamma in r = gamma (log n / n)^(1/6)
  double goal_bias = 0.1;
  std::uint64_t seed = 1;
  int checkpoints = 10;
  int ik_attempts = 20;
  double sampling_margin = kPi / 2.0;  // rad beyond the start/goal bounding box, clipped to limits
  CollisionSettings collision;
  IkOptions ik;

  void validate() const {
    if (max_iters < 1) fail(ErrorCode::ConfigError, "planner max_iters must be >= 1");
    if (!(step_size > 0.0)) fail(ErrorCode::ConfigError, "planner step_size must be positive");
    if (!(rewire_radius > 0.0)) fail(ErrorCode::ConfigError, "planner rewire_radius must be positive");
    if (!(goal_bias >= 0.0 && goal_bias <= 1.0)) fail(ErrorCode::ConfigError, "planner goal_bias must be in [0, 1]");
    if (checkpoints < 1) fail(ErrorCode::ConfigError, "planner checkpoints must be >= 1");
    if (!(sampling_margin > 0.0)) fail(ErrorCode::ConfigError, "planner sampling_margin must be positive");
  }
};

/// Goal configuration: IK seeded at the start first, then at seeded random
/// configurations, keeping the first solution that is within limits and
/// collision-free.
inline JointVector plan_goal_configuration(const ManipulatorModel& model, const JointVector& start,
                                           const Pose& goal_pose, const ObstacleList& obstacles,
                                           const RrtStarParams& params) {
  Rng rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
  std::string last = "no attempt";
  for (int attempt = 0; attempt < std::max(1, params.ik_attempts); ++attempt) {
    JointVector seed = start;
    if (attempt > 0) {
      for (std::size_t j = 0; j < kJoints; ++j) seed[j] = rng.uniform(model.lower_limit[j], model.upper_limit[j]);
    }
    try {
      const JointVector q = dls_pose_ik(model, seed, goal_pose, params.ik).theta;
      if (config_clear(model, q, obstacles, params.collision)) return q;
      last = "IK solution in collision";
    } catch (const Error& e) {
      last = e.what();
    }
  }
  fail(ErrorCode::GoalUnreachable, "no collision-free IK solution for the goal pose (" + last + ")");
}

namespace detail {

struct RrtNode {
  JointVector theta;
  int parent = -1;
  double cost = 0.0;
  std::vector<int> children;
};

/// Uniform samples from the prolate hyperspheroid of configurations whose
/// straight-line detour start -> q -> goal is shorter than the current best
/// cost; falls back to the joint box when the set leaves the limits.
class InformedSampler {
 public:
  InformedSampler(const JointVector& start, const JointVector& goal)
      : center_((start + goal) / 2.0), c_min_((goal - start).norm()) {
    // Householder reflection taking e1 to the start -> goal direction.
    const JointVector a = c_min_ > 0.0 ? JointVector((goal - start) / c_min_) : JointVector::Unit(0);
    JointVector v = a - JointVector::Unit(0);
    basis_ = Matrix6::Identity();
    if (v.norm() > 1e-12) {
      v.normalize();
      basis_ -= 2.0 * v * v.transpose();
    }
  }

  JointVector sample(double c_best, Rng& rng, const ManipulatorModel& model) const {
    const double r1 = c_best / 2.0;
    const double r2 = std::sqrt(std::max(c_best * c_best - c_min_ * c_min_, 0.0)) / 2.0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      JointVector ball;
      for (int j = 0; j < 6; ++j) ball[j] = rng.normal();
      ball *= std::pow(rng.uniform(), 1.0 / 6.0) / ball.norm();
      ball[0] *= r1;
      ball.tail<5>() *= r2;
      const JointVector q = basis_ * ball + center_;
      if (model.within_limits(q)) return q;
    }
    JointVector q;
    for (std::size_t j = 0; j < kJoints; ++j) q[j] = rng.uniform(model.lower_limit[j], model.upper_limit[j]);
    return q;
  }

 private:
  JointVector center_;
  double c_min_;
  Matrix6 basis_;
};

inline void propagate_cost(std::vector<RrtNode>& nodes, int root) {
  std::vector<int> stack{root};
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int c : nodes[i].children) {
      nodes[c].cost = nodes[i].cost + (nodes[c].theta - nodes[i].theta).norm();
      stack.push_back(c);
    }
  }
}

}  // namespace detail

/// RRT* from `start` to an IK solution of `goal_pose`.
inline PlannedPath rrt_star_to_configuration(const ManipulatorModel& model, const JointVector& start,
                                             const JointVector& goal, const ObstacleList& obstacles,
                                             const RrtStarParams& params) {
  params.validate();
  if (!config_clear(model, start, obstacles, params.collision)) {
    fail(ErrorCode::NoPathFound, "start configuration is in collision");
  }
  PlannedPath out;
  if ((goal - start).norm() < 1e-12) {
    out.waypoints = {start};
    out.cost = 0.0;
    out.cost_history.assign(static_cast<std::size_t>(params.checkpoints), 0.0);
    out.tree_size = 1;
    return out;
  }

  Rng rng(params.seed);
  const detail::InformedSampler informed(start, goal);
  const JointVector lo =
      (start.cwiseMin(goal).array() - params.sampling_margin).matrix().cwiseMax(model.lower_limit);
  const JointVector hi =
      (start.cwiseMax(goal).array() + params.sampling_margin).matrix().cwiseMin(model.upper_limit);
  std::vector<detail::RrtNode> nodes;
  nodes.push_back({start, -1, 0.0, {}});
  int goal_index = -1;
  const int every = std::max(1, params.max_iters / params.checkpoints);
  const auto& cs = params.collision;

  auto reparent = [&](int child, int new_parent) {
    auto& old_children = nodes[nodes[child].parent].children;
    old_children.erase(std::find(old_children.begin(), old_children.end(), child));
    nodes[child].parent = new_parent;
    nodes[new_parent].children.push_back(child);
    nodes[child].cost = nodes[new_parent].cost + (nodes[child].theta - nodes[new_parent].theta).norm();
    detail::propagate_cost(nodes, child);
  };

  for (int iter = 1; iter <= params.max_iters; ++iter) {
    JointVector sample;
    if (rng.uniform() < params.goal_bias && goal_index < 0) {
      sample = goal;
    } else if (goal_index >= 0) {
      sample = informed.sample(nodes[goal_index].cost, rng, model);
    } else {
      for (std::size_t j = 0; j < kJoints; ++j) sample[j] = rng.uniform(lo[j], hi[j]);
    }

    int nearest = 0;
    double nearest_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double d = (nodes[i].theta - sample).squaredNorm();
      if (d < nearest_d) {
        nearest_d = d;
        nearest = static_cast<int>(i);
      }
    }
    nearest_d = std::sqrt(nearest_d);
    if (nearest_d > 1e-12) {
      const JointVector q_new = nearest_d <= params.step_size
                                    ? sample
                                    : JointVector(nodes[nearest].theta +
                                                  (sample - nodes[nearest].theta) * (params.step_size / nearest_d));
      if (config_clear(model, q_new, obstacles, cs)) {
        const double n = static_cast<double>(nodes.size() + 1);
        const double radius = params.rewire_radius * std::pow(std::log(n) / n, 1.0 / 6.0);

        std::vector<int> near;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          if ((nodes[i].theta - q_new).norm() <= radius) near.push_back(static_cast<int>(i));
        }
        if (std::find(near.begin(), near.end(), nearest) == near.end()) near.push_back(nearest);

        std::vector<std::pair<double, int>> candidates;
        candidates.reserve(near.size());
        for (int i : near) candidates.emplace_back(nodes[i].cost + (nodes[i].theta - q_new).norm(), i);
        std::sort(candidates.begin(), candidates.end());
        int parent = -1;
        double parent_cost = 0.0;
        for (const auto& [c, i] : candidates) {
          if (edge_clear(model, nodes[i].theta, q_new, obstacles, cs)) {
            parent = i;
            parent_cost = c;
            break;
          }
        }
        if (parent >= 0) {
          const int idx = static_cast<int>(nodes.size());
          nodes.push_back({q_new, parent, parent_cost, {}});
          nodes[parent].children.push_back(idx);
          const bool is_goal = (q_new - goal).norm() < 1e-12;
          if (is_goal && goal_index < 0) goal_index = idx;

          for (int i : near) {
            if (i == parent || i == 0) continue;
            const double c = nodes[idx].cost + (nodes[i].theta - q_new).norm();
            if (c < nodes[i].cost - 1e-12 && edge_clear(model, q_new, nodes[i].theta, obstacles, cs)) {
              reparent(i, idx);
            }
          }

          if (goal_index < 0 && !is_goal && (goal - q_new).norm() <= params.step_size &&
              edge_clear(model, q_new, goal, obstacles, cs)) {
            goal_index = static_cast<int>(nodes.size());
            nodes.push_back({goal, idx, nodes[idx].cost + (goal - q_new).norm(), {}});
            nodes[idx].children.push_back(goal_index);
          }
        }
      }
    }

    if (iter % every == 0 && static_cast<int>(out.cost_history.size()) < params.checkpoints) {
      out.cost_history.push_back(goal_index >= 0 ? nodes[goal_index].cost : std::numeric_limits<double>::infinity());
    }
  }

  out.tree_size = nodes.size();
  if (goal_index < 0) {
    fail(ErrorCode::NoPathFound, "RRT* found no path in " + std::to_string(params.max_iters) + " iterations");
  }
  for (int i = goal_index; i >= 0; i = nodes[i].parent) out.waypoints.push_back(nodes[i].theta);
  std::reverse(out.waypoints.begin(), out.waypoints.end());
  out.cost = nodes[goal_index].cost;
  return out;
}

inline PlannedPath rrt_star_plan(const ManipulatorModel& model, const JointVector& start, const Pose& goal_pose,
                                 const ObstacleList& obstacles, const RrtStarParams& params) {
  for (const auto& o : obstacles) o.validate();
  const JointVector goal = plan_goal_configuration(model, start, goal_pose, obstacles, params);
  return rrt_star_to_configuration(model, start, goal, obstacles, params);
}

inline double joint_path_length(const std::vector<JointVector>& waypoints) {
  double c = 0.0;
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) c += (waypoints[i + 1] - waypoints[i]).norm();
  return c;
}

// ---------------------------------------------------------------------------
// Trajectory

struct Trajectory {
  std::vector<double> times;
  std::vector<Pose> poses;
  std::vector<Vector6> velocities;  // (linear, angular) over [t_k, t_k+1); zero on the last sample
  double tick_rate = 1000.0;

  [[nodiscard]] double duration() const { return times.empty() ? 0.0 : times.back(); }
  [[nodiscard]] std::size_t size() const { return times.size(); }
};

/// Arc-length metric: metres of translation, or rotation scaled by rho
/// (m/rad), whichever is larger.
inline constexpr double kRotationArcScale = 0.1;

inline double pose_arc(const Pose& a, const Pose& b) {
  return std::max((b.position - a.position).norm(), kRotationArcScale * rotation_distance(b.orientation, a.orientation));
}

struct TrapezoidProfile {
  double length = 0.0;
  double v_peak = 0.0;
  double t_accel = 0.0;
  double t_cruise = 0.0;
  double a_max = 0.0;

  TrapezoidProfile() = default;
  TrapezoidProfile(double len, double v_max, double a) : length(len), a_max(a) {
    if (!(v_max > 0.0) || !(a > 0.0)) fail(ErrorCode::InvalidArgument, "v_max and a_max must be positive");
    if (len <= 0.0) return;
    if (v_max * v_max / a >= len) {
      v_peak = std::sqrt(len * a);
      t_accel = v_peak / a;
      t_cruise = 0.0;
    } else {
      v_peak = v_max;
      t_accel = v_max / a;
      t_cruise = (len - v_max * t_accel) / v_max;
    }
  }

  [[nodiscard]] double duration() const { return 2.0 * t_accel + t_cruise; }

  [[nodiscard]] double position(double t) const {
    if (length <= 0.0 || t <= 0.0) return 0.0;
    const double d_acc = 0.5 * a_max * t_accel * t_accel;
    if (t < t_accel) return 0.5 * a_max * t * t;
    if (t < t_accel + t_cruise) return d_acc + v_peak * (t - t_accel);
    const double t_end = duration();
    if (t >= t_end) return length;
    const double r = t_end - t;
    return length - 0.5 * a_max * r * r;
  }
};

namespace detail {

inline Pose interpolate_pose(const Pose& a, const Pose& b, double alpha) {
  Pose p;
  p.position = a.position + alpha * (b.position - a.position);
  p.orientation = so3_exp(alpha * so3_log(b.orientation * a.orientation.transpose())) * a.orientation;
  return p;
}

}  // namespace detail

/// Trapezoidal profile along a Cartesian polyline, sampled at `tick_rate`
/// plus a final sample at the exact end time.
inline Trajectory time_parameterize_poses(const std::vector<Pose>& polyline, double v_max, double a_max,
                                          double tick_rate) {
  if (polyline.empty()) fail(ErrorCode::InvalidArgument, "empty path");
  if (!(tick_rate > 0.0)) fail(ErrorCode::InvalidArgument, "tick_rate must be positive");
  std::vector<double> s(polyline.size(), 0.0);
  for (std::size_t i = 1; i < polyline.size(); ++i) s[i] = s[i - 1] + pose_arc(polyline[i - 1], polyline[i]);
  const TrapezoidProfile profile(s.back(), v_max, a_max);

  Trajectory traj;
  traj.tick_rate = tick_rate;
  const double t_end = profile.duration();
  const double dt = 1.0 / tick_rate;
  const auto n_ticks = static_cast<std::size_t>(std::floor(t_end * tick_rate + 1e-9));
  std::size_t seg = 0;
  auto sample_at = [&](double t) {
    const double si = profile.position(t);
    while (seg + 1 < s.size() - 1 && s[seg + 1] < si) ++seg;
    if (polyline.size() == 1) return polyline.front();
    const double span = s[seg + 1] - s[seg];
    const double alpha = span > 0.0 ? std::clamp((si - s[seg]) / span, 0.0, 1.0) : 1.0;
    return detail::interpolate_pose(polyline[seg], polyline[seg + 1], alpha);
  };
  for (std::size_t k = 0; k <= n_ticks; ++k) {
    const double t = static_cast<double>(k) * dt;
    traj.times.push_back(t);
    traj.poses.push_back(k == 0 ? polyline.front() : sample_at(t));
  }
  if (t_end - traj.times.back() > 1e-9) {
    traj.times.push_back(t_end);
    traj.poses.push_back(polyline.back());
  } else if (traj.times.size() > 1) {
    traj.poses.back() = polyline.back();
  }
  traj.velocities.assign(traj.times.size(), Vector6::Zero());
  for (std::size_t k = 0; k + 1 < traj.times.size(); ++k) {
    const double h = traj.times[k + 1] - traj.times[k];
    traj.velocities[k] = pose_error(traj.poses[k + 1], traj.poses[k]) / h;
  }
  return traj;
}

/// Trapezoidal profile along the FK image of a joint path. The joint path is
/// densified so consecutive FK samples are at most `resolution` apart.
inline Trajectory time_parameterize(const PlannedPath& path, const ManipulatorModel& model, double v_max,
                                    double a_max, double tick_rate = 1000.0, double resolution = 1e-3) {
  if (path.waypoints.empty()) fail(ErrorCode::InvalidArgument, "empty path");
  std::vector<Pose> polyline{forward_kinematics(model, path.waypoints.front())};
  for (std::size_t i = 0; i + 1 < path.waypoints.size(); ++i) {
    const JointVector& a = path.waypoints[i];
    const JointVector& b = path.waypoints[i + 1];
    const int n = edge_substeps(model, a, b, resolution);
    for (int k = 1; k <= n; ++k) {
      polyline.push_back(forward_kinematics(model, a + (b - a) * (static_cast<double>(k) / n)));
    }
  }
  return time_parameterize_poses(polyline, v_max, a_max, tick_rate);
}

struct Reference {
  Pose pose;
  Vector6 velocity = Vector6::Zero();
};

/// Piecewise-linear reference (shortest-arc on orientation); holds the final
/// pose with zero velocity past the end.
inline Reference reference_at(const Trajectory& traj, double t) {
  if (traj.times.empty()) fail(ErrorCode::InvalidArgument, "empty trajectory");
  if (!(t >= 0.0)) fail(ErrorCode::InvalidArgument, "reference time must be >= 0");
  if (t >= traj.times.back()) return {traj.poses.back(), Vector6::Zero()};
  auto k = static_cast<std::size_t>(std::floor(t * traj.tick_rate));
  k = std::min(k, traj.times.size() - 2);
  while (k > 0 && traj.times[k] > t) --k;
  while (k + 2 < traj.times.size() && traj.times[k + 1] <= t) ++k;
  const double alpha = (t - traj.times[k]) / (traj.times[k + 1] - traj.times[k]);
  if (alpha == 0.0) return {traj.poses[k], traj.velocities[k]};
  return {detail::interpolate_pose(traj.poses[k], traj.poses[k + 1], alpha), traj.velocities[k]};
}

/// Time-based resume: the plan clock keeps running through a perturbation,
/// x_d(t) is never regenerated, and return to the plan comes only from the
/// decay of the admittance offset. The clock refuses to run backwards.
class ResumePolicy {
 public:
  explicit ResumePolicy(const Trajectory& traj) : traj_(&traj) {}

  Reference reference(double t) {
    if (t < last_t_) fail(ErrorCode::InvalidArgument, "reference clock cannot rewind");
    last_t_ = t;
    return reference_at(*traj_, t);
  }

  [[nodiscard]] double clock() const { return last_t_; }

 private:
  const Trajectory* traj_;
  double last_t_ = 0.0;
};

}  // namespace admsim
