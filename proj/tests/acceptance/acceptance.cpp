// Acceptance gate: one PASS/FAIL line per primary criterion, exit 1 if any fail.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>

#include "admsim/server.hpp"
#include "second_order_oracle.hpp"

using namespace admsim;

namespace {

const fs::path kSource = ADMSIM_SOURCE_DIR;
const fs::path kGolden = ADMSIM_GOLDEN_DIR;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

struct Criterion {
  const char* name;
  double budget_s;  // 0 = no runtime bound
  std::function<void(Outcome&)> body;
};

ForceSegment push(double start, double duration, const Vec3& force, double ramp = kDefaultRamp) {
  ForceSegment s;
  s.start = start;
  s.duration = duration;
  s.wrench.force = force;
  s.ramp = ramp;
  return s;
}

Scenario hold_scenario(double m, double b, double k, double duration) {
  Scenario sc;
  sc.name = "hold";
  sc.admittance = AdmittanceParams::translational(m, b, k);
  sc.admittance.offset_limit.head<3>().setConstant(1.0);
  sc.duration = duration;
  return sc;
}

Scenario push_scenario() { return load_scenario(kSource / "scenarios" / "push_12N.json"); }

std::vector<double> columns(const LogRow& r) {
  std::vector<double> v;
  r.for_each_column([&](const double& x) { v.push_back(x); });
  return v;
}

bool bit_identical(const RunLog& a, const RunLog& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto va = columns(a.rows[i]), vb = columns(b.rows[i]);
    if (std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

double max_row_difference(const LogRow& a, const LogRow& b) {
  const auto va = columns(a), vb = columns(b);
  double d = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) d = std::max(d, std::abs(va[i] - vb[i]));
  return d;
}

Pose facing_plane(double z, double tilt_x) {
  Pose p;
  p.position = Vec3(0, 0, z);
  p.orientation = so3_exp(Vec3(tilt_x, 0, 0)) * so3_exp(Vec3(kPi, 0, 0));
  return p;
}

JointVector random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  JointVector q;
  for (int j = 0; j < 6; ++j) q[j] = u(rng);
  return q;
}

JointVector home() {
  JointVector q;
  q << 0.0, -1.2, 1.4, -1.77, -1.57, 0.0;
  return q;
}

// ---------------------------------------------------------------------------

void admittance_fidelity(Outcome& o) {
  const AdmittanceParams p = AdmittanceParams::translational(5.0, 50.0, 100.0);
  const oracle::SecondOrder sys(5.0, 50.0, 100.0);
  const Wrench f{{10.0, 0.0, 0.0}, Vec3::Zero()};
  const double dt = 1e-3;
  AdmittanceState s;
  double worst = 0.0;
  for (int n = 1; n <= 5000; ++n) {
    s = admittance_step(s, p, f, dt);
    worst = std::max(worst, std::abs(s.delta_x[0] - sys.at({}, {10.0}, n * dt).x));
  }
  const AdmittanceStepper st(p, dt);
  for (int n = 0; n < 20000; ++n) s = st.step(s, f);
  o.detail << "max |dx - closed form| = " << worst << " m over 5 s; steady dx = " << s.delta_x[0] << " m";
  o.require(worst < 2e-4, "trajectory error < 2e-4 m");
  o.require(std::abs(s.delta_x[0] - 0.100) < 1e-6, "steady state 0.100 m within 1e-6");
}

void force_tracking_rmse(Outcome& o) {
  const double rmse = metric_force_tracking_rmse(run_scenario(push_scenario()));
  o.detail << "RMSE = " << rmse << " N at dt = 1 ms";
  o.require(rmse <= 0.07, "RMSE <= 0.07 N");
}

void yield_and_recover(Outcome& o) {
  const Scenario sc = push_scenario();
  const RunLog log = run_scenario(sc);
  const ForceSegment& seg = sc.force_profile.segments.at(0);
  const int axis = 1;
  const oracle::PiecewiseResponse model(
      oracle::SecondOrder(sc.admittance.mass[axis], sc.admittance.damping[axis], sc.admittance.stiffness[axis]),
      oracle::cosine_pulse(seg.wrench.force[axis], seg.start, seg.duration, seg.ramp, sc.admittance.force_deadband));

  double predicted = 0.0;
  for (double t = seg.start; t < seg.end() + 1.0; t += 1e-4) predicted = std::max(predicted, std::abs(model.at(t).x));
  const double peak = metric_max_deviation(log) / 100.0;

  double band_t = seg.end() - seg.ramp;
  while (std::abs(model.at(band_t).x) >= kRecoveryBand) band_t += 1e-4;
  double lo = band_t - 1e-4, hi = band_t;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::abs(model.at(mid).x) >= kRecoveryBand ? lo : hi) = mid;
  }

  double during = 0.0;
  for (const auto& r : log.rows) {
    if (r.t > seg.start && r.t < seg.end()) during = std::max(during, r.deviation());
  }
  const auto rel = detail::release_index(log);
  const auto rec = metric_recovery_time(log);
  const auto settle = metric_settling_time(log);
  o.require(rel && rec && settle, "release, recovery and settling all reported");
  if (!o.pass) return;
  const double measured = detail::release_time(log, *rel) + *rec;
  o.detail << "peak " << peak * 100 << " cm vs closed form " << predicted * 100 << " cm; band entry at " << measured
           << " s vs analytic " << hi << " s; recovery " << *rec << " s, settling " << *settle << " s";
  o.require(std::abs(peak - predicted) <= 0.1 * predicted, "peak within 10% of closed form");
  o.require(during > 0.0 && log.rows.back().deviation() < kRecoveryBand, "deviation rises then returns below 1 mm");
  o.require(std::abs(measured - hi) <= 2.0 * sc.dt(), "recovery within 2 ticks of analytic crossing");
}

void passivity(Outcome& o) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> m(0.5, 20.0), b(1.0, 200.0), k(0.0, 1000.0), f(-20.0, 20.0), u(0.0, 1.0);
  double worst = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 50; ++trial) {
    Scenario sc;
    sc.admittance.mass.head<3>() = Vec3(m(gen), m(gen), m(gen));
    sc.admittance.damping.head<3>() = Vec3(b(gen), b(gen), b(gen));
    sc.admittance.stiffness.head<3>() = Vec3(k(gen), k(gen), k(gen));
    sc.admittance.offset_limit.head<3>().setConstant(1e3);
    sc.duration = 2.0;
    double t = 0.05;
    while (t < 1.8) {
      const double dur = 0.1 + 0.5 * u(gen);
      sc.force_profile.segments.push_back(push(t, dur, Vec3(f(gen), f(gen), f(gen)), 0.04 * u(gen)));
      t += dur + 0.2 * u(gen);
    }
    worst = std::min(worst, metric_energy(run_scenario(sc)).min_cumulative);
  }
  o.detail << "min cumulative dissipated energy over 50 sets = " << worst << " J";
  o.require(worst >= -1e-6, "dissipated energy >= -1e-6 J at every tick");
}

void underdamped(Outcome& o) {
  Scenario sc = hold_scenario(5, 20, 500, 6.0);
  sc.force_profile.segments.push_back(push(0.5, 2.0, Vec3(0, -12, 0)));
  const RunLog log = run_scenario(sc);
  const DampingEstimate d = metric_damping_ratio(log);
  const auto ts = metric_settling_time(log);
  const double expected_ts = 4.0 / (0.2 * 10.0);
  o.require(d.oscillatory && d.zeta.has_value() && ts.has_value(), "oscillation and settling detected");
  if (!o.pass) return;
  o.detail << "zeta = " << *d.zeta << " (0.2), settling = " << *ts << " s (" << expected_ts << " s)";
  o.require(std::abs(*d.zeta - 0.2) <= 0.05, "zeta within 0.05");
  o.require(std::abs(*ts - expected_ts) <= 0.1 * expected_ts, "settling within 10%");
}

void vision_exactness(Outcome& o) {
  Rng rng(77);
  double pos_err = 0.0, rot_err = 0.0, transfer = 0.0;
  std::size_t leaked = 0, rejected_inliers = 0, outliers = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double tilt = deg_to_rad(rng.uniform(0, 74.9));
    const double azimuth = rng.uniform(-kPi, kPi);
    PlaneSpec spec;
    spec.pose.position = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.08, 0.08), rng.uniform(0.5, 0.9));
    spec.pose.orientation = so3_exp(tilt * Vec3(std::cos(azimuth), std::sin(azimuth), 0)) * so3_exp({kPi, 0, 0}) *
                            so3_exp({0, 0, rng.uniform(-kPi, kPi)});
    const SyntheticScene clean = generate_scene(spec, {}, {});
    const ObjectPose est = estimate_object_pose(clean.templ, clean.scene, clean.depth, clean.intrinsics);
    pos_err = std::max(pos_err, (est.pose.position - spec.pose.position).norm());
    rot_err = std::max(rot_err, rotation_distance(est.pose.orientation, spec.pose.orientation));

    NoiseSpec noise;
    noise.outlier_rate = 0.3;
    noise.seed = static_cast<std::uint64_t>(trial + 1);
    const SyntheticScene dirty = generate_scene(spec, {}, noise);
    const RansacResult r = ransac_homography(dirty.correspondences, {3.0, 2000, 7});
    std::vector<bool> planted(dirty.correspondences.size(), false);
    for (std::size_t i : dirty.outlier_indices) planted[i] = true;
    outliers += dirty.outlier_indices.size();
    for (std::size_t i = 0; i < planted.size(); ++i) {
      if (planted[i] && r.inliers[i]) ++leaked;
      if (!planted[i] && !r.inliers[i]) ++rejected_inliers;
      if (r.inliers[i]) transfer = std::max(transfer, transfer_error(r.h, dirty.correspondences[i]));
    }
  }
  o.detail << "noiseless max error " << pos_err << " m / " << rot_err << " rad; 30% outliers: " << leaked << " of "
           << outliers << " planted accepted, " << rejected_inliers << " true points rejected, max inlier transfer "
           << transfer << " px";
  o.require(pos_err < 1e-6 && rot_err < 1e-6, "pose within 1e-6 m / 1e-6 rad");
  o.require(leaked == 0, "all planted outliers excluded");
  o.require(transfer < 1e-6, "inlier reprojection < 1e-6 px");
}

void vision_noise(Outcome& o) {
  std::vector<double> errors;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    NoiseSpec noise;
    noise.keypoint_sigma = 0.5;
    noise.depth_sigma = 0.002;
    noise.seed = seed;
    const SyntheticScene s = generate_scene({facing_plane(0.6, 0.2)}, {}, noise);
    const ObjectPose est = estimate_object_pose(s.templ, s.scene, s.depth, s.intrinsics);
    errors.push_back((est.pose.position - s.ground_truth.pose.position).norm());
  }
  std::nth_element(errors.begin(), errors.begin() + 50, errors.end());
  o.detail << "median position error = " << errors[50] * 100 << " cm over 100 trials";
  o.require(errors[50] <= 0.0061, "median <= 0.61 cm");
}

void kinematics(Outcome& o) {
  const ManipulatorModel m = ur5e_model();
  std::mt19937_64 rng(42);
  double fd_worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const JointVector q = random_config(rng);
    const JacobianMatrix jac = jacobian(m, q);
    const Pose p0 = forward_kinematics(m, q);
    for (int j = 0; j < 6; ++j) {
      JointVector qh = q;
      qh[j] += 1e-6;
      const Pose ph = forward_kinematics(m, qh);
      Vector6 fd;
      fd.head<3>() = (ph.position - p0.position) / 1e-6;
      fd.tail<3>() = so3_log(ph.orientation * p0.orientation.transpose()) / 1e-6;
      fd_worst = std::max(fd_worst, (jac.col(j) - fd).norm());
    }
  }

  std::uniform_real_distribution<double> small(-0.3, 0.3);
  IkOptions opt;
  opt.tol = 1e-7;
  double ik_worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    JointVector seed = random_config(rng);
    seed[2] = std::clamp(seed[2], -2.8, 2.8);
    JointVector delta;
    for (int j = 0; j < 6; ++j) delta[j] = small(rng);
    const Pose target = forward_kinematics(m, seed + delta);
    const IkResult r = dls_pose_ik(m, seed, target, opt);
    const Vector6 err = pose_error(target, forward_kinematics(m, r.theta));
    ik_worst = std::max({ik_worst, err.head<3>().norm(), err.tail<3>().norm()});
  }

  std::normal_distribution<double> n(0.0, 1.0);
  double dls_worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const JacobianMatrix jac = jacobian(m, random_config(rng));
    Vector6 xdot;
    for (int i = 0; i < 6; ++i) xdot[i] = n(rng);
    const double lambda = 0.05;
    const Eigen::JacobiSVD<Matrix6> svd(jac, Eigen::ComputeFullU | Eigen::ComputeFullV);
    JointVector ref = JointVector::Zero();
    for (int i = 0; i < 6; ++i) {
      const double s = svd.singularValues()[i];
      ref += (s / (s * s + lambda * lambda)) * svd.matrixU().col(i).dot(xdot) * svd.matrixV().col(i);
    }
    dls_worst = std::max(dls_worst, (dls_joint_velocity(jac, xdot, lambda) - ref).norm() / std::max(1.0, ref.norm()));
  }
  o.detail << "Jacobian vs finite difference " << fd_worst << "; IK round trip " << ik_worst << "; DLS vs SVD "
           << dls_worst;
  o.require(fd_worst < 1e-5, "Jacobian agreement < 1e-5");
  o.require(ik_worst < 1e-6, "IK round-trip error < 1e-6");
  o.require(dls_worst <= 1e-9, "DLS velocity within 1e-9");
}

void rrt_star(Outcome& o) {
  const ManipulatorModel m = ur5e_model();
  const ObstacleList wall = {WorkspaceObstacle::box({-0.65, -0.13, 0.275}, {0.2, 0.04, 0.275}),
                             WorkspaceObstacle::box({-0.65, -0.13, 1.05}, {0.2, 0.04, 0.2})};
  JointVector start = home(), goal = home();
  start[0] = -0.8;
  goal[0] = 0.8;

  RrtStarParams params;
  params.max_iters = 1000;
  params.seed = 11;
  const PlannedPath mono = rrt_star_to_configuration(m, start, goal, wall, params);
  bool monotone = mono.cost_history.size() == 10;
  for (std::size_t i = 1; i < mono.cost_history.size(); ++i) monotone = monotone && mono.cost_history[i] <= mono.cost_history[i - 1];

  double dense_worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed : {3, 11, 21}) {
    params.seed = seed;
    const PlannedPath p = seed == 11 ? mono : rrt_star_to_configuration(m, start, goal, wall, params);
    dense_worst = std::min(dense_worst, path_min_clearance(m, p, wall, params.collision.resolution / 10.0));
  }

  params.max_iters = 5000;
  double ratio_worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    params.seed = seed;
    Rng rng(seed * 7919);
    JointVector g = home();
    for (int j = 0; j < 6; ++j) g[j] += rng.uniform(-0.8, 0.8);
    const PlannedPath p = rrt_star_plan(m, home(), forward_kinematics(m, g), {}, params);
    ratio_worst = std::max(ratio_worst, p.cost / (p.waypoints.back() - p.waypoints.front()).norm());
  }
  o.detail << "checkpoint costs " << (monotone ? "non-increasing" : "NOT monotone") << "; worst free-space cost ratio "
           << ratio_worst << "; min clearance on 10x dense re-check " << dense_worst << " m";
  o.require(monotone, "cost non-increasing over 10 checkpoints");
  o.require(ratio_worst <= 1.05 + 1e-12, "free-space cost within 5% of straight line");
  o.require(dense_worst > 0.0, "paths collision-free under dense re-check");
}

void determinism_and_golden(Outcome& o) {
  const Scenario sc = push_scenario();
  const RunLog a = run_scenario(sc), b = run_scenario(sc);
  const bool repeat = bit_identical(a, b);

  const RunLog golden = load_log(kGolden / "push_12N.csv");
  const std::string want = read_text_file(kGolden / "push_12N.metrics.json");
  const std::string got = metrics_to_json(compute_metrics(golden)).dump(2) + "\n";
  const bool golden_regenerates = bit_identical(decimate(a, sc.log_decimation), golden);
  o.detail << "repeat runs " << (repeat ? "bit-identical" : "DIFFER") << "; golden metrics "
           << (got == want ? "reproduced bit-exactly" : "DIFFER") << "; fresh log vs golden log "
           << (golden_regenerates ? "bit-identical" : "differs (platform drift)");
  o.require(repeat, "repeated runs bit-identical");
  o.require(got == want, "golden MetricsReport reproduced bit-exactly");
}

class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }
  json read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
  void send(const json& j) { ws_.write(net::buffer(j.dump())); }
  void close() { ws_.close(websocket::close_code::normal); }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

json command(int seq, const std::string& kind, json payload = json::object()) {
  return {{"v", kProtocolVersion}, {"seq", seq}, {"kind", kind}, {"payload", std::move(payload)}};
}

void batch_interactive(Outcome& o) {
  struct Step {
    std::size_t at_tick;
    Vec3 force;
    double duration;
  };
  const std::vector<Step> script = {{250, Vec3(0, -12, 0), 1.0}, {1800, Vec3(8, 0, 0), 0.8}};
  Scenario live = hold_scenario(5, 50, 100, 3.5);
  SimulationSession session(live);
  session.set_paused(true);
  RunnerOptions ro;
  ro.pace = 4.0;
  ServiceRunner runner(std::move(session), ro);
  WsServer server(runner, Endpoint{"127.0.0.1", 0});
  server.start();
  runner.start();

  Client c(server.port());
  c.send(command(1, "resume"));
  std::vector<json> states;
  std::vector<std::size_t> applied;
  std::size_t next = 0;
  for (;;) {
    const json m = c.read();
    if (m["kind"] == "ack" && m["payload"]["command"] == "apply_force") applied.push_back(m["payload"]["applied_tick"]);
    if (m["kind"] == "state") {
      states.push_back(m["payload"]);
      if (next < script.size() && m["payload"]["tick"].get<std::size_t>() >= script[next].at_tick) {
        const Step& s = script[next];
        c.send(command(static_cast<int>(2 + next), "apply_force",
                       {{"force", {s.force.x(), s.force.y(), s.force.z()}}, {"duration", s.duration}}));
        ++next;
      }
    }
    if (m["kind"] == "metrics") break;
  }
  c.close();
  runner.stop();
  server.stop();

  o.require(applied.size() == script.size(), "every scripted command acknowledged");
  if (!o.pass) return;
  Scenario batch = live;
  for (std::size_t i = 0; i < script.size(); ++i) {
    batch.force_profile.segments.push_back(push(static_cast<double>(applied[i]) * batch.dt(), script[i].duration, script[i].force));
  }
  const RunLog ref = run_scenario(batch);
  double worst = 0.0;
  for (const auto& s : states) worst = std::max(worst, max_row_difference(row_from_json(s["row"]), ref.rows.at(s["tick"])));
  o.detail << states.size() << " streamed states, commands applied at ticks " << applied[0] << " and " << applied[1]
           << "; max |live - batch| = " << worst;
  o.require(states.size() > 100, "state stream received");
  o.require(worst <= 1e-9, "live states match batch within 1e-9");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"admittance fidelity", 1.0, admittance_fidelity},
      {"force-tracking RMSE", 10.0, force_tracking_rmse},
      {"yield-and-recover", 0.0, yield_and_recover},
      {"passivity suite", 30.0, passivity},
      {"underdamped metrology", 0.0, underdamped},
      {"vision exactness", 20.0, vision_exactness},
      {"vision noise envelope", 0.0, vision_noise},
      {"kinematics", 0.0, kinematics},
      {"RRT*", 60.0, rrt_star},
      {"determinism and golden regression", 0.0, determinism_and_golden},
      {"batch/interactive equivalence", 0.0, batch_interactive},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Criterion& c = criteria[i];
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0.0 && elapsed >= c.budget_s) {
      o.pass = false;
      o.detail << " [violated: runtime < " << c.budget_s << " s]";
    }
    if (!o.pass) ++failed;
    std::printf("%s  %2zu %-36s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", i + 1, c.name, elapsed, o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
