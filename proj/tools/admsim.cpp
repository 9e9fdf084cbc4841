// admsim command-line front end: run | pose | metrics | serve | generate-scene

#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "admsim/server.hpp"

using namespace admsim;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kPlanFailure = 2,
  kConfigError = 3,
  kVisionFailure = 4,
  kDataError = 5,
};

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::PlanFailure:
    case ErrorCode::GoalUnreachable:
    case ErrorCode::NoPathFound:
      return kPlanFailure;
    case ErrorCode::ConfigError:
    case ErrorCode::PassivityViolation:
      return kConfigError;
    case ErrorCode::ConsensusFailed:
    case ErrorCode::TooFewMatches:
      return kVisionFailure;
    case ErrorCode::ParseError:
    case ErrorCode::VersionError:
      return kDataError;
    default:
      return kFailure;
  }
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string scenario;
  std::string out = "run.csv";
  std::optional<std::uint64_t> seed;
  bool full_rate = false;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  Scenario sc = load_scenario(a.scenario);
  if (a.seed) sc.seed = *a.seed;
  if (a.full_rate) sc.log_decimation = 1;
  spdlog::info("running '{}' ({} ticks at {} Hz, hash {})", sc.name, sc.ticks(), sc.tick_rate, sc.hash);
  const RunLog full = run_scenario(sc);
  const RunLog log = decimate(full, sc.log_decimation);
  const fs::path out = a.out;
  export_log(log, out);
  const MetricsReport m = compute_metrics(log);
  const fs::path report = sidecar_path(out, ".metrics.json");
  write_text_file(report, metrics_to_json(m).dump(2) + "\n");
  spdlog::info("wrote {} ({} rows), {} and {}", out.string(), log.rows.size(), sidecar_path(out, ".meta.json").string(),
               report.string());
  if (!a.quiet) std::cout << metrics_table(m);
  return kOk;
}

struct PoseArgs {
  std::string template_file, scene_file, depth_file, intrinsics_file;
  double ratio = 0.75;
  double threshold = 3.0;
  int iterations = 2000;
  std::uint64_t seed = 7;
};

int cmd_pose(const PoseArgs& a) {
  const Template t = load_template(a.template_file);
  const FeatureSet scene = load_scene_features(a.scene_file);
  const DepthMap depth = read_depth(a.depth_file);
  const CameraIntrinsics k = intrinsics_from_json(parse_json_file(a.intrinsics_file));
  PoseEstimationParams p;
  p.ratio = a.ratio;
  p.ransac.threshold_px = a.threshold;
  p.ransac.max_iters = a.iterations;
  p.ransac.seed = a.seed;
  const ObjectPose pose = estimate_object_pose(t, scene, depth, k, p);
  std::cout << object_pose_to_json(pose).dump(2) << "\n";
  return kOk;
}

struct MetricsArgs {
  std::string log;
  std::string format = "json";
  std::string out;
};

int cmd_metrics(const MetricsArgs& a) {
  const RunLog log = load_log(a.log);
  if (log.rows.empty()) fail(ErrorCode::ParseError, a.log + ": log has no rows");
  const MetricsReport m = compute_metrics(log);
  const std::string text = a.format == "table" ? metrics_table(m) : metrics_to_json(m).dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text_file(a.out, text);
  }
  return kOk;
}

struct ServeArgs {
  std::string scenario;
  std::string bind;
  double pace = 1.0;
  double display_rate = 60.0;
  bool paused = false;
  std::size_t queue = 1024;
};

volatile std::sig_atomic_t g_stop = 0;

int cmd_serve(const ServeArgs& a) {
  const Endpoint ep = parse_endpoint(a.bind.empty() ? env_or("ADMSIM_BIND", "127.0.0.1:8765") : a.bind);
  Scenario sc = load_scenario(a.scenario);
  SessionOptions so;
  so.display_rate = a.display_rate;
  so.base_dir = fs::path(a.scenario).parent_path();
  SimulationSession session(std::move(sc), so);
  session.set_paused(a.paused);
  RunnerOptions ro;
  ro.pace = a.pace;
  ServiceRunner runner(std::move(session), ro);
  WsServer server(runner, ep, a.queue);
  server.start();
  runner.start();
  spdlog::info("serving on ws://{}:{} (pace {}, display {} Hz{})", ep.host, server.port(), a.pace, a.display_rate,
               a.paused ? ", paused" : "");
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  spdlog::info("shutting down");
  runner.stop();
  server.stop();
  return kOk;
}

struct SceneArgs {
  std::string out = "scene";
  double distance = 0.6;
  double tilt_x = 0.0, tilt_y = 0.0, yaw = 0.0;
  double offset_x = 0.0, offset_y = 0.0;
  double width = 0.20, height = 0.15, density = 50.0, scale = 5e-4;
  double keypoint_sigma = 0.0, depth_sigma = 0.0, outlier_rate = 0.0;
  std::uint64_t seed = 1;
};

int cmd_generate_scene(const SceneArgs& a) {
  PlaneSpec plane;
  plane.pose.position = Vec3(a.offset_x, a.offset_y, a.distance);
  // Plane normal faces the camera (plane z along -camera z), then tilts.
  plane.pose.orientation = so3_exp(Vec3(a.tilt_x, 0, 0)) * so3_exp(Vec3(0, a.tilt_y, 0)) * so3_exp(Vec3(0, 0, a.yaw)) *
                           so3_exp(Vec3(kPi, 0, 0));
  plane.width = a.width;
  plane.height = a.height;
  plane.density = a.density;
  plane.template_scale = a.scale;
  NoiseSpec noise;
  noise.keypoint_sigma = a.keypoint_sigma;
  noise.depth_sigma = a.depth_sigma;
  noise.outlier_rate = a.outlier_rate;
  noise.seed = a.seed;
  const SyntheticScene s = generate_scene(plane, CameraIntrinsics{}, noise);
  const SceneFiles f = write_scene(s, a.out);
  spdlog::info("{} correspondences, {} outliers", s.correspondences.size(), s.outlier_indices.size());
  std::cout << json{{"template", f.template_file.string()},
                    {"scene", f.scene_file.string()},
                    {"depth", f.depth_file.string()},
                    {"intrinsics", f.intrinsics_file.string()},
                    {"ground_truth", f.truth_file.string()}}
                   .dump(2)
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"admsim: admittance-controlled manipulator simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  std::string log_level = env_or("ADMSIM_LOG_LEVEL", "warn");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off (env ADMSIM_LOG_LEVEL)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario; write the run log, its metadata and the metrics report");
  run_cmd->add_option("scenario", run.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("-o,--out", run.out, "Run-log CSV path (sidecars: .meta.json, .metrics.json)");
  run_cmd->add_option("--seed", run.seed, "Override the scenario seed");
  run_cmd->add_flag("--full-rate", run.full_rate, "Export every tick instead of the scenario log rate");
  run_cmd->add_flag("-q,--quiet", run.quiet, "Do not print the metrics table");

  PoseArgs pose;
  auto* pose_cmd = app.add_subcommand("pose", "Estimate an object pose from template, scene, depth and intrinsics");
  pose_cmd->add_option("template", pose.template_file, "Template JSON (features or image)")->required();
  pose_cmd->add_option("scene", pose.scene_file, "Scene JSON (features or image)")->required();
  pose_cmd->add_option("depth", pose.depth_file, "Depth map (.pfm metres or 16-bit .pgm millimetres)")->required();
  pose_cmd->add_option("intrinsics", pose.intrinsics_file, "Intrinsics JSON")->required();
  pose_cmd->add_option("--ratio", pose.ratio, "Lowe ratio");
  pose_cmd->add_option("--threshold", pose.threshold, "RANSAC inlier threshold (px)");
  pose_cmd->add_option("--iterations", pose.iterations, "RANSAC iterations");
  pose_cmd->add_option("--seed", pose.seed, "RANSAC seed");

  MetricsArgs metrics;
  auto* metrics_cmd = app.add_subcommand("metrics", "Recompute the metrics report from a stored run log");
  metrics_cmd->add_option("log", metrics.log, "Run-log CSV (with .meta.json sidecar)")->required();
  metrics_cmd->add_option("--format", metrics.format, "json or table")->check(CLI::IsMember({"json", "table"}));
  metrics_cmd->add_option("-o,--out", metrics.out, "Write to a file instead of stdout");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run a scenario live behind a WebSocket command/telemetry channel");
  serve_cmd->add_option("scenario", serve.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--bind", serve.bind, "host:port (env ADMSIM_BIND, default 127.0.0.1:8765)");
  serve_cmd->add_option("--pace", serve.pace, "Simulated seconds per wall second; 0 = unpaced")->check(CLI::NonNegativeNumber);
  serve_cmd->add_option("--display-rate", serve.display_rate, "State broadcast rate (Hz)")->check(CLI::PositiveNumber);
  serve_cmd->add_flag("--paused", serve.paused, "Start paused (send 'resume')");
  serve_cmd->add_option("--queue", serve.queue, "Per-client outbound queue length");

  SceneArgs scene;
  auto* scene_cmd = app.add_subcommand("generate-scene", "Write a synthetic planar scene with ground truth");
  scene_cmd->add_option("-o,--out", scene.out, "Output directory");
  scene_cmd->add_option("--distance", scene.distance, "Plane distance along the optical axis (m)");
  scene_cmd->add_option("--tilt-x", scene.tilt_x, "Tilt about camera x (rad)");
  scene_cmd->add_option("--tilt-y", scene.tilt_y, "Tilt about camera y (rad)");
  scene_cmd->add_option("--yaw", scene.yaw, "In-plane rotation (rad)");
  scene_cmd->add_option("--offset-x", scene.offset_x, "Plane centre x (m)");
  scene_cmd->add_option("--offset-y", scene.offset_y, "Plane centre y (m)");
  scene_cmd->add_option("--width", scene.width, "Plane width (m)");
  scene_cmd->add_option("--height", scene.height, "Plane height (m)");
  scene_cmd->add_option("--density", scene.density, "Grid points per metre");
  scene_cmd->add_option("--scale", scene.scale, "Template metres per pixel");
  scene_cmd->add_option("--keypoint-sigma", scene.keypoint_sigma, "Keypoint noise (px)");
  scene_cmd->add_option("--depth-sigma", scene.depth_sigma, "Depth noise (m)");
  scene_cmd->add_option("--outlier-rate", scene.outlier_rate, "Fraction of planted outliers");
  scene_cmd->add_option("--seed", scene.seed, "Noise seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  auto logger = spdlog::stderr_color_mt("admsim");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");

  try {
    if (*run_cmd) return cmd_run(run);
    if (*pose_cmd) return cmd_pose(pose);
    if (*metrics_cmd) return cmd_metrics(metrics);
    if (*serve_cmd) return cmd_serve(serve);
    if (*scene_cmd) return cmd_generate_scene(scene);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
