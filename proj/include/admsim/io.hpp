#pragma once

// File formats: JSON configs with includes, run-log CSV + JSON sidecar,
// metrics report, vision inputs (feature sets, intrinsics, PFM depth).

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "admsim/metrics.hpp"
#include "admsim/scene.hpp"

namespace admsim {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Plain helpers

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::ConfigError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::ConfigError, "cannot write " + path.string());
  out << text;
}

inline json parse_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

/// Path with its extension replaced by `suffix` (e.g. ".meta.json").
inline fs::path sidecar_path(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

// ---------------------------------------------------------------------------
// JSON <-> value types

namespace jsonio {

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::ConfigError, what);
}

inline double number(const json& j, const std::string& ctx) {
  require(j.is_number(), ctx + " must be a number");
  return j.get<double>();
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& j, const std::string& ctx) {
  require(j.is_array() && j.size() == N, ctx + " must be an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = number(j[static_cast<std::size_t>(i)], ctx);
  return v;
}

/// A 6-vector given as a scalar (all axes), 3 values (translational axes,
/// rotational keep `fallback`) or 6 values.
inline Vector6 vec6_flexible(const json& j, const Vector6& fallback, const std::string& ctx) {
  if (j.is_number()) return Vector6::Constant(j.get<double>());
  require(j.is_array() && (j.size() == 3 || j.size() == 6), ctx + " must be a number or 3/6 numbers");
  Vector6 v = fallback;
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], ctx);
  return v;
}

inline json to_json(const Vector6& v) { return json::array({v[0], v[1], v[2], v[3], v[4], v[5]}); }
inline json to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

inline Pose pose(const json& j, const std::string& ctx) {
  require(j.is_object(), ctx + " must be an object");
  Pose p;
  if (j.contains("position")) p.position = vec<3>(j["position"], ctx + ".position");
  int given = 0;
  if (j.contains("rotation_vector")) {
    p.orientation = so3_exp(vec<3>(j["rotation_vector"], ctx + ".rotation_vector"));
    ++given;
  }
  if (j.contains("euler")) {
    const json& e = j["euler"];
    require(e.is_object(), ctx + ".euler must be an object {phi, theta, psi}");
    EulerAngles ea;
    ea.phi = number(e.value("phi", json(0.0)), ctx + ".euler.phi");
    ea.theta = number(e.value("theta", json(0.0)), ctx + ".euler.theta");
    ea.psi = number(e.value("psi", json(0.0)), ctx + ".euler.psi");
    p.orientation = rotation_from_euler(ea);
    ++given;
  }
  if (j.contains("rotation")) {
    const json& r = j["rotation"];
    require(r.is_array() && r.size() == 3, ctx + ".rotation must be 3 rows");
    for (int i = 0; i < 3; ++i) p.orientation.row(i) = vec<3>(r[static_cast<std::size_t>(i)], ctx + ".rotation").transpose();
    require(orthonormality_error(p.orientation) < 1e-6 && p.orientation.determinant() > 0.0,
            ctx + ".rotation is not a rotation matrix");
    ++given;
  }
  require(given <= 1, ctx + ": give at most one of rotation_vector, euler, rotation");
  return p;
}

inline json to_json(const Pose& p) {
  return {{"position", to_json(p.position)}, {"rotation_vector", to_json(Vec3(so3_log(p.orientation)))}};
}

inline json to_json(const ManipulatorModel& m) {
  json dh = json::array();
  for (const auto& r : m.dh) dh.push_back({{"a", r.a}, {"alpha", r.alpha}, {"d", r.d}, {"theta_offset", r.theta_offset}});
  return {{"name", m.name},
          {"dh", dh},
          {"lower_limit", to_json(m.lower_limit)},
          {"upper_limit", to_json(m.upper_limit)},
          {"velocity_limit", to_json(m.velocity_limit)},
          {"base", to_json(m.base)}};
}

inline ManipulatorModel model(const json& j) {
  require(j.is_object(), "model must be an object");
  ManipulatorModel m;
  m.name = j.value("name", std::string("custom"));
  require(j.contains("dh") && j["dh"].is_array() && j["dh"].size() == kJoints, "model.dh must list 6 rows");
  for (std::size_t i = 0; i < kJoints; ++i) {
    const json& r = j["dh"][i];
    const std::string ctx = "model.dh[" + std::to_string(i) + "]";
    require(r.is_object(), ctx + " must be an object");
    m.dh[i].a = number(r.value("a", json(0.0)), ctx + ".a");
    m.dh[i].alpha = number(r.value("alpha", json(0.0)), ctx + ".alpha");
    m.dh[i].d = number(r.value("d", json(0.0)), ctx + ".d");
    m.dh[i].theta_offset = number(r.value("theta_offset", json(0.0)), ctx + ".theta_offset");
  }
  if (j.contains("lower_limit")) m.lower_limit = vec<6>(j["lower_limit"], "model.lower_limit");
  if (j.contains("upper_limit")) m.upper_limit = vec<6>(j["upper_limit"], "model.upper_limit");
  if (j.contains("velocity_limit")) m.velocity_limit = vec6_flexible(j["velocity_limit"], m.velocity_limit, "model.velocity_limit");
  if (j.contains("base")) m.base = pose(j["base"], "model.base");
  m.validate();
  return m;
}

inline json to_json(const AdmittanceParams& p) {
  json mask = json::array();
  for (bool b : p.axis_mask) mask.push_back(b);
  return {{"mass", to_json(p.mass)},
          {"damping", to_json(p.damping)},
          {"stiffness", to_json(p.stiffness)},
          {"axis_mask", mask},
          {"force_deadband", p.force_deadband},
          {"offset_limit", to_json(p.offset_limit)},
          {"integrator", p.integrator == AdmittanceIntegrator::ExactHold ? "exact_hold" : "semi_implicit_euler"}};
}

/// Fields absent from `j` keep the values of `base`.
inline AdmittanceParams admittance(const json& j, AdmittanceParams p = {}) {
  require(j.is_object(), "admittance must be an object");
  for (const auto& [key, _] : j.items()) {
    require(key == "mass" || key == "damping" || key == "stiffness" || key == "axis_mask" || key == "force_deadband" ||
                key == "offset_limit" || key == "integrator",
            "unknown admittance field '" + key + "'");
  }
  if (j.contains("mass")) p.mass = vec6_flexible(j["mass"], p.mass, "admittance.mass");
  if (j.contains("damping")) p.damping = vec6_flexible(j["damping"], p.damping, "admittance.damping");
  if (j.contains("stiffness")) p.stiffness = vec6_flexible(j["stiffness"], p.stiffness, "admittance.stiffness");
  if (j.contains("offset_limit")) p.offset_limit = vec6_flexible(j["offset_limit"], p.offset_limit, "admittance.offset_limit");
  if (j.contains("force_deadband")) p.force_deadband = number(j["force_deadband"], "admittance.force_deadband");
  if (j.contains("axis_mask")) {
    const json& m = j["axis_mask"];
    require(m.is_array() && m.size() == 6, "admittance.axis_mask must list 6 booleans");
    for (std::size_t i = 0; i < 6; ++i) {
      require(m[i].is_boolean(), "admittance.axis_mask must list 6 booleans");
      p.axis_mask[i] = m[i].get<bool>();
    }
  }
  if (j.contains("integrator")) {
    const std::string s = j["integrator"].get<std::string>();
    if (s == "exact_hold") {
      p.integrator = AdmittanceIntegrator::ExactHold;
    } else if (s == "semi_implicit_euler") {
      p.integrator = AdmittanceIntegrator::SemiImplicitEuler;
    } else {
      fail(ErrorCode::ConfigError, "admittance.integrator must be exact_hold or semi_implicit_euler");
    }
  }
  return p;
}

inline ForceSegment force_segment(const json& j, const std::string& ctx) {
  require(j.is_object(), ctx + " must be an object");
  ForceSegment s;
  s.start = number(j.value("start", json(0.0)), ctx + ".start");
  require(j.contains("duration"), ctx + ".duration is required");
  s.duration = number(j["duration"], ctx + ".duration");
  if (j.contains("force")) s.wrench.force = vec<3>(j["force"], ctx + ".force");
  if (j.contains("torque")) s.wrench.torque = vec<3>(j["torque"], ctx + ".torque");
  s.ramp = number(j.value("ramp", json(kDefaultRamp)), ctx + ".ramp");
  s.validate();
  return s;
}

inline json to_json(const ForceSegment& s) {
  return {{"start", s.start},
          {"duration", s.duration},
          {"force", to_json(s.wrench.force)},
          {"torque", to_json(s.wrench.torque)},
          {"ramp", s.ramp}};
}

inline WorkspaceObstacle obstacle(const json& j, const std::string& ctx) {
  require(j.is_object(), ctx + " must be an object");
  const std::string type = j.value("type", std::string("box"));
  WorkspaceObstacle o;
  if (type == "box") {
    o = WorkspaceObstacle::box(vec<3>(j.at("center"), ctx + ".center"), vec<3>(j.at("half_extents"), ctx + ".half_extents"));
  } else if (type == "sphere") {
    o = WorkspaceObstacle::sphere(vec<3>(j.at("center"), ctx + ".center"), number(j.at("radius"), ctx + ".radius"));
  } else {
    fail(ErrorCode::ConfigError, ctx + ".type must be box or sphere");
  }
  o.validate();
  return o;
}

inline JointVector joint_gain(const json& j, const JointVector& fallback, const std::string& ctx) {
  if (j.is_number()) return JointVector::Constant(j.get<double>());
  return vec<6>(j, ctx);
}

inline void apply_pid(const json& j, PidGains& g) {
  require(j.is_object(), "pid must be an object");
  if (j.contains("kp")) g.kp = joint_gain(j["kp"], g.kp, "pid.kp");
  if (j.contains("ki")) g.ki = joint_gain(j["ki"], g.ki, "pid.ki");
  if (j.contains("kd")) g.kd = joint_gain(j["kd"], g.kd, "pid.kd");
  if (j.contains("integral_limit")) g.integral_limit = joint_gain(j["integral_limit"], g.integral_limit, "pid.integral_limit");
}

inline void apply_plant(const json& j, JointPlantModel& p) {
  require(j.is_object(), "plant must be an object");
  if (j.contains("time_constant")) p.time_constant = joint_gain(j["time_constant"], p.time_constant, "plant.time_constant");
  if (j.contains("velocity_limit")) p.velocity_limit = joint_gain(j["velocity_limit"], p.velocity_limit, "plant.velocity_limit");
  if (j.contains("noise_sigma")) p.noise_sigma = number(j["noise_sigma"], "plant.noise_sigma");
}

inline void apply_planner(const json& j, RrtStarParams& p, ObstacleList& obstacles) {
  require(j.is_object(), "planner must be an object");
  if (j.contains("max_iters")) p.max_iters = j["max_iters"].get<int>();
  if (j.contains("step_size")) p.step_size = number(j["step_size"], "planner.step_size");
  if (j.contains("rewire_radius")) p.rewire_radius = number(j["rewire_radius"], "planner.rewire_radius");
  if (j.contains("goal_bias")) p.goal_bias = number(j["goal_bias"], "planner.goal_bias");
  if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("checkpoints")) p.checkpoints = j["checkpoints"].get<int>();
  if (j.contains("ik_attempts")) p.ik_attempts = j["ik_attempts"].get<int>();
  if (j.contains("sampling_margin")) p.sampling_margin = number(j["sampling_margin"], "planner.sampling_margin");
  if (j.contains("collision_margin")) p.collision.margin = number(j["collision_margin"], "planner.collision_margin");
  if (j.contains("collision_resolution")) p.collision.resolution = number(j["collision_resolution"], "planner.collision_resolution");
  if (j.contains("obstacles")) {
    require(j["obstacles"].is_array(), "planner.obstacles must be an array");
    for (std::size_t i = 0; i < j["obstacles"].size(); ++i) {
      obstacles.push_back(obstacle(j["obstacles"][i], "planner.obstacles[" + std::to_string(i) + "]"));
    }
  }
}

}  // namespace jsonio

// ---------------------------------------------------------------------------
// Scenario files

/// Resolves "include" lists (merged in order, then the including object on
/// top) and string-valued sections that name other files.
inline json resolve_includes(const json& j, const fs::path& base_dir, int depth = 0) {
  if (depth > 16) fail(ErrorCode::ConfigError, "include nesting too deep");
  if (!j.is_object()) return j;
  json merged = json::object();
  if (j.contains("include")) {
    const json& inc = j["include"];
    std::vector<std::string> files;
    if (inc.is_string()) {
      files.push_back(inc.get<std::string>());
    } else {
      jsonio::require(inc.is_array(), "include must be a path or a list of paths");
      for (const auto& f : inc) files.push_back(f.get<std::string>());
    }
    for (const auto& f : files) {
      const fs::path p = base_dir / f;
      merged.merge_patch(resolve_includes(parse_json_file(p), p.parent_path(), depth + 1));
    }
  }
  json local = j;
  local.erase("include");
  for (const char* section : {"model", "admittance", "pid", "plant", "planner", "trajectory", "control"}) {
    if (local.contains(section) && local[section].is_string()) {
      const fs::path p = base_dir / local[section].get<std::string>();
      local[section] = resolve_includes(parse_json_file(p), p.parent_path(), depth + 1);
    }
  }
  merged.merge_patch(local);
  return merged;
}

inline Scenario scenario_from_json(const json& j) {
  using namespace jsonio;
  require(j.is_object(), "scenario must be an object");
  static const char* known[] = {"name", "model", "admittance", "pid", "plant", "planner", "start", "goal",
                                "trajectory", "control", "force_profile", "tick_rate", "duration", "seed",
                                "log_rate", "$comment"};
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    require(ok, "unknown scenario field '" + key + "'");
  }
  Scenario sc;
  sc.name = j.value("name", std::string("scenario"));
  if (j.contains("model")) sc.model = model(j["model"]);
  if (j.contains("admittance")) sc.admittance = admittance(j["admittance"]);
  if (j.contains("pid")) apply_pid(j["pid"], sc.pid);
  if (j.contains("plant")) apply_plant(j["plant"], sc.plant);
  if (j.contains("planner")) apply_planner(j["planner"], sc.planner, sc.obstacles);
  if (j.contains("start")) sc.start = vec<6>(j["start"], "start");
  if (j.contains("goal") && !j["goal"].is_null()) {
    const json& g = j["goal"];
    require(g.is_object(), "goal must be an object or null");
    if (g.contains("object_pose")) {
      sc.goal.kind = GoalSpec::Kind::Object;
      sc.goal.pose = pose(g["object_pose"], "goal.object_pose");
      sc.goal.approach_offset = number(g.value("approach_offset", json(0.1)), "goal.approach_offset");
    } else {
      sc.goal.kind = GoalSpec::Kind::Pose;
      sc.goal.pose = pose(g, "goal");
      sc.goal.relative_to_start = g.value("relative_to_start", false);
    }
  }
  if (j.contains("trajectory")) {
    const json& t = j["trajectory"];
    sc.v_max = number(t.value("v_max", json(sc.v_max)), "trajectory.v_max");
    sc.a_max = number(t.value("a_max", json(sc.a_max)), "trajectory.a_max");
  }
  if (j.contains("control")) {
    const json& c = j["control"];
    sc.outer_gain = number(c.value("outer_gain", json(sc.outer_gain)), "control.outer_gain");
    sc.dls_lambda = number(c.value("dls_lambda", json(sc.dls_lambda)), "control.dls_lambda");
  }
  if (j.contains("force_profile")) {
    require(j["force_profile"].is_array(), "force_profile must be an array of segments");
    for (std::size_t i = 0; i < j["force_profile"].size(); ++i) {
      sc.force_profile.segments.push_back(force_segment(j["force_profile"][i], "force_profile[" + std::to_string(i) + "]"));
    }
  }
  sc.tick_rate = number(j.value("tick_rate", json(sc.tick_rate)), "tick_rate");
  sc.duration = number(j.value("duration", json(sc.duration)), "duration");
  if (j.contains("seed")) sc.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("log_rate")) {
    const double rate = number(j["log_rate"], "log_rate");
    require(rate > 0.0, "log_rate must be positive");
    sc.log_decimation = std::max(1, static_cast<int>(std::lround(sc.tick_rate / rate)));
  }
  sc.hash = hex64(fnv1a(j.dump()));
  sc.validate();
  return sc;
}

inline Scenario load_scenario(const fs::path& path) {
  try {
    return scenario_from_json(resolve_includes(parse_json_file(path), path.parent_path()));
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Run logs

inline constexpr const char* kRunLogFormat = "admsim-runlog";

inline json meta_to_json(const RunLogMeta& m, std::size_t rows) {
  return {{"format", kRunLogFormat},
          {"schema_version", m.schema_version},
          {"version", m.version},
          {"scenario", m.scenario_name},
          {"scenario_hash", m.scenario_hash},
          {"seed", m.seed},
          {"tick_dt", m.tick_dt},
          {"decimation", m.decimation},
          {"nominal_peak_speed", m.nominal_peak_speed},
          {"rows", rows},
          {"columns", log_column_names()},
          {"admittance", jsonio::to_json(m.admittance)}};
}

inline std::string log_row_csv(const LogRow& row) {
  std::string line;
  bool first = true;
  row.for_each_column([&](const double& v) {
    if (!first) line += ',';
    first = false;
    line += format_double(v);
  });
  return line;
}

inline std::string log_header_csv() {
  std::string h = std::string("#") + kRunLogFormat + "," + std::to_string(kRunLogSchemaVersion) + "\n";
  const auto names = log_column_names();
  for (std::size_t i = 0; i < names.size(); ++i) h += (i ? "," : "") + names[i];
  return h + "\n";
}

/// Writes `path` (CSV) and the `.meta.json` sidecar next to it.
inline void export_log(const RunLog& log, const fs::path& path) {
  std::string csv = log_header_csv();
  for (const auto& row : log.rows) csv += log_row_csv(row) + "\n";
  write_text_file(path, csv);
  write_text_file(sidecar_path(path, ".meta.json"), meta_to_json(log.meta, log.rows.size()).dump(2) + "\n");
}

inline RunLog load_log(const fs::path& path) {
  const fs::path meta_path = sidecar_path(path, ".meta.json");
  if (!fs::exists(meta_path)) fail(ErrorCode::ParseError, meta_path.string() + ": metadata sidecar missing");
  json meta;
  try {
    meta = json::parse(read_text_file(meta_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, meta_path.string() + ": " + e.what());
  }
  if (meta.value("format", std::string()) != kRunLogFormat) {
    fail(ErrorCode::ParseError, meta_path.string() + ": not a run-log sidecar");
  }
  if (!meta.contains("schema_version") || meta["schema_version"] != kRunLogSchemaVersion) {
    fail(ErrorCode::VersionError, meta_path.string() + ": schema_version " +
                                      (meta.contains("schema_version") ? meta["schema_version"].dump() : "missing") +
                                      ", expected " + std::to_string(kRunLogSchemaVersion));
  }
  RunLog log;
  std::size_t expected_rows = 0;
  try {
    log.meta.version = meta.at("version").get<std::string>();
    log.meta.scenario_name = meta.at("scenario").get<std::string>();
    log.meta.scenario_hash = meta.at("scenario_hash").get<std::string>();
    log.meta.seed = meta.at("seed").get<std::uint64_t>();
    log.meta.tick_dt = meta.at("tick_dt").get<double>();
    log.meta.decimation = meta.at("decimation").get<int>();
    log.meta.nominal_peak_speed = meta.at("nominal_peak_speed").get<double>();
    log.meta.admittance = jsonio::admittance(meta.at("admittance"));
    expected_rows = meta.at("rows").get<std::size_t>();
    if (meta.at("columns") != json(log_column_names())) {
      fail(ErrorCode::VersionError, meta_path.string() + ": column schema differs from this build");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, meta_path.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::VersionError) throw;
    fail(ErrorCode::ParseError, meta_path.string() + ": " + e.detail());
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::ParseError, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  auto where = [&]() { return path.string() + ":" + std::to_string(line_no); };
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, path.string() + ":1: empty file");
  ++line_no;
  const std::string want = std::string("#") + kRunLogFormat + ",";
  if (line.rfind(want, 0) != 0) fail(ErrorCode::ParseError, where() + ": missing run-log signature");
  if (line != want + std::to_string(kRunLogSchemaVersion)) {
    fail(ErrorCode::VersionError, where() + ": schema '" + line.substr(want.size()) + "', expected " +
                                      std::to_string(kRunLogSchemaVersion));
  }
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, path.string() + ":2: missing column header");
  ++line_no;
  const std::string header = log_header_csv();
  if (line + "\n" != header.substr(header.find('\n') + 1)) {
    fail(ErrorCode::VersionError, where() + ": column header differs from this build");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LogRow row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    std::size_t col = 0;
    bool ok = true;
    row.for_each_column([&](double& v) {
      if (!ok) return;
      if (col > 0) {
        if (p >= end || *p != ',') {
          ok = false;
          return;
        }
        ++p;
      }
      const auto r = std::from_chars(p, end, v);
      if (r.ec != std::errc()) {
        ok = false;
        return;
      }
      p = r.ptr;
      ++col;
    });
    if (!ok || p != end) {
      fail(ErrorCode::ParseError, where() + ": expected " + std::to_string(LogRow::kColumns) + " numeric fields, got " +
                                      std::to_string(col) + (p != end && ok ? " plus trailing data" : ""));
    }
    if (!row.all_finite()) fail(ErrorCode::ParseError, where() + ": non-finite value");
    if (!log.rows.empty() && !(row.t > log.rows.back().t)) fail(ErrorCode::ParseError, where() + ": time not increasing");
    log.rows.push_back(row);
  }
  if (log.rows.size() != expected_rows) {
    fail(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no + 1) + ": truncated, " +
                                    std::to_string(log.rows.size()) + " of " + std::to_string(expected_rows) + " rows");
  }
  return log;
}

// ---------------------------------------------------------------------------
// Metrics report

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json metrics_to_json(const MetricsReport& m) {
  json j = {{"format", "admsim-metrics"},
            {"schema_version", 1},
            {"force_applied", m.force_applied},
            {"force_tracking_rmse_N", m.force_tracking_rmse},
            {"max_deviation_cm", m.max_deviation},
            {"recovery_time_s", optional_json(m.recovery_time)},
            {"settling_time_s", optional_json(m.settling_time)},
            {"damping_ratio", optional_json(m.damping_ratio)},
            {"oscillatory", m.oscillatory},
            {"energy_injected_J", m.energy_injected},
            {"energy_dissipated_J", m.energy_dissipated},
            {"velocity_overshoot_pct", m.velocity_overshoot},
            {"peak_jerk_m_s3", m.peak_jerk},
            {"effort_reduction_pct", optional_json(m.effort_reduction)},
            {"flags", m.flags}};
  if (m.effort_baseline) {
    const auto& e = *m.effort_baseline;
    j["effort_baseline"] = {{"protocol", "min constant y force holding 5 cm for 1 s; stiff baseline K = 20 K_d"},
                            {"force_admittance_N", e.force_admittance},
                            {"force_stiff_N", e.force_stiff},
                            {"stiffness_admittance", e.stiffness_admittance},
                            {"stiffness_stiff", e.stiffness_stiff}};
  } else {
    j["effort_baseline"] = nullptr;
  }
  return j;
}

inline std::string metrics_table(const MetricsReport& m) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("n/a"); };
  std::ostringstream s;
  s << "metric\tvalue\tunit\n";
  s << "force_tracking_rmse\t" << format_double(m.force_tracking_rmse) << "\tN\n";
  s << "max_deviation\t" << format_double(m.max_deviation) << "\tcm\n";
  s << "recovery_time\t" << opt(m.recovery_time) << "\ts\n";
  s << "settling_time\t" << opt(m.settling_time) << "\ts\n";
  s << "damping_ratio\t" << (m.oscillatory ? opt(m.damping_ratio) : std::string(">=1 (non-oscillatory)")) << "\t-\n";
  s << "energy_dissipated\t" << format_double(m.energy_dissipated) << "\tJ\n";
  s << "velocity_overshoot\t" << format_double(m.velocity_overshoot) << "\t%\n";
  s << "peak_jerk\t" << format_double(m.peak_jerk) << "\tm/s^3\n";
  s << "effort_reduction\t" << opt(m.effort_reduction) << "\t%\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// Vision inputs

inline json features_to_json(const FeatureSet& f) {
  json kp = json::array(), desc = json::array();
  for (const auto& k : f.keypoints) kp.push_back({k.u, k.v});
  for (const auto& d : f.descriptors) desc.push_back(std::vector<double>(d.data(), d.data() + d.size()));
  return {{"binary", f.binary}, {"keypoints", kp}, {"descriptors", desc}};
}

inline FeatureSet features_from_json(const json& j) {
  using jsonio::require;
  require(j.is_object() && j.contains("keypoints") && j.contains("descriptors"), "features need keypoints and descriptors");
  FeatureSet f;
  f.binary = j.value("binary", false);
  for (const auto& k : j["keypoints"]) {
    const Eigen::Vector2d v = jsonio::vec<2>(k, "keypoint");
    f.keypoints.push_back({v[0], v[1]});
  }
  for (const auto& d : j["descriptors"]) {
    require(d.is_array(), "descriptor must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) v[static_cast<Eigen::Index>(i)] = jsonio::number(d[i], "descriptor");
    f.descriptors.push_back(v);
  }
  for (const auto& k : f.keypoints) require(std::isfinite(k.u) && std::isfinite(k.v), "keypoints must be finite");
  f.validate();
  return f;
}

inline json intrinsics_to_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline CameraIntrinsics intrinsics_from_json(const json& j) {
  CameraIntrinsics k;
  k.fx = jsonio::number(j.at("fx"), "fx");
  k.fy = jsonio::number(j.at("fy"), "fy");
  k.cx = jsonio::number(j.at("cx"), "cx");
  k.cy = jsonio::number(j.at("cy"), "cy");
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  k.validate();
  return k;
}

inline json object_pose_to_json(const ObjectPose& p) {
  json rot = json::array();
  for (int i = 0; i < 3; ++i) rot.push_back(jsonio::to_json(Vec3(p.pose.orientation.row(i).transpose())));
  return {{"position_m", jsonio::to_json(p.pose.position)},
          {"rotation", rot},
          {"euler_rad", {{"phi", p.euler.phi}, {"theta", p.euler.theta}, {"psi", p.euler.psi}}},
          {"euler_deg", {{"phi", rad_to_deg(p.euler.phi)}, {"theta", rad_to_deg(p.euler.theta)}, {"psi", rad_to_deg(p.euler.psi)}}},
          {"gimbal_lock", p.euler.gimbal_lock},
          {"inlier_count", p.inlier_count},
          {"reprojection_rmse_px", p.reprojection_rmse}};
}

/// Little-endian grayscale PFM ("Pf"); rows are stored bottom to top.
inline void write_pfm(const DepthMap& d, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::ConfigError, "cannot write " + path.string());
  out << "Pf\n" << d.width << " " << d.height << "\n-1.0\n";
  for (int v = d.height - 1; v >= 0; --v) {
    for (int u = 0; u < d.width; ++u) {
      const auto f = static_cast<float>(d.at(u, v));
      unsigned char b[4];
      std::memcpy(b, &f, 4);
      if constexpr (std::endian::native == std::endian::big) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
      out.write(reinterpret_cast<const char*>(b), 4);
    }
  }
}

inline DepthMap read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::ConfigError, "cannot open depth map " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (magic != "Pf") fail(ErrorCode::ParseError, path.string() + ": only grayscale PFM (Pf) depth is supported");
  if (w <= 0 || h <= 0 || scale == 0.0) fail(ErrorCode::ParseError, path.string() + ": bad PFM header");
  in.get();
  const bool little = scale < 0.0;
  DepthMap d(w, h);
  for (int v = h - 1; v >= 0; --v) {
    for (int u = 0; u < w; ++u) {
      unsigned char b[4];
      if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorCode::ParseError, path.string() + ": truncated PFM data");
      if (little != (std::endian::native == std::endian::little)) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
      float f;
      std::memcpy(&f, b, 4);
      const double z = static_cast<double>(f) * std::abs(scale);
      d.at(u, v) = std::isfinite(z) && z > 0.0 ? z : 0.0;
    }
  }
  return d;
}

/// Depth from a PFM (metres) or a 16-bit PGM (millimetres).
inline DepthMap read_depth(const fs::path& path) {
  if (path.extension() == ".pgm") {
    const GrayImage img = read_pgm(path.string());
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    DepthMap d(img.width, img.height);
    for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = img.data[i] * maxval * 1e-3;
    return d;
  }
  return read_pfm(path);
}

/// Template file: {"width_px", "height_px", "scale", "features"} or
/// {"image": "file.pgm", "scale"} (features detected on the image).
inline Template load_template(const fs::path& path, const HarrisParams& harris = {}) {
  const json j = parse_json_file(path);
  Template t;
  try {
    t.scale = j.value("scale", 0.0);
    if (j.contains("image")) {
      const GrayImage img = read_pgm((path.parent_path() / j["image"].get<std::string>()).string());
      t.features = detect_harris(img, harris);
      t.width_px = img.width;
      t.height_px = img.height;
    } else {
      t.width_px = j.at("width_px").get<double>();
      t.height_px = j.at("height_px").get<double>();
      t.features = features_from_json(j.at("features"));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return t;
}

/// Scene file: {"features"} or {"image": "file.pgm"}.
inline FeatureSet load_scene_features(const fs::path& path, const HarrisParams& harris = {}) {
  const json j = parse_json_file(path);
  try {
    if (j.contains("image")) return detect_harris(read_pgm((path.parent_path() / j["image"].get<std::string>()).string()), harris);
    return features_from_json(j.at("features"));
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

struct SceneFiles {
  fs::path template_file, scene_file, depth_file, intrinsics_file, truth_file;
};

inline SceneFiles write_scene(const SyntheticScene& s, const fs::path& dir) {
  fs::create_directories(dir);
  SceneFiles f{dir / "template.json", dir / "scene.json", dir / "depth.pfm", dir / "intrinsics.json", dir / "ground_truth.json"};
  write_text_file(f.template_file, json{{"width_px", s.templ.width_px},
                                        {"height_px", s.templ.height_px},
                                        {"scale", s.templ.scale},
                                        {"features", features_to_json(s.templ.features)}}
                                       .dump() + "\n");
  write_text_file(f.scene_file, json{{"features", features_to_json(s.scene)}}.dump() + "\n");
  write_pfm(s.depth, f.depth_file);
  write_text_file(f.intrinsics_file, intrinsics_to_json(s.intrinsics).dump(2) + "\n");
  json truth = object_pose_to_json(s.ground_truth);
  truth["outlier_indices"] = s.outlier_indices;
  truth["pose"] = jsonio::to_json(s.ground_truth.pose);
  write_text_file(f.truth_file, truth.dump(2) + "\n");
  return f;
}

}  // namespace admsim
