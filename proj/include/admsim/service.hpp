#pragma once

// Interactive simulation service without any network dependency: the
// command/stream protocol (SimulationSession) and the paced simulation
// thread with bounded queues (ServiceRunner).

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "admsim/io.hpp"

namespace admsim {

inline constexpr int kProtocolVersion = 1;
inline constexpr double kMaxForceDuration = 30.0;  // s
inline constexpr double kPathSampleInterval = 0.02;  // s between nominal-path points in session events

/// One outgoing stream message before per-connection sequencing.
struct Outgoing {
  json message;            // {"v", "kind", "t", "payload"}; "seq" is added per connection
  int target = -1;         // client id, or -1 for all clients
  bool droppable = false;  // display frames may be dropped under back-pressure
};

inline json stream_message(const std::string& kind, double t, json payload) {
  return {{"v", kProtocolVersion}, {"kind", kind}, {"t", t}, {"payload", std::move(payload)}};
}

inline json row_to_json(const LogRow& row) {
  static const std::vector<std::string> names = log_column_names();
  json j = json::object();
  std::size_t i = 0;
  row.for_each_column([&](const double& v) { j[names[i++]] = v; });
  return j;
}

/// Inverse of row_to_json; missing columns are a ParseError.
inline LogRow row_from_json(const json& j) {
  static const std::vector<std::string> names = log_column_names();
  LogRow row;
  std::size_t i = 0;
  row.for_each_column([&](double& v) {
    const auto it = j.find(names[i]);
    if (it == j.end() || !it->is_number()) fail(ErrorCode::ParseError, "state row lacks column " + names[i]);
    v = it->get<double>();
    ++i;
  });
  return row;
}

struct SessionOptions {
  double display_rate = 60.0;  // Hz
  fs::path base_dir = ".";     // load_scenario paths are relative to this
};

/// Deterministic core of `serve`. Commands take effect at the next tick;
/// the caller decides when ticks happen.
class SimulationSession {
 public:
  explicit SimulationSession(Scenario sc, SessionOptions opt = {}) : opt_(std::move(opt)), sim_(std::move(sc)) {
    if (!(opt_.display_rate > 0.0)) fail(ErrorCode::ConfigError, "display rate must be positive");
  }

  [[nodiscard]] const Simulation& simulation() const { return sim_; }
  [[nodiscard]] bool paused() const { return paused_; }
  [[nodiscard]] bool finished() const { return sim_.finished(); }
  [[nodiscard]] bool running() const { return !paused_ && !sim_.finished(); }
  [[nodiscard]] const std::vector<LogRow>& rows() const { return rows_; }
  [[nodiscard]] const SessionOptions& options() const { return opt_; }

  void set_paused(bool p) { paused_ = p; }

  /// Everything a fresh client needs to draw the scene before the next
  /// state frame: scenario identity, rates, parameters and the nominal path.
  [[nodiscard]] json session_info() const {
    const Scenario& sc = sim_.scenario();
    const Trajectory& traj = sim_.trajectory();
    json path = json::array();
    const std::size_t stride =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(kPathSampleInterval * traj.tick_rate)));
    for (std::size_t i = 0; i < traj.size(); i += stride) path.push_back(jsonio::to_json(traj.poses[i].position));
    if (traj.size() > 0 && (traj.size() - 1) % stride != 0) path.push_back(jsonio::to_json(traj.poses.back().position));
    return {{"event", "session"},
            {"tick", sim_.tick()},
            {"scenario", sc.name},
            {"scenario_hash", sc.hash},
            {"tick_dt", sc.dt()},
            {"duration", sc.duration},
            {"display_rate", opt_.display_rate},
            {"paused", paused_},
            {"finished", sim_.finished()},
            {"admittance", jsonio::to_json(sim_.admittance_params())},
            {"columns", log_column_names()},
            {"nominal_path", path}};
  }

  [[nodiscard]] RunLog log() const {
    RunLog log;
    log.meta = sim_.meta();
    log.rows = rows_;
    return log;
  }

  /// Validates and applies one command from `client`. Replies (ack or error)
  /// go to the client; state changes are also broadcast as events.
  std::vector<Outgoing> handle(const json& cmd, int client = 0) {
    std::vector<Outgoing> out;
    json seq = nullptr;
    std::string kind;
    try {
      if (!cmd.is_object()) fail(ErrorCode::ParseError, "command must be a JSON object");
      if (cmd.contains("seq")) seq = cmd["seq"];
      if (cmd.value("v", kProtocolVersion) != kProtocolVersion) {
        fail(ErrorCode::VersionError, "protocol version " + cmd["v"].dump() + ", expected " + std::to_string(kProtocolVersion));
      }
      if (!cmd.contains("kind") || !cmd["kind"].is_string()) fail(ErrorCode::ParseError, "command needs a string 'kind'");
      kind = cmd["kind"].get<std::string>();
      const json payload = cmd.value("payload", json::object());
      if (!payload.is_object()) fail(ErrorCode::ParseError, "payload must be an object");
      json ack = {{"command", kind}, {"command_seq", seq}, {"applied_tick", sim_.tick()}};
      if (kind == "apply_force") {
        const ForceSegment seg = force_from_payload(payload);
        sim_.apply_force(seg);
        ack["start"] = seg.start;
      } else if (kind == "clear_force") {
        sim_.clear_force();
      } else if (kind == "set_admittance_params") {
        const AdmittanceParams p = jsonio::admittance(payload, sim_.admittance_params());
        validate_params(p);
        sim_.set_admittance_params(p);
        ack["params"] = jsonio::to_json(p);
      } else if (kind == "pause") {
        paused_ = true;
      } else if (kind == "resume") {
        paused_ = false;
      } else if (kind == "reset") {
        sim_.reset();
        rows_.clear();
        finish_reported_ = false;
      } else if (kind == "load_scenario") {
        Scenario sc = scenario_from_payload(payload);
        sim_ = Simulation(std::move(sc));
        rows_.clear();
        finish_reported_ = false;
        ack["scenario"] = sim_.scenario().name;
      } else {
        fail(ErrorCode::ParseError, "unknown command kind '" + kind + "'");
      }
      out.push_back({stream_message("ack", sim_.time(), ack), client, false});
      if (kind == "pause" || kind == "resume" || kind == "reset" || kind == "load_scenario") {
        const std::string ev = kind == "pause" ? "paused" : kind == "resume" ? "resumed" : kind == "reset" ? "reset" : "scenario_loaded";
        out.push_back({stream_message("event", sim_.time(), {{"event", ev}, {"tick", sim_.tick()}}), -1, false});
      }
      if (kind == "reset" || kind == "load_scenario" || kind == "set_admittance_params") {
        out.push_back({stream_message("event", sim_.time(), session_info()), -1, false});
      }
    } catch (const Error& e) {
      out.push_back({error_message(seq, e.code(), e.detail()), client, false});
    } catch (const json::exception& e) {
      out.push_back({error_message(seq, ErrorCode::ParseError, e.what()), client, false});
    }
    return out;
  }

  /// Advances one tick when running. Emits display frames at the display
  /// rate and, once the scenario ends, a finished event plus metrics.
  std::vector<Outgoing> tick() {
    std::vector<Outgoing> out;
    if (!running()) return out;
    const std::size_t n = sim_.tick();
    rows_.push_back(sim_.step());
    const double rate = opt_.display_rate * sim_.scenario().dt();
    if (n == 0 || std::floor(static_cast<double>(n) * rate) > std::floor(static_cast<double>(n - 1) * rate)) {
      out.push_back({state_message(n, rows_.back()), -1, true});
    }
    if (sim_.finished() && !finish_reported_) {
      finish_reported_ = true;
      out.push_back({stream_message("event", sim_.time(), {{"event", "finished"}, {"tick", sim_.tick()}}), -1, false});
      const RunLog exported = decimate(log(), sim_.scenario().log_decimation);
      out.push_back({stream_message("metrics", sim_.time(), metrics_to_json(compute_metrics(exported))), -1, false});
    }
    return out;
  }

 private:
  static json error_message(const json& seq, ErrorCode code, const std::string& detail) {
    return stream_message("error", 0.0,
                          {{"command_seq", seq}, {"code", std::string(to_string(code))}, {"message", std::string(to_string(code)) + ": " + detail}});
  }

  json state_message(std::size_t tick, const LogRow& row) const {
    json links = json::array();
    for (const Pose& f : link_frames(sim_.scenario().model, row.theta)) links.push_back(jsonio::to_json(f.position));
    return stream_message("state", row.t, {{"tick", tick}, {"row", row_to_json(row)}, {"links", links}});
  }

  ForceSegment force_from_payload(const json& p) const {
    ForceSegment seg;
    seg.start = sim_.time();
    if (!p.contains("duration")) fail(ErrorCode::InvalidArgument, "apply_force needs a duration");
    seg.duration = jsonio::number(p["duration"], "duration");
    if (!(seg.duration > 0.0 && seg.duration <= kMaxForceDuration)) {
      fail(ErrorCode::InvalidArgument, "apply_force duration must be in (0, 30] s");
    }
    if (p.contains("force")) seg.wrench.force = jsonio::vec<3>(p["force"], "force");
    if (p.contains("torque")) seg.wrench.torque = jsonio::vec<3>(p["torque"], "torque");
    if (!seg.wrench.as_vector().allFinite()) fail(ErrorCode::InvalidArgument, "apply_force wrench must be finite");
    seg.ramp = p.contains("ramp") ? jsonio::number(p["ramp"], "ramp") : std::min(kDefaultRamp, seg.duration / 2.0);
    try {
      seg.validate();
    } catch (const Error& e) {
      fail(ErrorCode::InvalidArgument, e.detail());
    }
    return seg;
  }

  Scenario scenario_from_payload(const json& p) const {
    if (p.contains("path")) return load_scenario(opt_.base_dir / p["path"].get<std::string>());
    if (p.contains("scenario")) return scenario_from_json(resolve_includes(p["scenario"], opt_.base_dir));
    fail(ErrorCode::InvalidArgument, "load_scenario needs 'path' or 'scenario'");
  }

  SessionOptions opt_;
  Simulation sim_;
  std::vector<LogRow> rows_;
  bool paused_ = false;
  bool finish_reported_ = false;
};

// ---------------------------------------------------------------------------
// Paced simulation thread

struct RunnerOptions {
  double pace = 1.0;                  // simulated seconds per wall second; 0 = as fast as possible
  std::size_t command_capacity = 256;
};

/// Owns the session on one simulation thread. Transports submit commands
/// into a bounded queue and receive messages through subscriber sinks; sinks
/// must not block (they hand off to their own queues).
class ServiceRunner {
 public:
  using Sink = std::function<void(const Outgoing&)>;

  ServiceRunner(SimulationSession session, RunnerOptions opt = {}) : session_(std::move(session)), opt_(opt) {
    if (!(opt_.pace >= 0.0)) fail(ErrorCode::ConfigError, "pace must be >= 0");
  }
  ~ServiceRunner() { stop(); }

  ServiceRunner(const ServiceRunner&) = delete;
  ServiceRunner& operator=(const ServiceRunner&) = delete;

  /// The new sink first receives a session event, then the live stream.
  int subscribe(Sink sink) {
    std::lock_guard session_lock(session_mutex_);
    const Outgoing hello{stream_message("event", session_.simulation().time(), session_.session_info()), -1, false};
    std::lock_guard lock(sinks_mutex_);
    const int id = next_id_++;
    sink(hello);
    sinks_[id] = std::move(sink);
    return id;
  }

  void unsubscribe(int id) {
    std::lock_guard lock(sinks_mutex_);
    sinks_.erase(id);
  }

  /// False when the command queue is full.
  bool submit(int client, json cmd) {
    {
      std::lock_guard lock(cmd_mutex_);
      if (commands_.size() >= opt_.command_capacity) return false;
      commands_.emplace_back(client, std::move(cmd));
    }
    cmd_cv_.notify_one();
    return true;
  }

  void start() {
    if (thread_.joinable()) return;
    stop_ = false;
    thread_ = std::thread([this] { loop(); });
  }

  void stop() {
    stop_ = true;
    cmd_cv_.notify_one();
    if (thread_.joinable()) thread_.join();
  }

  /// Runs `f` on the session under the runner's lock (tests, shutdown).
  template <class F>
  auto inspect(F&& f) {
    std::lock_guard lock(session_mutex_);
    return f(static_cast<const SimulationSession&>(session_));
  }

  [[nodiscard]] std::uint64_t reanchor_count() const { return reanchors_; }

 private:
  using Clock = std::chrono::steady_clock;

  void route(const std::vector<Outgoing>& msgs) {
    if (msgs.empty()) return;
    std::lock_guard lock(sinks_mutex_);
    for (const auto& m : msgs) {
      if (m.target >= 0) {
        const auto it = sinks_.find(m.target);
        if (it != sinks_.end()) it->second(m);
      } else {
        for (auto& [id, sink] : sinks_) sink(m);
      }
    }
  }

  void drain_commands() {
    std::deque<std::pair<int, json>> batch;
    {
      std::lock_guard lock(cmd_mutex_);
      batch.swap(commands_);
    }
    for (auto& [client, cmd] : batch) {
      std::vector<Outgoing> out;
      {
        std::lock_guard lock(session_mutex_);
        out = session_.handle(cmd, client);
      }
      route(out);
    }
  }

  void loop() {
    Clock::time_point anchor = Clock::now();
    std::uint64_t ticks_since_anchor = 0;
    bool was_running = false;
    while (!stop_) {
      drain_commands();
      bool running;
      double dt;
      {
        std::lock_guard lock(session_mutex_);
        running = session_.running();
        dt = session_.simulation().scenario().dt();
      }
      if (!running) {
        was_running = false;
        std::unique_lock lock(cmd_mutex_);
        cmd_cv_.wait_for(lock, std::chrono::milliseconds(5), [this] { return stop_ || !commands_.empty(); });
        continue;
      }
      if (!was_running) {
        anchor = Clock::now();
        ticks_since_anchor = 0;
        was_running = true;
      }
      std::vector<Outgoing> out;
      try {
        std::lock_guard lock(session_mutex_);
        out = session_.tick();
      } catch (const Error& e) {
        std::lock_guard lock(session_mutex_);
        session_.set_paused(true);
        out.push_back({stream_message("error", session_.simulation().time(),
                                      {{"command_seq", nullptr},
                                       {"code", std::string(to_string(e.code()))},
                                       {"message", std::string(to_string(e.code())) + ": " + e.detail()}}),
                       -1, false});
      }
      route(out);
      ++ticks_since_anchor;
      if (opt_.pace > 0.0) {
        // Absolute deadlines so sleep overshoot does not accumulate.
        const auto deadline = anchor + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(static_cast<double>(ticks_since_anchor) * dt / opt_.pace));
        const auto now = Clock::now();
        if (now < deadline) {
          std::unique_lock lock(cmd_mutex_);
          cmd_cv_.wait_until(lock, deadline, [this] { return stop_.load(); });
        } else if (now - deadline > std::chrono::milliseconds(250)) {
          anchor = now;
          ticks_since_anchor = 0;
          ++reanchors_;
        }
      }
    }
  }

  SimulationSession session_;
  RunnerOptions opt_;
  std::mutex session_mutex_;
  std::mutex sinks_mutex_;
  std::map<int, Sink> sinks_;
  int next_id_ = 1;
  std::mutex cmd_mutex_;
  std::condition_variable cmd_cv_;
  std::deque<std::pair<int, json>> commands_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> reanchors_{0};
  std::thread thread_;
};

}  // namespace admsim
