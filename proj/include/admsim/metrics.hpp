#pragma once

// Controller metrics computed from a run log alone (plus the admittance
// parameters recorded in its metadata).

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "admsim/scenario.hpp"

namespace admsim {

struct EffortBaseline {
  double force_admittance = 0.0;  // N
  double force_stiff = 0.0;       // N
  double stiffness_admittance = 0.0;
  double stiffness_stiff = 0.0;
  double hold_deviation = 0.05;   // m
  double hold_time = 1.0;         // s
};

struct MetricsReport {
  double force_tracking_rmse = 0.0;        // N
  double max_deviation = 0.0;              // cm
  std::optional<double> recovery_time;     // s
  std::optional<double> settling_time;     // s
  std::optional<double> damping_ratio;
  bool oscillatory = false;
  double energy_dissipated = 0.0;          // J
  double energy_injected = 0.0;            // J
  double velocity_overshoot = 0.0;         // %
  double peak_jerk = 0.0;                  // m/s^3
  std::optional<double> effort_reduction;  // %
  std::optional<EffortBaseline> effort_baseline;
  bool force_applied = false;
  std::vector<std::string> flags;
};

inline constexpr double kRecoveryBand = 1e-3;  // m
inline constexpr double kRecoveryHold = 0.5;   // s
inline constexpr double kSettlingFraction = 0.02;
inline constexpr double kJerkCutoff = 20.0;    // Hz

namespace detail {

inline void require_rows(const RunLog& log) {
  if (log.rows.empty()) fail(ErrorCode::InvalidArgument, "log has no rows");
}

inline Vector6 log_effective_force(const RunLog& log, std::size_t i) {
  return effective_force(log.rows[i].f_ext, log.meta.admittance.axis_mask, log.meta.admittance.force_deadband);
}

/// Index one past the last row with nonzero effective force, or nullopt
/// when no force was ever applied.
inline std::optional<std::size_t> release_index(const RunLog& log) {
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    if (!log_effective_force(log, i).isZero(0.0)) last = i;
  }
  if (!last) return std::nullopt;
  return *last + 1;
}

inline std::optional<std::size_t> onset_index(const RunLog& log) {
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    if (!log_effective_force(log, i).isZero(0.0)) return i;
  }
  return std::nullopt;
}

inline double release_time(const RunLog& log, std::size_t release) {
  return log.rows[release - 1].t + log.row_dt();
}

/// First time from row `from` on at which dev drops below `band` and then
/// stays below for `hold` seconds, interpolated linearly between rows.
inline std::optional<double> band_entry_time(const RunLog& log, std::size_t from, double band, double hold) {
  const auto& r = log.rows;
  std::size_t k = from;
  while (k < r.size()) {
    if (r[k].deviation() >= band) {
      ++k;
      continue;
    }
    std::size_t j = k;
    while (j < r.size() && r[j].deviation() < band && r[j].t - r[k].t < hold) ++j;
    if (j == r.size()) return std::nullopt;
    if (r[j].deviation() >= band) {
      k = j;
      continue;
    }
    if (k == 0 || r[k - 1].deviation() < band) return r[k].t;
    const double d0 = r[k - 1].deviation(), d1 = r[k].deviation();
    return r[k - 1].t + (d0 - band) / (d0 - d1) * (r[k].t - r[k - 1].t);
  }
  return std::nullopt;
}

}  // namespace detail

/// RMS of F_ext - (M dx'' + B dx' + K dx) over enabled axes, dx'' by central
/// difference of the logged dx'.
inline double metric_force_tracking_rmse(const RunLog& log) {
  detail::require_rows(log);
  const auto& p = log.meta.admittance;
  const auto& r = log.rows;
  if (r.size() < 3) return 0.0;
  const double h = log.row_dt();
  double ss = 0.0;
  for (std::size_t i = 1; i + 1 < r.size(); ++i) {
    const Vector6 f = detail::log_effective_force(log, i);
    for (int a = 0; a < 6; ++a) {
      if (!p.axis_mask[a]) continue;
      const double acc = (r[i + 1].dx_dot[a] - r[i - 1].dx_dot[a]) / (2.0 * h);
      const double model = p.mass[a] * acc + p.damping[a] * r[i].dx_dot[a] + p.stiffness[a] * r[i].dx[a];
      const double e = f[a] - model;
      ss += e * e;
    }
  }
  return std::sqrt(ss / static_cast<double>(r.size() - 2));
}

/// max |x - x_d| in cm.
inline double metric_max_deviation(const RunLog& log) {
  detail::require_rows(log);
  double m = 0.0;
  for (const auto& row : log.rows) m = std::max(m, row.deviation());
  return 100.0 * m;
}

/// Seconds from force release until |x - x_d| < band and stays there for
/// 0.5 s. 0 without force; nullopt if it never recovers within the log.
inline std::optional<double> metric_recovery_time(const RunLog& log, double band = kRecoveryBand) {
  detail::require_rows(log);
  const auto rel = detail::release_index(log);
  if (!rel) return 0.0;
  if (*rel >= log.rows.size()) return std::nullopt;
  const auto t = detail::band_entry_time(log, *rel, band, kRecoveryHold);
  if (!t) return std::nullopt;
  return std::max(0.0, *t - detail::release_time(log, *rel));
}

inline double peak_deviation_after(const RunLog& log, std::size_t from) {
  double peak = 0.0;
  for (std::size_t i = from; i < log.rows.size(); ++i) peak = std::max(peak, log.rows[i].deviation());
  return peak;
}

/// Seconds after release until |x - x_d| stays within 2% of its value at
/// release (or later peak). 0 without force; nullopt if still outside at the end.
inline std::optional<double> metric_settling_time(const RunLog& log) {
  detail::require_rows(log);
  const auto onset = detail::onset_index(log);
  const auto rel = detail::release_index(log);
  if (!onset || !rel) return 0.0;
  if (*rel >= log.rows.size()) return std::nullopt;
  const double band = kSettlingFraction * peak_deviation_after(log, *rel - 1);
  const double t_rel = detail::release_time(log, *rel);
  const auto& r = log.rows;
  std::size_t last_out = r.size();
  for (std::size_t i = *rel; i < r.size(); ++i) {
    if (r[i].deviation() >= band) last_out = i;
  }
  if (last_out == r.size()) return 0.0;
  if (last_out + 1 >= r.size()) return std::nullopt;
  const double d0 = r[last_out].deviation(), d1 = r[last_out + 1].deviation();
  const double t = r[last_out].t + (d0 - band) / (d0 - d1) * (r[last_out + 1].t - r[last_out].t);
  return std::max(0.0, t - t_rel);
}

struct DampingEstimate {
  std::optional<double> zeta;
  bool oscillatory = false;
  std::vector<double> peaks;
};

/// Log decrement over successive peaks of |x - x_d| after release. Peaks of
/// the magnitude are half a period apart: zeta = d / sqrt(pi^2 + d^2) with d
/// the least-squares slope of -ln(peak) per peak.
inline DampingEstimate metric_damping_ratio(const RunLog& log) {
  detail::require_rows(log);
  DampingEstimate out;
  const auto onset = detail::onset_index(log);
  const auto rel = detail::release_index(log);
  if (!onset || !rel || *rel + 2 >= log.rows.size()) return out;
  const double floor = kSettlingFraction * peak_deviation_after(log, *rel - 1);
  const auto& r = log.rows;
  for (std::size_t i = *rel + 1; i + 1 < r.size(); ++i) {
    const double d = r[i].deviation();
    if (d > r[i - 1].deviation() && d >= r[i + 1].deviation() && d > floor) out.peaks.push_back(d);
  }
  if (out.peaks.size() < 2) return out;
  out.oscillatory = true;
  const auto n = static_cast<double>(out.peaks.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < out.peaks.size(); ++k) {
    const double x = static_cast<double>(k), y = std::log(out.peaks[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double delta = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  out.zeta = delta / std::sqrt(kPi * kPi + delta * delta);
  return out;
}

struct EnergyBalance {
  double injected = 0.0;     // sum of F . d(dx)
  double dissipated = 0.0;   // injected - (E_end - E_0)
  double min_cumulative = 0.0;
};

/// Energy balance of the virtual dynamics. Work is summed as F_n . (dx_n+1 -
/// dx_n), the exact work of a force held over the step.
inline EnergyBalance metric_energy(const RunLog& log) {
  detail::require_rows(log);
  const auto& p = log.meta.admittance;
  auto energy = [&](const LogRow& row) {
    AdmittanceState s;
    s.delta_x = row.dx;
    s.delta_x_dot = row.dx_dot;
    return virtual_energy(s, p);
  };
  EnergyBalance b;
  const double e0 = energy(log.rows.front());
  for (std::size_t i = 0; i + 1 < log.rows.size(); ++i) {
    Vector6 f = detail::log_effective_force(log, i);
    for (int a = 0; a < 6; ++a) {
      if (!p.axis_mask[a]) f[a] = 0.0;
    }
    b.injected += f.dot(log.rows[i + 1].dx - log.rows[i].dx);
    const double cumulative = b.injected - (energy(log.rows[i + 1]) - e0);
    b.min_cumulative = std::min(b.min_cumulative, cumulative);
  }
  b.dissipated = b.injected - (energy(log.rows.back()) - e0);
  return b;
}

/// Peak Cartesian speed over unforced, admittance-at-rest rows relative to
/// the planned profile peak, in percent (0 if the robot never exceeds it).
inline double metric_overshoot(const RunLog& log) {
  detail::require_rows(log);
  const double ref = log.meta.nominal_peak_speed;
  if (!(ref > 0.0)) return 0.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    const auto& row = log.rows[i];
    if (!detail::log_effective_force(log, i).isZero(0.0)) continue;
    if (row.dx_dot.head<3>().norm() > 1e-4) continue;
    peak = std::max(peak, row.x_dot.head<3>().norm());
  }
  return std::max(0.0, (peak - ref) / ref * 100.0);
}

/// Peak |x'''| of the tool position after a first-order 20 Hz low-pass,
/// third derivative by central difference.
inline double metric_peak_jerk(const RunLog& log, double cutoff_hz = kJerkCutoff) {
  detail::require_rows(log);
  const auto& r = log.rows;
  if (r.size() < 5) return 0.0;
  const double h = log.row_dt();
  const double alpha = 1.0 - std::exp(-2.0 * kPi * cutoff_hz * h);
  std::vector<Vec3> y(r.size());
  y[0] = r[0].x.head<3>();
  for (std::size_t i = 1; i < r.size(); ++i) y[i] = y[i - 1] + alpha * (r[i].x.head<3>() - y[i - 1]);
  double peak = 0.0;
  for (std::size_t i = 2; i + 2 < r.size(); ++i) {
    const Vec3 j = (y[i + 2] - 2.0 * y[i + 1] + 2.0 * y[i - 1] - y[i - 2]) / (2.0 * h * h * h);
    peak = std::max(peak, j.norm());
  }
  return peak;
}

namespace detail {

/// Does a constant force f hold the y offset at >= target for the last
/// hold_time seconds of a settle + hold horizon?
inline bool holds_deviation(const AdmittanceParams& base, double f, double target, double hold_time, double dt,
                            double settle) {
  AdmittanceParams p = base;
  p.offset_limit.setConstant(std::numeric_limits<double>::infinity());
  const AdmittanceStepper stepper(p, dt);
  AdmittanceState s;
  Wrench w;
  w.force.y() = f;
  const auto settle_ticks = static_cast<std::size_t>(std::ceil(settle / dt));
  const auto hold_ticks = static_cast<std::size_t>(std::ceil(hold_time / dt));
  for (std::size_t i = 0; i < settle_ticks + hold_ticks; ++i) {
    s = stepper.step(s, w);
    if (i >= settle_ticks && s.delta_x[1] < target) return false;
  }
  return true;
}

inline double min_holding_force(const AdmittanceParams& p, double target, double hold_time, double dt) {
  const double m = p.mass[1], b = p.damping[1], k = p.stiffness[1];
  // Slowest pole of m s^2 + b s + k sets the settle horizon.
  const double disc = b * b - 4.0 * m * k;
  const double slow = disc >= 0.0 ? (b - std::sqrt(disc)) / (2.0 * m) : b / (2.0 * m);
  const double settle = slow > 0.0 ? std::clamp(25.0 / slow, 10.0, 120.0) : 120.0;
  double lo = 0.0, hi = std::max(1.0, 2.0 * k * target + p.force_deadband);
  for (int i = 0; i < 60 && !holds_deviation(p, hi, target, hold_time, dt, settle); ++i) hi *= 2.0;
  for (int i = 0; i < 60 && hi - lo > 1e-9 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (holds_deviation(p, mid, target, hold_time, dt, settle) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace detail

/// Paired bisection on the y axis: minimum constant force holding a 5 cm
/// offset for 1 s with the configured admittance vs. a stiff baseline with
/// K = 20 K_d and the same M, B.
inline EffortBaseline effort_baseline(const AdmittanceParams& params, double dt = 1e-3) {
  if (!params.axis_mask[1]) fail(ErrorCode::InvalidArgument, "effort reduction needs the y axis enabled");
  EffortBaseline e;
  e.stiffness_admittance = params.stiffness[1];
  e.stiffness_stiff = 20.0 * params.stiffness[1];
  e.force_admittance = detail::min_holding_force(params, e.hold_deviation, e.hold_time, dt);
  AdmittanceParams stiff = params;
  stiff.stiffness[1] = e.stiffness_stiff;
  e.force_stiff = detail::min_holding_force(stiff, e.hold_deviation, e.hold_time, dt);
  return e;
}

inline double metric_effort_reduction(const EffortBaseline& e) {
  return (e.force_stiff - e.force_admittance) / e.force_stiff * 100.0;
}

inline MetricsReport compute_metrics(const RunLog& log) {
  detail::require_rows(log);
  MetricsReport m;
  m.force_applied = detail::onset_index(log).has_value();
  m.force_tracking_rmse = metric_force_tracking_rmse(log);
  m.max_deviation = metric_max_deviation(log);
  m.recovery_time = metric_recovery_time(log);
  if (!m.recovery_time) m.flags.push_back("not_recovered");
  m.settling_time = metric_settling_time(log);
  if (!m.settling_time) m.flags.push_back("not_settled");
  const DampingEstimate d = metric_damping_ratio(log);
  m.damping_ratio = d.zeta;
  m.oscillatory = d.oscillatory;
  if (!d.oscillatory) m.flags.push_back(m.force_applied ? "non_oscillatory" : "no_force");
  const EnergyBalance e = metric_energy(log);
  m.energy_injected = e.injected;
  m.energy_dissipated = e.dissipated;
  m.velocity_overshoot = metric_overshoot(log);
  m.peak_jerk = metric_peak_jerk(log);
  if (m.force_applied && log.meta.admittance.axis_mask[1]) {
    m.effort_baseline = effort_baseline(log.meta.admittance, log.meta.tick_dt);
    m.effort_reduction = metric_effort_reduction(*m.effort_baseline);
  }
  return m;
}

}  // namespace admsim
