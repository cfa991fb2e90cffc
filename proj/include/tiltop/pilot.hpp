/**
 * @file pilot.hpp
 * @brief Synthetic pilots that stand in for the human and emit a tilt offset
 *        (x_H - p_H) every tick.
 */
#pragma once

#include <tiltop/error.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace tiltop {

/// What the pilot sees on screen at time t (seconds since the countdown ended;
/// negative during the countdown).
struct PilotObservation
{
  double robot_x = 0.0;
  double robot_x_dot = 0.0;
  double target_x = 0.0;
  double target_x_dot = 0.0;
  double hmi_force = 0.0;
  double t = 0.0;
};

enum class PilotKind
{
  Scripted,
  Pd
};

struct ScriptPoint
{
  double t = 0.0;
  double tilt_offset = 0.0;

  bool operator==(const ScriptPoint &) const = default;
};

struct PilotConfig
{
  PilotKind kind = PilotKind::Pd;
  std::vector<ScriptPoint> script; ///< scripted: breakpoints, sorted by t
  double kp = 0.05;                ///< pd: tilt per meter of position error
  double kd = 0.12;                ///< pd: tilt per (m/s) of velocity error
  double tilt_cap = 0.3;           ///< pd: |output| bound [m]
  double reaction_delay = 0.0;     ///< [s]

  static PilotConfig constant(double tilt)
  {
    PilotConfig c;
    c.kind = PilotKind::Scripted;
    c.script = {{0.0, tilt}};
    return c;
  }

  static PilotConfig pd(double kp, double kd, double tilt_cap, double reaction_delay = 0.0)
  {
    PilotConfig c;
    c.kind = PilotKind::Pd;
    c.kp = kp;
    c.kd = kd;
    c.tilt_cap = tilt_cap;
    c.reaction_delay = reaction_delay;
    return c;
  }

  void validate() const
  {
    if(!(reaction_delay >= 0.0)) throw ConfigError("PilotConfig: reaction_delay must be >= 0");
    if(kind == PilotKind::Pd && !(tilt_cap > 0.0)) throw ConfigError("PilotConfig: tilt_cap must be > 0");
    if(kind == PilotKind::Scripted)
    {
      if(script.empty()) throw ConfigError("PilotConfig: scripted pilot needs at least one breakpoint");
      if(!std::is_sorted(script.begin(), script.end(),
                         [](const ScriptPoint & a, const ScriptPoint & b) { return a.t < b.t; }))
        throw ConfigError("PilotConfig: script breakpoints must be sorted by time");
    }
  }
};

/// Piecewise-linear interpolation, constant beyond either end.
inline double interpolate_script(const std::vector<ScriptPoint> & script, double t)
{
  if(script.empty()) return 0.0;
  if(t <= script.front().t) return script.front().tilt_offset;
  if(t >= script.back().t) return script.back().tilt_offset;
  auto hi = std::upper_bound(script.begin(), script.end(), t,
                             [](double v, const ScriptPoint & p) { return v < p.t; });
  auto lo = hi - 1;
  const double span = hi->t - lo->t;
  if(span <= 0.0) return hi->tilt_offset;
  const double a = (t - lo->t) / span;
  return lo->tilt_offset + a * (hi->tilt_offset - lo->tilt_offset);
}

inline double pd_law(const PilotConfig & cfg, const PilotObservation & obs)
{
  const double u = cfg.kp * (obs.target_x - obs.robot_x) + cfg.kd * (obs.target_x_dot - obs.robot_x_dot);
  return std::clamp(u, -cfg.tilt_cap, cfg.tilt_cap);
}

/// Memoryless pilot output (no reaction delay applied).
inline double pilot_step(const PilotConfig & cfg, const PilotObservation & obs)
{
  return cfg.kind == PilotKind::Scripted ? interpolate_script(cfg.script, obs.t) : pd_law(cfg, obs);
}

/// Pilot with reaction delay: the pd law acts on the newest observation that
/// is at least reaction_delay old, and outputs zero until one exists.
class Pilot
{
public:
  explicit Pilot(PilotConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  /// Observations must arrive with non-decreasing t.
  double step(const PilotObservation & obs)
  {
    if(cfg_.kind == PilotKind::Scripted) return interpolate_script(cfg_.script, obs.t);
    if(cfg_.reaction_delay <= 0.0) return pd_law(cfg_, obs);

    history_.push_back(obs);
    const double horizon = obs.t - cfg_.reaction_delay;
    // Keep exactly one observation at or before the horizon.
    while(history_.size() >= 2 && history_[1].t <= horizon + 1e-12) history_.pop_front();
    if(history_.front().t > horizon + 1e-12) return 0.0;
    return pd_law(cfg_, history_.front());
  }

  const PilotConfig & config() const { return cfg_; }

private:
  PilotConfig cfg_;
  std::deque<PilotObservation> history_;
};

/// Script CSV: rows of (t, tilt_offset); a non-numeric first row is a header.
inline std::vector<ScriptPoint> read_script_csv(std::istream & in)
{
  std::vector<ScriptPoint> out;
  std::string line;
  std::size_t lineno = 0;
  while(std::getline(in, line))
  {
    ++lineno;
    if(line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto comma = line.find(',');
    if(comma == std::string::npos) throw IoError("script csv line " + std::to_string(lineno) + ": expected 2 columns");
    try
    {
      out.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    }
    catch(const std::invalid_argument &)
    {
      if(lineno == 1 && out.empty()) continue;
      throw IoError("script csv line " + std::to_string(lineno) + ": non-numeric cell");
    }
  }
  return out;
}

inline std::vector<ScriptPoint> read_script_csv(const std::string & path)
{
  std::ifstream in(path);
  if(!in) throw IoError("cannot open script file " + path);
  return read_script_csv(in);
}

} // namespace tiltop
