/**
 * @file mappings.hpp
 * @brief Body-tilt teleoperation mappings and the HMI force-feedback spring.
 *
 * Both mappings consume the human tilt offset (x_H - p_H) and return an
 * unsaturated robot CoP. The caller clamps that CoP once per tick with
 * saturate_cop() before stepping the robot.
 *
 *  - FB: tilt becomes a velocity command tracked by the robot's own
 *    critically damped CoP controller.
 *  - FF: tilt is copied, gain- and height-scaled, onto the robot's tilt.
 */
#pragma once

#include <tiltop/error.hpp>
#include <tiltop/lip.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace tiltop {

enum class MappingKind
{
  FB,
  FF
};

inline std::string_view to_string(MappingKind kind) { return kind == MappingKind::FB ? "FB" : "FF"; }

inline MappingKind mapping_kind_from_string(std::string_view s)
{
  if(s == "FB" || s == "fb") return MappingKind::FB;
  if(s == "FF" || s == "ff") return MappingKind::FF;
  throw ConfigError("unknown mapping kind '" + std::string(s) + "'");
}

struct FbConfig
{
  double k_fb = 10.0;       ///< velocity gain [1/s]
  double zeta_r = 1.0;      ///< robot controller damping ratio
  double x_ddot_cmd = 0.0;  ///< acceleration command [m/s^2]
  /// Optional symmetric limit on the velocity command [m/s]; off by default.
  std::optional<double> velocity_limit;

  void validate() const
  {
    if(!(k_fb > 0.0) || !std::isfinite(k_fb)) throw ConfigError("FbConfig: k_fb must be > 0");
    if(!(zeta_r > 0.0)) throw ConfigError("FbConfig: zeta_r must be > 0");
    if(velocity_limit && !(*velocity_limit > 0.0)) throw ConfigError("FbConfig: velocity_limit must be > 0");
  }
};

struct FfConfig
{
  double k_ff = 1.0;

  void validate() const
  {
    if(!(k_ff > 0.0) || !std::isfinite(k_ff)) throw ConfigError("FfConfig: k_ff must be > 0");
  }
};

/// Velocity command and its running integral, seeded at the robot's initial CoM.
struct CommandState
{
  double x_rcmd = 0.0;
  double x_dot_rcmd = 0.0;

  static CommandState seeded(double robot_x) { return CommandState{robot_x, 0.0}; }

  bool operator==(const CommandState &) const = default;
};

struct ForceFeedbackConfig
{
  double k_hmi = 274.7477419454622; ///< spring stiffness [N/m]
  double f_max = 100.0;             ///< actuator capacity [N]

  void validate() const
  {
    if(!(k_hmi > 0.0) || !std::isfinite(k_hmi)) throw ConfigError("ForceFeedbackConfig: k_hmi must be > 0");
    if(!(f_max > 0.0) || !std::isfinite(f_max)) throw ConfigError("ForceFeedbackConfig: f_max must be > 0");
  }
};

inline double fb_velocity_command(double human_tilt_offset, const FbConfig & cfg)
{
  const double v = cfg.k_fb * human_tilt_offset;
  if(cfg.velocity_limit) return std::clamp(v, -*cfg.velocity_limit, *cfg.velocity_limit);
  return v;
}

/// Hold the velocity command over dt and accumulate the position command.
inline CommandState integrate_command(const CommandState & cmd, double dt)
{
  return CommandState{cmd.x_rcmd + cmd.x_dot_rcmd * dt, cmd.x_dot_rcmd};
}

/// Robot CoP from the critically damped tracking controller (unsaturated).
inline double fb_cop(const LipState & robot, const CommandState & cmd, double omega_r, const FbConfig & cfg)
{
  return -cfg.x_ddot_cmd / (omega_r * omega_r) - (2.0 * cfg.zeta_r / omega_r) * (cmd.x_dot_rcmd - robot.x_dot)
         - cmd.x_rcmd + 2.0 * robot.x;
}

/// Robot CoP that reproduces the scaled human tilt on the robot (unsaturated).
inline double ff_cop(double robot_x, double human_tilt_offset, double h_r, double h_h, const FfConfig & cfg)
{
  return robot_x - cfg.k_ff * (h_r / h_h) * human_tilt_offset;
}

struct ForceSample
{
  double force = 0.0; ///< [N], after capping
  bool clamped = false;
};

inline ForceSample force_feedback_sample(double human_tilt_offset, const ForceFeedbackConfig & cfg)
{
  const double raw = cfg.k_hmi * human_tilt_offset;
  if(raw > cfg.f_max) return {cfg.f_max, true};
  if(raw < -cfg.f_max) return {-cfg.f_max, true};
  return {raw, false};
}

inline double force_feedback(double human_tilt_offset, const ForceFeedbackConfig & cfg)
{
  return force_feedback_sample(human_tilt_offset, cfg).force;
}

/// Stiffness at which the spring reaches f_max exactly when the human tilt
/// angle equals the robot's tilt limit.
inline double k_hmi_for_human(double h_h, double theta_max_r, double f_max = 100.0)
{
  if(!(h_h > 0.0)) throw ConfigError("k_hmi_for_human: h_h must be > 0");
  if(!(theta_max_r > 0.0 && theta_max_r < std::numbers::pi / 2))
    throw ConfigError("k_hmi_for_human: theta_max_r must lie in (0, pi/2)");
  return f_max / (h_h * std::tan(theta_max_r));
}

} // namespace tiltop
