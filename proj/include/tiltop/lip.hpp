/**
 * @file lip.hpp
 * @brief Planar linear inverted pendulum: parameters, state, exact stepping.
 *
 * The pendulum obeys xdd = w^2 (x - p) with w = sqrt(g / h). The CoP p is the
 * input and is held constant (zero-order hold) over each step, which makes the
 * closed-form hyperbolic solution exact for any step length.
 */
#pragma once

#include <tiltop/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace tiltop {

inline constexpr double kGravity = 9.81;

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

class LipParams
{
public:
  /// Throws ConfigError unless mass, height, gravity > 0 and theta_max in (0, pi/2).
  LipParams(double mass, double height, double gravity = kGravity,
            std::optional<double> theta_max = std::nullopt)
  : mass_(mass), height_(height), gravity_(gravity), theta_max_(theta_max)
  {
    if(!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("LipParams: mass must be > 0");
    if(!(height > 0.0) || !std::isfinite(height)) throw ConfigError("LipParams: height must be > 0");
    if(!(gravity > 0.0) || !std::isfinite(gravity)) throw ConfigError("LipParams: gravity must be > 0");
    if(theta_max && !(*theta_max > 0.0 && *theta_max < std::numbers::pi / 2))
      throw ConfigError("LipParams: theta_max must lie in (0, pi/2)");
  }

  /// 15 kg, 0.5 m robot with a 20 degree tilt limit.
  static LipParams robot_default() { return LipParams(15.0, 0.5, kGravity, deg_to_rad(20.0)); }

  /// Human pendulum: no tilt constraint.
  static LipParams human(double mass, double height, double gravity = kGravity)
  {
    return LipParams(mass, height, gravity, std::nullopt);
  }

  double mass() const { return mass_; }
  double height() const { return height_; }
  double gravity() const { return gravity_; }
  const std::optional<double> & theta_max() const { return theta_max_; }

  /// Largest admissible |x - p|, or +inf when unconstrained.
  double max_tilt_offset() const
  {
    return theta_max_ ? height_ * std::tan(*theta_max_) : std::numeric_limits<double>::infinity();
  }

  LipParams without_tilt_limit() const { return LipParams(mass_, height_, gravity_, std::nullopt); }

  bool operator==(const LipParams &) const = default;

private:
  double mass_;
  double height_;
  double gravity_;
  std::optional<double> theta_max_;
};

struct LipState
{
  double x = 0.0;     ///< CoM position [m]
  double x_dot = 0.0; ///< CoM velocity [m/s]
  double p = 0.0;     ///< CoP position [m]
  double t = 0.0;     ///< simulation time [s]

  bool operator==(const LipState &) const = default;
};

inline bool is_finite(const LipState & s)
{
  return std::isfinite(s.x) && std::isfinite(s.x_dot) && std::isfinite(s.p) && std::isfinite(s.t);
}

inline double natural_frequency(const LipParams & params)
{
  return std::sqrt(params.gravity() / params.height());
}

/// Advance by dt with the CoP held at p_command. The caller saturates
/// p_command beforehand when the pendulum has a tilt limit. A non-finite
/// result means the trajectory blew up; check with is_finite().
inline LipState step(const LipState & state, double p_command, double dt, const LipParams & params)
{
  const double w = natural_frequency(params);
  const double c = std::cosh(w * dt);
  const double s = std::sinh(w * dt);
  const double offset = state.x - p_command;
  LipState next;
  next.x = p_command + offset * c + (state.x_dot / w) * s;
  next.x_dot = w * offset * s + state.x_dot * c;
  next.p = p_command;
  next.t = state.t + dt;
  return next;
}

inline double tilt_offset(const LipState & state) { return state.x - state.p; }

inline double tilt_angle(const LipState & state, const LipParams & params)
{
  return std::atan(tilt_offset(state) / params.height());
}

/// Clamp the CoP into [x - h tan(theta_max), x + h tan(theta_max)].
/// Pass-through when the pendulum has no tilt limit.
inline double saturate_cop(double x, double p_desired, const LipParams & params)
{
  if(!params.theta_max()) return p_desired;
  const double reach = params.max_tilt_offset();
  return std::clamp(p_desired, x - reach, x + reach);
}

} // namespace tiltop
