/**
 * @file json_io.hpp
 * @brief JSON encoding of configuration types shared by trial sidecars,
 *        session configs and manifests.
 */
#pragma once

#include <tiltop/error.hpp>
#include <tiltop/experiment.hpp>
#include <tiltop/lip.hpp>
#include <tiltop/mappings.hpp>
#include <tiltop/pilot.hpp>

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace tiltop {

using Json = nlohmann::ordered_json;

namespace detail {

template<class T>
T get_or(const Json & j, const char * key, T fallback)
{
  if(!j.is_object()) return fallback;
  auto it = j.find(key);
  if(it == j.end() || it->is_null()) return fallback;
  try
  {
    return it->get<T>();
  }
  catch(const nlohmann::json::exception & e)
  {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template<class T>
T require(const Json & j, const char * key)
{
  if(!j.is_object() || !j.contains(key) || j.at(key).is_null())
    throw ConfigError(std::string("missing required field '") + key + "'");
  try
  {
    return j.at(key).get<T>();
  }
  catch(const nlohmann::json::exception & e)
  {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

inline double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }

} // namespace detail

// Tilt limits are stored in degrees; theta_max_deg = null means unconstrained.
inline Json to_json(const LipParams & p)
{
  Json j;
  j["mass"] = p.mass();
  j["height"] = p.height();
  j["gravity"] = p.gravity();
  if(p.theta_max())
    j["theta_max_rad"] = *p.theta_max();
  else
    j["theta_max_rad"] = nullptr;
  return j;
}

/// Accepts either theta_max_rad (exact, used in sidecars) or theta_max_deg.
inline LipParams lip_params_from_json(const Json & j, const LipParams & fallback)
{
  std::optional<double> theta = fallback.theta_max();
  if(j.contains("theta_max_rad"))
    theta = j.at("theta_max_rad").is_null() ? std::nullopt : std::optional<double>(j.at("theta_max_rad").get<double>());
  else if(j.contains("theta_max_deg"))
    theta = j.at("theta_max_deg").is_null() ? std::nullopt
                                            : std::optional<double>(deg_to_rad(j.at("theta_max_deg").get<double>()));
  return LipParams(detail::get_or(j, "mass", fallback.mass()), detail::get_or(j, "height", fallback.height()),
                   detail::get_or(j, "gravity", fallback.gravity()), theta);
}

inline Json to_json(const HumanParams & h) { return Json{{"mass", h.mass}, {"height", h.height}}; }

inline HumanParams human_params_from_json(const Json & j)
{
  HumanParams h;
  h.mass = detail::require<double>(j, "mass");
  h.height = detail::require<double>(j, "height");
  h.validate();
  return h;
}

inline Json to_json(const FbConfig & c)
{
  Json j{{"k_fb", c.k_fb}, {"zeta_r", c.zeta_r}, {"x_ddot_cmd", c.x_ddot_cmd}};
  if(c.velocity_limit)
    j["velocity_limit"] = *c.velocity_limit;
  else
    j["velocity_limit"] = nullptr;
  return j;
}

inline FbConfig fb_config_from_json(const Json & j, FbConfig c = {})
{
  c.k_fb = detail::get_or(j, "k_fb", c.k_fb);
  c.zeta_r = detail::get_or(j, "zeta_r", c.zeta_r);
  c.x_ddot_cmd = detail::get_or(j, "x_ddot_cmd", c.x_ddot_cmd);
  if(j.contains("velocity_limit"))
    c.velocity_limit = j.at("velocity_limit").is_null() ? std::nullopt
                                                        : std::optional<double>(j.at("velocity_limit").get<double>());
  c.validate();
  return c;
}

inline Json to_json(const FfConfig & c) { return Json{{"k_ff", c.k_ff}}; }

inline FfConfig ff_config_from_json(const Json & j, FfConfig c = {})
{
  c.k_ff = detail::get_or(j, "k_ff", c.k_ff);
  c.validate();
  return c;
}

inline Json to_json(const ForceFeedbackConfig & c) { return Json{{"k_hmi", c.k_hmi}, {"f_max", c.f_max}}; }

inline ForceFeedbackConfig force_config_from_json(const Json & j)
{
  ForceFeedbackConfig c;
  c.k_hmi = detail::require<double>(j, "k_hmi");
  c.f_max = detail::get_or(j, "f_max", c.f_max);
  c.validate();
  return c;
}

inline Json to_json(const MappingSetup & m)
{
  return Json{{"kind", std::string(to_string(m.kind))}, {"fb", to_json(m.fb)}, {"ff", to_json(m.ff)}};
}

inline MappingSetup mapping_setup_from_json(const Json & j)
{
  MappingSetup m;
  m.kind = mapping_kind_from_string(detail::require<std::string>(j, "kind"));
  m.fb = fb_config_from_json(j.value("fb", Json::object()));
  m.ff = ff_config_from_json(j.value("ff", Json::object()));
  return m;
}

inline Json to_json(const TrialConfig & c)
{
  return Json{{"kind", std::string(to_string(c.kind))},
              {"target_start", c.target_start},
              {"target_velocity", c.target_velocity},
              {"countdown", c.countdown},
              {"dwell_required", c.dwell_required},
              {"target_half_width", c.target_half_width},
              {"timeout", c.timeout},
              {"seed", c.seed},
              {"practice", c.practice}};
}

inline TrialConfig trial_config_from_json(const Json & j)
{
  TrialConfig c;
  c.kind = test_kind_from_string(detail::require<std::string>(j, "kind"));
  c.target_start = detail::require<double>(j, "target_start");
  c.target_velocity = detail::get_or(j, "target_velocity", 0.0);
  c.countdown = detail::get_or(j, "countdown", c.countdown);
  c.dwell_required = detail::get_or(j, "dwell_required", c.dwell_required);
  c.target_half_width = detail::get_or(j, "target_half_width", c.target_half_width);
  c.timeout = detail::get_or(j, "timeout", c.timeout);
  c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  c.practice = detail::get_or(j, "practice", false);
  c.validate();
  return c;
}

inline Json to_json(const PilotConfig & c)
{
  Json j;
  if(c.kind == PilotKind::Scripted)
  {
    j["kind"] = "scripted";
    auto s = Json::array();
    for(const auto & p : c.script) s.push_back(Json::array({p.t, p.tilt_offset}));
    j["script"] = s;
  }
  else
  {
    j["kind"] = "pd";
    j["kp"] = c.kp;
    j["kd"] = c.kd;
    j["tilt_cap"] = c.tilt_cap;
  }
  j["reaction_delay"] = c.reaction_delay;
  return j;
}

/// script_loader resolves a "script_file" entry (CSV) when present.
template<class ScriptLoader>
PilotConfig pilot_config_from_json(const Json & j, ScriptLoader && script_loader)
{
  PilotConfig c;
  const auto kind = detail::require<std::string>(j, "kind");
  if(kind == "scripted")
  {
    c.kind = PilotKind::Scripted;
    if(j.contains("script"))
    {
      for(const auto & p : j.at("script"))
      {
        if(!p.is_array() || p.size() != 2) throw ConfigError("pilot script entries must be [t, tilt_offset]");
        c.script.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      }
    }
    else if(j.contains("script_file"))
      c.script = script_loader(j.at("script_file").get<std::string>());
    else
      throw ConfigError("scripted pilot needs 'script' or 'script_file'");
  }
  else if(kind == "pd")
  {
    c.kind = PilotKind::Pd;
    c.kp = detail::require<double>(j, "kp");
    c.kd = detail::get_or(j, "kd", 0.0);
    c.tilt_cap = detail::require<double>(j, "tilt_cap");
  }
  else
    throw ConfigError("unknown pilot kind '" + kind + "'");
  c.reaction_delay = detail::get_or(j, "reaction_delay", 0.0);
  c.validate();
  return c;
}

inline PilotConfig pilot_config_from_json(const Json & j)
{
  return pilot_config_from_json(j, [](const std::string & path) { return read_script_csv(path); });
}

inline Json to_json(const InputTrace & tr)
{
  Json changes = Json::array();
  for(const auto & [tick, tilt] : tr.changes) changes.push_back(Json::array({tick, tilt}));
  Json j{{"changes", changes}};
  if(tr.abort_tick)
  {
    j["abort_tick"] = *tr.abort_tick;
    j["abort_reason"] = tr.abort_reason;
  }
  return j;
}

inline InputTrace input_trace_from_json(const Json & j)
{
  InputTrace tr;
  for(const auto & c : j.at("changes")) tr.changes.emplace_back(c.at(0).get<std::int64_t>(), c.at(1).get<double>());
  if(j.contains("abort_tick"))
  {
    tr.abort_tick = j.at("abort_tick").get<std::int64_t>();
    tr.abort_reason = j.value("abort_reason", std::string("aborted"));
  }
  return tr;
}

inline Json to_json(const TrialSetup & s)
{
  return Json{{"trial", to_json(s.trial)},
              {"mapping", to_json(s.mapping)},
              {"force_feedback", to_json(s.force)},
              {"force_feedback_on", s.force_feedback_on},
              {"robot", to_json(s.robot)},
              {"human", to_json(s.human)},
              {"dt", s.dt},
              {"log_decimation", s.log_decimation}};
}

inline TrialSetup trial_setup_from_json(const Json & j)
{
  TrialSetup s;
  s.trial = trial_config_from_json(j.at("trial"));
  s.mapping = mapping_setup_from_json(j.at("mapping"));
  s.force = force_config_from_json(j.at("force_feedback"));
  s.force_feedback_on = detail::require<bool>(j, "force_feedback_on");
  s.robot = lip_params_from_json(j.at("robot"), LipParams::robot_default());
  s.human = human_params_from_json(j.at("human"));
  s.dt = detail::require<double>(j, "dt");
  s.log_decimation = detail::require<int>(j, "log_decimation");
  s.validate();
  return s;
}

} // namespace tiltop
