/**
 * @file protocol.hpp
 * @brief Cockpit wire protocol: JSON text frames with a "type" field.
 *
 * server -> client   snapshot, ack, error
 * client -> server   input, control
 *
 * Unknown fields are ignored; unknown message types are rejected.
 */
#pragma once

#include <tiltop/experiment.hpp>
#include <tiltop/json_io.hpp>
#include <tiltop/mappings.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

namespace tiltop {

inline constexpr int kProtocolVersion = 1;

/// Human tilt sample from a client.
struct InputCommand
{
  double tilt_offset = 0.0;       ///< [m]
  std::int64_t timestamp_ms = 0;  ///< client clock
};

enum class ControlAction
{
  StartPractice,
  StartBlock,
  SetGain,
  Abort
};

inline std::string_view to_string(ControlAction a)
{
  switch(a)
  {
    case ControlAction::StartPractice: return "start_practice";
    case ControlAction::StartBlock: return "start_block";
    case ControlAction::SetGain: return "set_gain";
    case ControlAction::Abort: return "abort";
  }
  return "abort";
}

struct ControlCommand
{
  ControlAction action = ControlAction::Abort;
  std::optional<MappingKind> mapping; ///< set_gain only
  double value = 0.0;                 ///< set_gain only
};

struct ProtocolError
{
  std::string reason;
};

using ClientMessage = std::variant<InputCommand, ControlCommand, ProtocolError>;

inline ClientMessage parse_client_message(std::string_view text)
{
  Json j;
  try
  {
    j = Json::parse(text);
  }
  catch(const nlohmann::json::exception &)
  {
    return ProtocolError{"malformed JSON"};
  }
  if(!j.is_object() || !j.contains("type") || !j.at("type").is_string())
    return ProtocolError{"message needs a string 'type' field"};
  const auto type = j.at("type").get<std::string>();
  try
  {
    if(type == "input")
    {
      InputCommand in;
      if(!j.contains("tilt_offset") || !j.at("tilt_offset").is_number()) return ProtocolError{"input needs numeric tilt_offset"};
      in.tilt_offset = j.at("tilt_offset").get<double>();
      if(!std::isfinite(in.tilt_offset)) return ProtocolError{"tilt_offset must be finite"};
      if(j.contains("timestamp_ms") && j.at("timestamp_ms").is_number())
        in.timestamp_ms = static_cast<std::int64_t>(j.at("timestamp_ms").get<double>());
      return in;
    }
    if(type == "control")
    {
      ControlCommand c;
      const auto action = j.value("action", std::string());
      if(action == "start_practice")
        c.action = ControlAction::StartPractice;
      else if(action == "start_block")
        c.action = ControlAction::StartBlock;
      else if(action == "abort")
        c.action = ControlAction::Abort;
      else if(action == "set_gain")
      {
        c.action = ControlAction::SetGain;
        if(!j.contains("value") || !j.at("value").is_number()) return ProtocolError{"set_gain needs numeric value"};
        c.value = j.at("value").get<double>();
        if(j.contains("mapping")) c.mapping = mapping_kind_from_string(j.at("mapping").get<std::string>());
      }
      else
        return ProtocolError{"unknown control action '" + action + "'"};
      return c;
    }
  }
  catch(const std::exception & e)
  {
    return ProtocolError{e.what()};
  }
  return ProtocolError{"unknown message type '" + type + "'"};
}

/// Wire image of the cockpit view.
struct Snapshot
{
  double t = 0.0;
  Phase phase = Phase::Idle;
  std::string stage = "idle"; ///< idle | practice | measurement | done
  double robot_x = 0.0;
  double robot_x_dot = 0.0;
  double robot_p = 0.0;
  double target_x = 0.0;
  double target_half_width = 0.0;
  double tilt_offset = 0.0;
  double f_hmi = 0.0;          ///< 0 when force feedback is off for the combination
  bool force_feedback = false;
  double countdown_remaining = 0.0;
  double dwell_progress = 0.0;
  int trial_index = 0;
  int trials_in_block = 0;
  int combination = 0;
  std::string combination_id;
  MappingKind mapping = MappingKind::FB;
  double gain = 0.0;
  int clients = 0;
};

inline Json to_json(const Snapshot & s)
{
  return Json{{"type", "snapshot"},
              {"t", s.t},
              {"phase", std::string(to_string(s.phase))},
              {"stage", s.stage},
              {"robot_x", s.robot_x},
              {"robot_x_dot", s.robot_x_dot},
              {"robot_p", s.robot_p},
              {"target_x", s.target_x},
              {"target_half_width", s.target_half_width},
              {"tilt_offset", s.tilt_offset},
              {"f_hmi", s.f_hmi},
              {"force_feedback", s.force_feedback},
              {"countdown_remaining", s.countdown_remaining},
              {"dwell_progress", s.dwell_progress},
              {"trial_index", s.trial_index},
              {"trials_in_block", s.trials_in_block},
              {"combination", s.combination},
              {"combination_id", s.combination_id},
              {"mapping", std::string(to_string(s.mapping))},
              {"gain", s.gain},
              {"clients", s.clients}};
}

inline std::string ack_message(ControlAction a, std::string detail = {})
{
  Json j{{"type", "ack"}, {"action", std::string(to_string(a))}};
  if(!detail.empty()) j["detail"] = detail;
  return j.dump();
}

inline std::string error_message(std::string reason)
{
  return Json{{"type", "error"}, {"reason", std::move(reason)}}.dump();
}

} // namespace tiltop
