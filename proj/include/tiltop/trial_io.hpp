/**
 * @file trial_io.hpp
 * @brief Trial log files: 200 Hz CSV rows plus a JSON sidecar header.
 *
 * Numbers are written in shortest round-trip form (std::to_chars) so files
 * are byte-identical for identical simulations. Time is written from the
 * integer tick count, never accumulated.
 */
#pragma once

#include <tiltop/error.hpp>
#include <tiltop/experiment.hpp>
#include <tiltop/json_io.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace tiltop {

inline constexpr int kLogSchemaVersion = 1;

inline std::string format_double(double v)
{
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Time as decimal seconds with microsecond resolution, from the tick count.
inline std::string format_tick_time(std::int64_t tick, double dt)
{
  const std::int64_t us = std::llround(static_cast<double>(tick) * dt * 1e6);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%lld.%06lld", static_cast<long long>(us / 1000000),
                static_cast<long long>(us % 1000000));
  return buf;
}

inline const char * kLogCsvHeader = "tick,t,phase,x,x_dot,p,x_rcmd,x_dot_rcmd,tilt_offset,tilt_angle,f_hmi,"
                                    "force_clamped,cop_saturated,target_x";

inline std::string rows_to_csv(const TrialLog & log)
{
  std::string out = kLogCsvHeader;
  out += '\n';
  const bool fb = log.setup.mapping.kind == MappingKind::FB;
  for(const auto & r : log.rows)
  {
    out += std::to_string(r.tick);
    out += ',';
    out += format_tick_time(r.tick, log.setup.dt);
    out += ',';
    out += to_string(r.phase);
    for(double v : {r.robot.x, r.robot.x_dot, r.robot.p})
    {
      out += ',';
      out += format_double(v);
    }
    // Position/velocity commands exist only for FB.
    out += ',';
    if(fb) out += format_double(r.command.x_rcmd);
    out += ',';
    if(fb) out += format_double(r.command.x_dot_rcmd);
    for(double v : {r.tilt_offset, r.tilt_angle, r.force.force})
    {
      out += ',';
      out += format_double(v);
    }
    out += r.force.clamped ? ",1" : ",0";
    out += r.cop_saturated ? ",1" : ",0";
    out += ',';
    out += format_double(r.target_x);
    out += '\n';
  }
  return out;
}

inline Json trial_header_json(const TrialLog & log)
{
  Json j;
  j["schema_version"] = kLogSchemaVersion;
  j["setup"] = to_json(log.setup);
  Json input;
  if(log.input.pilot) input["pilot"] = to_json(*log.input.pilot);
  if(log.input.trace) input["trace"] = to_json(*log.input.trace);
  j["input"] = input;
  Json result;
  result["outcome"] = std::string(to_string(log.result.outcome));
  result["completion_time"] = log.result.completion_time ? Json(*log.result.completion_time) : Json(nullptr);
  result["dwell_start_time"] = log.result.dwell_start_time ? Json(*log.result.dwell_start_time) : Json(nullptr);
  result["end_time"] = log.result.end_time ? Json(*log.result.end_time) : Json(nullptr);
  result["ticks"] = log.result.ticks;
  if(!log.result.fault_reason.empty()) result["fault_reason"] = log.result.fault_reason;
  result["overruns"] = log.overruns;
  result["overrun_flag"] = log.overrun_flag;
  result["rows"] = log.rows.size();
  j["result"] = result;
  return j;
}

inline std::string trial_header_text(const TrialLog & log) { return trial_header_json(log).dump(2) + "\n"; }

struct TrialHeader
{
  TrialSetup setup;
  TrialInput input;
  TrialResult result;
  std::int64_t overruns = 0;
  bool overrun_flag = false;
};

inline TrialHeader trial_header_from_json(const Json & j)
{
  if(detail::get_or(j, "schema_version", 0) != kLogSchemaVersion)
    throw IoError("unsupported trial log schema_version");
  TrialHeader h;
  h.setup = trial_setup_from_json(j.at("setup"));
  const Json & in = j.at("input");
  if(in.contains("pilot")) h.input.pilot = pilot_config_from_json(in.at("pilot"));
  if(in.contains("trace")) h.input.trace = input_trace_from_json(in.at("trace"));
  const Json & r = j.at("result");
  h.result.outcome = outcome_from_string(r.at("outcome").get<std::string>());
  auto opt = [&r](const char * k) -> std::optional<double> {
    if(!r.contains(k) || r.at(k).is_null()) return std::nullopt;
    return r.at(k).get<double>();
  };
  h.result.completion_time = opt("completion_time");
  h.result.dwell_start_time = opt("dwell_start_time");
  h.result.end_time = opt("end_time");
  h.result.ticks = r.value("ticks", std::int64_t{0});
  h.result.fault_reason = r.value("fault_reason", std::string());
  h.overruns = r.value("overruns", std::int64_t{0});
  h.overrun_flag = r.value("overrun_flag", false);
  return h;
}

inline std::string read_text_file(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if(!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path & path, std::string_view text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if(!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if(!out) throw IoError("write failed for " + path.string());
}

inline TrialHeader read_trial_header(const std::filesystem::path & json_path)
{
  try
  {
    return trial_header_from_json(Json::parse(read_text_file(json_path)));
  }
  catch(const nlohmann::json::exception & e)
  {
    throw IoError("corrupt trial header " + json_path.string() + ": " + e.what());
  }
}

/// Minimal per-row view used by the analysis pipeline.
struct LoggedSample
{
  std::int64_t tick = 0;
  double t = 0.0;
  double x = 0.0;
  double p = 0.0;
  double tilt_offset = 0.0;
  double f_hmi = 0.0;
};

inline std::vector<LoggedSample> read_trial_rows(const std::filesystem::path & csv_path)
{
  std::istringstream in(read_text_file(csv_path));
  std::string line;
  if(!std::getline(in, line) || line != kLogCsvHeader) throw IoError("bad trial csv header in " + csv_path.string());
  std::vector<LoggedSample> rows;
  std::vector<std::string> cells;
  while(std::getline(in, line))
  {
    if(line.empty()) continue;
    cells.clear();
    std::size_t start = 0;
    for(;;)
    {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if(comma == std::string::npos) break;
      start = comma + 1;
    }
    if(cells.size() != 14) throw IoError("bad trial csv row in " + csv_path.string());
    try
    {
      LoggedSample s;
      s.tick = std::stoll(cells[0]);
      s.t = std::stod(cells[1]);
      s.x = std::stod(cells[3]);
      s.p = std::stod(cells[5]);
      s.tilt_offset = std::stod(cells[8]);
      s.f_hmi = std::stod(cells[10]);
      rows.push_back(s);
    }
    catch(const std::exception &)
    {
      throw IoError("non-numeric trial csv cell in " + csv_path.string());
    }
  }
  return rows;
}

/// Writes <dir>/<stem>.csv and <dir>/<stem>.json.
inline void write_trial(const std::filesystem::path & dir, const std::string & stem, const TrialLog & log)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if(ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / (stem + ".csv"), rows_to_csv(log));
  write_text_file(dir / (stem + ".json"), trial_header_text(log));
}

/// Re-simulate a trial from its sidecar.
inline TrialLog resimulate(const TrialHeader & h)
{
  TrialLog log;
  if(h.input.trace)
    log = run_trial(h.setup, *h.input.trace);
  else if(h.input.pilot)
    log = run_trial(h.setup, *h.input.pilot);
  else
    throw IoError("trial header has neither pilot nor input trace");
  log.overruns = h.overruns;
  log.overrun_flag = h.overrun_flag;
  return log;
}

struct ReplayReport
{
  bool csv_identical = false;
  bool header_identical = false;
  std::size_t rows = 0;
  std::string first_difference; ///< empty when identical

  bool ok() const { return csv_identical && header_identical; }
};

inline std::string first_line_difference(const std::string & a, const std::string & b)
{
  std::istringstream sa(a), sb(b);
  std::string la, lb;
  std::size_t n = 0;
  while(true)
  {
    const bool ga = static_cast<bool>(std::getline(sa, la));
    const bool gb = static_cast<bool>(std::getline(sb, lb));
    ++n;
    if(!ga && !gb) return {};
    if(ga != gb || la != lb)
      return "line " + std::to_string(n) + ": recorded '" + (ga ? la : "<eof>") + "' vs replayed '" + (gb ? lb : "<eof>")
             + "'";
  }
}

/// Accepts either the .csv or the .json path of a trial.
inline ReplayReport replay_trial(const std::filesystem::path & any_path)
{
  auto base = any_path;
  base.replace_extension();
  const auto json_path = std::filesystem::path(base.string() + ".json");
  const auto csv_path = std::filesystem::path(base.string() + ".csv");
  const std::string recorded_header = read_text_file(json_path);
  const std::string recorded_csv = read_text_file(csv_path);
  const TrialHeader h = trial_header_from_json(Json::parse(recorded_header));
  const TrialLog log = resimulate(h);
  const std::string csv = rows_to_csv(log);
  const std::string header = trial_header_text(log);
  ReplayReport rep;
  rep.rows = log.rows.size();
  rep.csv_identical = csv == recorded_csv;
  rep.header_identical = header == recorded_header;
  if(!rep.csv_identical)
    rep.first_difference = "csv " + first_line_difference(recorded_csv, csv);
  else if(!rep.header_identical)
    rep.first_difference = "header " + first_line_difference(recorded_header, header);
  return rep;
}

} // namespace tiltop
