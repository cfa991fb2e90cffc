/**
 * @file session.hpp
 * @brief Session configuration, on-disk layout, headless sessions and the
 *        live session state machine.
 *
 * Layout of a session directory:
 *
 *   <out>/<session>/session.json                   written last
 *   <out>/<session>/<combination>/manifest.json
 *   <out>/<session>/<combination>/trial_NN.{csv,json}
 *   <out>/<session>/<combination>/practice_NN.{csv,json}
 */
#pragma once

#include <tiltop/error.hpp>
#include <tiltop/experiment.hpp>
#include <tiltop/json_io.hpp>
#include <tiltop/protocol.hpp>
#include <tiltop/rng.hpp>
#include <tiltop/trial_io.hpp>

#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace tiltop {

inline constexpr int kSessionSchemaVersion = 1;

enum class SessionMode
{
  Live,
  Headless
};

struct CombinationSpec
{
  bool force_feedback = false;
  MappingKind mapping = MappingKind::FB;
  TestKind test = TestKind::Position;
  int trials = 20;
  int practice_trials = 0; ///< headless only; live practice is open-ended
  double practice_target_velocity = TestRanges::practice_velocity;
  std::optional<double> gain;        ///< overrides the mapping's initial gain
  std::optional<PilotConfig> pilot;  ///< overrides the session pilot (headless)

  std::string id(std::size_t index) const
  {
    return "c" + std::to_string(index) + "_" + (force_feedback ? "ffon" : "ffoff") + "_" + std::string(to_string(mapping))
           + "_" + std::string(to_string(test));
  }
};

struct SessionConfig
{
  std::string session = "session";
  SessionMode mode = SessionMode::Headless;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 8765;
  double snapshot_rate = 60.0;
  LipParams robot = LipParams::robot_default();
  HumanParams human;
  FbConfig fb;
  FfConfig ff;
  ForceFeedbackConfig force;
  TrialConfig trial_template; ///< countdown, dwell, target width, timeout
  PilotConfig pilot;
  std::vector<CombinationSpec> combinations;
  double inter_trial_pause = 1.0; ///< live: seconds between trials

  void validate() const
  {
    human.validate();
    fb.validate();
    ff.validate();
    force.validate();
    pilot.validate();
    if(!(snapshot_rate > 0.0 && snapshot_rate <= 1000.0)) throw ConfigError("snapshot_rate must lie in (0, 1000] Hz");
    if(combinations.empty()) throw ConfigError("session needs at least one combination");
    for(const auto & c : combinations)
    {
      if(c.trials < 1) throw ConfigError("combination trials must be >= 1");
      if(c.practice_trials < 0) throw ConfigError("practice_trials must be >= 0");
      if(c.gain && !(*c.gain > 0.0)) throw ConfigError("combination gain must be > 0");
      if(c.pilot) c.pilot->validate();
    }
    if(!(inter_trial_pause >= 0.0)) throw ConfigError("inter_trial_pause must be >= 0");
  }

  MappingSetup mapping_for(const CombinationSpec & c) const
  {
    MappingSetup m;
    m.kind = c.mapping;
    m.fb = fb;
    m.ff = ff;
    if(c.gain) m.set_gain(*c.gain);
    return m;
  }

  TrialSetup setup_for(const CombinationSpec & c, const TrialConfig & trial, const MappingSetup & mapping) const
  {
    TrialSetup s;
    s.trial = trial;
    s.trial.countdown = trial_template.countdown;
    s.trial.dwell_required = trial_template.dwell_required;
    s.trial.target_half_width = trial_template.target_half_width;
    s.trial.timeout = trial_template.timeout;
    s.mapping = mapping;
    s.force = force;
    s.force_feedback_on = c.force_feedback;
    s.robot = robot;
    s.human = human;
    return s;
  }

  const PilotConfig & pilot_for(const CombinationSpec & c) const { return c.pilot ? *c.pilot : pilot; }
};

/// Per-trial key: trial i of combination c, practice or measurement.
inline std::uint64_t trial_seed(std::uint64_t session_seed, std::size_t combination, bool practice, std::size_t index)
{
  return CounterRng::derive(session_seed, {combination, practice ? 1u : 0u, index});
}

inline std::string trial_stem(bool practice, std::size_t index)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%02zu", practice ? "practice" : "trial", index);
  return buf;
}

inline Json to_json(const SessionConfig & c)
{
  Json j;
  j["schema_version"] = kSessionSchemaVersion;
  j["session"] = c.session;
  j["mode"] = c.mode == SessionMode::Live ? "live" : "headless";
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["bind"] = c.bind_address + ":" + std::to_string(c.port);
  j["snapshot_rate"] = c.snapshot_rate;
  j["robot"] = to_json(c.robot);
  j["human"] = to_json(c.human);
  j["mappings"] = Json{{"FB", to_json(c.fb)}, {"FF", to_json(c.ff)}};
  j["force_feedback"] = to_json(c.force);
  j["trial"] = Json{{"countdown", c.trial_template.countdown},
                    {"dwell_required", c.trial_template.dwell_required},
                    {"target_half_width", c.trial_template.target_half_width},
                    {"timeout", c.trial_template.timeout}};
  j["pilot"] = to_json(c.pilot);
  j["inter_trial_pause"] = c.inter_trial_pause;
  auto combos = Json::array();
  for(const auto & s : c.combinations)
  {
    Json cj{{"force_feedback", s.force_feedback ? "on" : "off"},
            {"mapping", std::string(to_string(s.mapping))},
            {"test", std::string(to_string(s.test))},
            {"trials", s.trials},
            {"practice_trials", s.practice_trials},
            {"practice_target_velocity", s.practice_target_velocity}};
    if(s.gain) cj["gain"] = *s.gain;
    if(s.pilot) cj["pilot"] = to_json(*s.pilot);
    combos.push_back(cj);
  }
  j["combinations"] = combos;
  return j;
}

/// Parse a session config. Relative script files resolve against base_dir.
inline SessionConfig session_config_from_json(const Json & j, const std::filesystem::path & base_dir = {})
{
  using detail::get_or;
  const int version = get_or(j, "schema_version", 0);
  if(version != kSessionSchemaVersion)
    throw ConfigError("unsupported session schema_version " + std::to_string(version));

  auto load_script = [&base_dir](const std::string & path) {
    std::filesystem::path p(path);
    if(p.is_relative()) p = base_dir / p;
    return read_script_csv(p.string());
  };

  SessionConfig c;
  c.session = get_or<std::string>(j, "session", c.session);
  const auto mode = get_or<std::string>(j, "mode", "headless");
  if(mode == "live")
    c.mode = SessionMode::Live;
  else if(mode == "headless")
    c.mode = SessionMode::Headless;
  else
    throw ConfigError("mode must be 'live' or 'headless'");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
  const auto bind = get_or<std::string>(j, "bind", "127.0.0.1:8765");
  const auto colon = bind.rfind(':');
  if(colon == std::string::npos) throw ConfigError("bind must be host:port");
  c.bind_address = bind.substr(0, colon);
  try
  {
    const int port = std::stoi(bind.substr(colon + 1));
    if(port < 0 || port > 65535) throw ConfigError("bind port out of range");
    c.port = static_cast<std::uint16_t>(port);
  }
  catch(const std::invalid_argument &)
  {
    throw ConfigError("bind port must be numeric");
  }
  c.snapshot_rate = get_or(j, "snapshot_rate", c.snapshot_rate);
  if(j.contains("robot")) c.robot = lip_params_from_json(j.at("robot"), c.robot);
  if(!j.contains("human"))
    throw ConfigError("missing required field 'human' (human pendulum mass and height have no default)");
  c.human = human_params_from_json(j.at("human"));
  if(j.contains("mappings"))
  {
    const Json & m = j.at("mappings");
    if(m.contains("FB")) c.fb = fb_config_from_json(m.at("FB"));
    if(m.contains("FF")) c.ff = ff_config_from_json(m.at("FF"));
  }
  {
    const Json ff = j.value("force_feedback", Json::object());
    c.force.f_max = get_or(ff, "f_max", c.force.f_max);
    if(ff.contains("k_hmi") && !ff.at("k_hmi").is_null())
      c.force.k_hmi = ff.at("k_hmi").get<double>();
    else
    {
      if(!c.robot.theta_max()) throw ConfigError("k_hmi must be given when the robot has no tilt limit");
      c.force.k_hmi = k_hmi_for_human(c.human.height, *c.robot.theta_max(), c.force.f_max);
    }
  }
  {
    const Json t = j.value("trial", Json::object());
    c.trial_template.countdown = get_or(t, "countdown", c.trial_template.countdown);
    c.trial_template.dwell_required = get_or(t, "dwell_required", c.trial_template.dwell_required);
    c.trial_template.target_half_width = get_or(t, "target_half_width", c.trial_template.target_half_width);
    c.trial_template.timeout = get_or(t, "timeout", c.trial_template.timeout);
    c.trial_template.validate();
  }
  if(j.contains("pilot")) c.pilot = pilot_config_from_json(j.at("pilot"), load_script);
  c.inter_trial_pause = get_or(j, "inter_trial_pause", c.inter_trial_pause);
  if(!j.contains("combinations")) throw ConfigError("missing required field 'combinations'");
  for(const auto & cj : j.at("combinations"))
  {
    CombinationSpec s;
    const auto ff = get_or<std::string>(cj, "force_feedback", "off");
    if(ff != "on" && ff != "off") throw ConfigError("combination force_feedback must be 'on' or 'off'");
    s.force_feedback = ff == "on";
    s.mapping = mapping_kind_from_string(detail::require<std::string>(cj, "mapping"));
    s.test = test_kind_from_string(detail::require<std::string>(cj, "test"));
    s.trials = get_or(cj, "trials", s.trials);
    s.practice_trials = get_or(cj, "practice_trials", s.practice_trials);
    s.practice_target_velocity = get_or(cj, "practice_target_velocity", s.practice_target_velocity);
    if(cj.contains("gain") && !cj.at("gain").is_null()) s.gain = cj.at("gain").get<double>();
    if(cj.contains("pilot")) s.pilot = pilot_config_from_json(cj.at("pilot"), load_script);
    c.combinations.push_back(s);
  }
  c.validate();
  return c;
}

inline SessionConfig load_session_config(const std::filesystem::path & path)
{
  try
  {
    return session_config_from_json(Json::parse(read_text_file(path)), path.parent_path());
  }
  catch(const nlohmann::json::exception & e)
  {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

struct TrialEntry
{
  std::string stem;
  bool practice = false;
  Outcome outcome = Outcome::Timeout;
};

inline Json combination_manifest(const SessionConfig & cfg, std::size_t index, const MappingSetup & mapping,
                                 const std::vector<TrialEntry> & trials, const std::vector<TrialEntry> & practice)
{
  const CombinationSpec & c = cfg.combinations[index];
  auto list = [](const std::vector<TrialEntry> & v) {
    auto a = Json::array();
    for(const auto & t : v)
      a.push_back(Json{{"stem", t.stem},
                       {"csv", t.stem + ".csv"},
                       {"json", t.stem + ".json"},
                       {"outcome", std::string(to_string(t.outcome))}});
    return a;
  };
  return Json{{"schema_version", kSessionSchemaVersion},
              {"id", c.id(index)},
              {"force_feedback", c.force_feedback ? "on" : "off"},
              {"mapping", std::string(to_string(c.mapping))},
              {"test", std::string(to_string(c.test))},
              {"gain", mapping.gain()},
              {"trials", list(trials)},
              {"practice", list(practice)}};
}

inline Json session_manifest(const SessionConfig & cfg, std::size_t combinations_done, bool complete,
                             const std::string & error = {})
{
  auto combos = Json::array();
  for(std::size_t i = 0; i < combinations_done; ++i)
  {
    const auto id = cfg.combinations[i].id(i);
    combos.push_back(Json{{"id", id}, {"dir", id}, {"manifest", id + "/manifest.json"}});
  }
  Json j{{"schema_version", kSessionSchemaVersion},
         {"session", cfg.session},
         {"complete", complete},
         {"config", to_json(cfg)},
         {"combinations", combos}};
  if(!error.empty()) j["error"] = error;
  return j;
}

inline std::filesystem::path session_dir(const SessionConfig & cfg)
{
  return std::filesystem::path(cfg.output_dir) / cfg.session;
}

/// Headless session: every trial driven by the configured synthetic pilots.
/// Output is a pure function of the config. On a write failure the session
/// manifest is written as incomplete (best effort) and the error rethrown.
inline std::filesystem::path run_session(const SessionConfig & cfg)
{
  cfg.validate();
  const auto root = session_dir(cfg);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if(ec) throw IoError("cannot create " + root.string() + ": " + ec.message());

  std::size_t done = 0;
  try
  {
    for(std::size_t ci = 0; ci < cfg.combinations.size(); ++ci)
    {
      const CombinationSpec & combo = cfg.combinations[ci];
      const auto dir = root / combo.id(ci);
      const MappingSetup mapping = cfg.mapping_for(combo);
      const PilotConfig & pilot = cfg.pilot_for(combo);
      std::vector<TrialEntry> practice, trials;

      for(int i = 0; i < combo.practice_trials; ++i)
      {
        const auto trial = generate_practice_trial(trial_seed(cfg.seed, ci, true, i), combo.test,
                                                   combo.practice_target_velocity);
        const TrialLog log = run_trial(cfg.setup_for(combo, trial, mapping), pilot);
        const auto stem = trial_stem(true, i);
        write_trial(dir, stem, log);
        practice.push_back({stem, true, log.result.outcome});
      }
      for(int i = 0; i < combo.trials; ++i)
      {
        const auto trial = generate_trial(trial_seed(cfg.seed, ci, false, i), combo.test);
        const TrialLog log = run_trial(cfg.setup_for(combo, trial, mapping), pilot);
        const auto stem = trial_stem(false, i);
        write_trial(dir, stem, log);
        trials.push_back({stem, false, log.result.outcome});
      }
      write_text_file(dir / "manifest.json", combination_manifest(cfg, ci, mapping, trials, practice).dump(2) + "\n");
      done = ci + 1;
    }
  }
  catch(const IoError & e)
  {
    try
    {
      write_text_file(root / "session.json", session_manifest(cfg, done, false, e.what()).dump(2) + "\n");
    }
    catch(const IoError &)
    {
    }
    throw;
  }
  write_text_file(root / "session.json", session_manifest(cfg, done, true).dump(2) + "\n");
  return root;
}

// ---------------------------------------------------------------------------
// Live sessions
// ---------------------------------------------------------------------------

struct TrialWriteJob
{
  std::filesystem::path dir;
  std::string stem;
  TrialLog log;
};

struct TextWriteJob
{
  std::filesystem::path path;
  std::string text;
};

using PersistJob = std::variant<TrialWriteJob, TextWriteJob>;

inline void execute(const PersistJob & job)
{
  if(const auto * t = std::get_if<TrialWriteJob>(&job))
    write_trial(t->dir, t->stem, t->log);
  else
  {
    const auto & w = std::get<TextWriteJob>(job);
    std::error_code ec;
    std::filesystem::create_directories(w.path.parent_path(), ec);
    write_text_file(w.path, w.text);
  }
}

/// Live session state machine. Owned by exactly one thread (the tick
/// driver); the network side talks to it only through the methods below,
/// called from the same thread after draining the inbound channel.
///
/// Per combination: idle -> practice (open-ended, gain tunable) ->
/// measurement (gain frozen, N trials) -> next combination.
class LiveSession
{
public:
  enum class Stage
  {
    Idle,
    Practice,
    Measurement,
    Done
  };

  /// submit must not block; it returns false when its buffer is full, in
  /// which case the job is retried on the next tick.
  LiveSession(SessionConfig cfg, std::function<bool(PersistJob &)> submit)
  : cfg_(std::move(cfg)), submit_(std::move(submit))
  {
    cfg_.validate();
    enter_combination(0);
  }

  const SessionConfig & config() const { return cfg_; }
  Stage stage() const { return stage_; }
  bool finished() const { return stage_ == Stage::Done && backlog_.empty(); }
  std::int64_t tick_count() const { return tick_; }
  int clients() const { return clients_; }
  std::size_t combination_index() const { return combo_; }
  const MappingSetup & mapping() const { return mapping_; }
  bool trial_running() const { return runner_ && !runner_->finished(); }
  std::size_t backlog() const { return backlog_.size(); }

  void client_connected() { ++clients_; }

  void client_disconnected()
  {
    if(clients_ > 0) --clients_;
    if(clients_ == 0 && trial_running())
    {
      abort_trial("client disconnected");
      stage_ = stage_ == Stage::Done ? Stage::Done : Stage::Idle;
    }
  }

  /// Latest-wins hold. Returns false for a stale command.
  bool input(const InputCommand & in)
  {
    if(last_input_ms_ && in.timestamp_ms < *last_input_ms_) return false;
    last_input_ms_ = in.timestamp_ms;
    tilt_ = in.tilt_offset;
    return true;
  }

  /// Returns the response frame (ack or error).
  std::string control(const ControlCommand & c)
  {
    switch(c.action)
    {
      case ControlAction::StartPractice:
        if(stage_ == Stage::Done) return error_message("session finished");
        if(stage_ == Stage::Measurement) return error_message("measurement block in progress");
        if(clients_ < 1) return error_message("no input client connected");
        if(stage_ != Stage::Practice)
        {
          stage_ = Stage::Practice;
          start_trial();
        }
        return ack_message(c.action);

      case ControlAction::StartBlock:
        if(stage_ == Stage::Done) return error_message("session finished");
        if(stage_ == Stage::Measurement) return error_message("measurement block already running");
        if(clients_ < 1) return error_message("no input client connected");
        if(trial_running()) abort_trial("practice ended");
        stage_ = Stage::Measurement;
        kept_in_block_ = 0;
        start_trial();
        return ack_message(c.action);

      case ControlAction::SetGain:
      {
        if(stage_ != Stage::Practice) return error_message("gain can only be changed during practice");
        if(c.mapping && *c.mapping != mapping_.kind)
          return error_message("combination uses " + std::string(to_string(mapping_.kind)) + " mapping");
        if(!(c.value > 0.0) || !std::isfinite(c.value)) return error_message("gain must be > 0");
        mapping_.set_gain(c.value);
        return ack_message(c.action, "applies from the next trial");
      }

      case ControlAction::Abort:
        if(!trial_running()) return error_message("no trial running");
        abort_trial("aborted by operator");
        if(stage_ != Stage::Done) stage_ = Stage::Idle;
        return ack_message(c.action);
    }
    return error_message("unsupported control");
  }

  /// Report that the tick about to run started late.
  void note_overrun()
  {
    ++overruns_total_;
    if(trial_running()) ++trial_overruns_;
  }

  std::int64_t overruns_total() const { return overruns_total_; }

  /// One 1 ms tick of the whole session.
  void tick()
  {
    flush_backlog();
    if(trial_running())
    {
      const std::int64_t k = runner_->tick_count();
      trace_.record(k, tilt_);
      TickRecord rec = runner_->tick(tilt_);
      if(runner_->logs_tick(k)) rows_.push_back(rec);
      if(runner_->finished()) finish_trial();
    }
    else if(pause_left_ > 0 && --pause_left_ == 0)
    {
      if(stage_ == Stage::Practice || stage_ == Stage::Measurement) start_trial();
    }
    ++tick_;
  }

  /// True when a snapshot falls due on the tick just executed.
  bool snapshot_due() const
  {
    const auto slot = [this](std::int64_t k) {
      return static_cast<std::int64_t>(std::floor(static_cast<double>(k) * cfg_.snapshot_rate / 1000.0));
    };
    return slot(tick_) != slot(tick_ - 1);
  }

  Snapshot snapshot() const
  {
    Snapshot s;
    s.t = static_cast<double>(tick_) * 1e-3;
    s.stage = stage_name();
    s.clients = clients_;
    s.combination = static_cast<int>(combo_);
    if(combo_ < cfg_.combinations.size())
    {
      const auto & c = cfg_.combinations[combo_];
      s.combination_id = c.id(combo_);
      s.force_feedback = c.force_feedback;
      s.trials_in_block = c.trials;
    }
    s.mapping = mapping_.kind;
    s.gain = mapping_.gain();
    s.trial_index = trial_index_;
    s.tilt_offset = tilt_;
    s.target_half_width = cfg_.trial_template.target_half_width;
    if(runner_)
    {
      s.phase = runner_->phase();
      s.robot_x = runner_->robot().x;
      s.robot_x_dot = runner_->robot().x_dot;
      s.robot_p = runner_->robot().p;
      s.target_x = runner_->target_x();
      s.countdown_remaining = runner_->countdown_remaining();
      s.dwell_progress = runner_->dwell_progress();
      s.f_hmi = s.force_feedback ? runner_->last_force() : 0.0;
    }
    if(stage_ == Stage::Idle || stage_ == Stage::Done)
      if(!runner_ || !runner_->finished() || pause_left_ == 0) s.phase = Phase::Idle;
    return s;
  }

private:
  std::string stage_name() const
  {
    switch(stage_)
    {
      case Stage::Idle: return "idle";
      case Stage::Practice: return "practice";
      case Stage::Measurement: return "measurement";
      case Stage::Done: return "done";
    }
    return "idle";
  }

  void enter_combination(std::size_t index)
  {
    combo_ = index;
    if(combo_ >= cfg_.combinations.size())
    {
      stage_ = Stage::Done;
      enqueue(TextWriteJob{session_dir(cfg_) / "session.json",
                           session_manifest(cfg_, cfg_.combinations.size(), true).dump(2) + "\n"});
      return;
    }
    stage_ = Stage::Idle;
    mapping_ = cfg_.mapping_for(cfg_.combinations[combo_]);
    trials_.clear();
    practice_.clear();
    trial_index_ = 0;
    practice_index_ = 0;
    kept_in_block_ = 0;
  }

  void start_trial()
  {
    const bool practice = stage_ == Stage::Practice;
    const CombinationSpec & combo = cfg_.combinations[combo_];
    const std::size_t idx = practice ? practice_index_ : trial_index_;
    const auto seed = trial_seed(cfg_.seed, combo_, practice, idx);
    const TrialConfig trial = practice
                                  ? generate_practice_trial(seed, combo.test, combo.practice_target_velocity)
                                  : generate_trial(seed, combo.test);
    runner_.emplace(cfg_.setup_for(combo, trial, mapping_));
    trace_ = InputTrace{};
    rows_.clear();
    trial_overruns_ = 0;
    pause_left_ = 0;
  }

  void abort_trial(std::string reason)
  {
    trace_.abort_tick = runner_->tick_count();
    trace_.abort_reason = reason;
    runner_->abort(std::move(reason));
    finish_trial();
  }

  void finish_trial()
  {
    const bool practice = runner_->setup().trial.practice;
    TrialLog log;
    log.setup = runner_->setup();
    log.input.trace = std::move(trace_);
    log.result = runner_->result();
    log.rows = std::move(rows_);
    log.overruns = trial_overruns_;
    log.overrun_flag = log.result.ticks > 0 && trial_overruns_ * 100 > log.result.ticks;
    const auto stem = trial_stem(practice, practice ? practice_index_ : trial_index_);
    const auto outcome = log.result.outcome;
    const bool aborted = !log.input.trace->abort_reason.empty();
    enqueue(TrialWriteJob{session_dir(cfg_) / cfg_.combinations[combo_].id(combo_), stem, std::move(log)});
    trace_ = InputTrace{};
    rows_.clear();

    if(practice)
    {
      practice_.push_back({stem, true, outcome});
      ++practice_index_;
    }
    else
    {
      trials_.push_back({stem, false, outcome});
      ++trial_index_;
      if(!aborted) ++kept_in_block_;
    }
    pause_left_ = std::max<std::int64_t>(1, std::llround(cfg_.inter_trial_pause * 1000.0));

    if(!practice && kept_in_block_ >= cfg_.combinations[combo_].trials)
    {
      enqueue(TextWriteJob{session_dir(cfg_) / cfg_.combinations[combo_].id(combo_) / "manifest.json",
                           combination_manifest(cfg_, combo_, mapping_, trials_, practice_).dump(2) + "\n"});
      enter_combination(combo_ + 1);
    }
  }

  void enqueue(PersistJob job)
  {
    backlog_.push_back(std::move(job));
    flush_backlog();
  }

  void flush_backlog()
  {
    while(!backlog_.empty() && submit_(backlog_.front())) backlog_.pop_front();
  }

  SessionConfig cfg_;
  std::function<bool(PersistJob &)> submit_;
  std::deque<PersistJob> backlog_;

  Stage stage_ = Stage::Idle;
  std::size_t combo_ = 0;
  MappingSetup mapping_;
  std::optional<TrialRunner> runner_;
  InputTrace trace_;
  std::vector<LogRow> rows_;
  std::vector<TrialEntry> trials_, practice_;
  std::size_t trial_index_ = 0;
  std::size_t practice_index_ = 0;
  int kept_in_block_ = 0;
  std::int64_t pause_left_ = 0;

  std::int64_t tick_ = 0;
  int clients_ = 0;
  double tilt_ = 0.0;
  std::optional<std::int64_t> last_input_ms_;
  std::int64_t trial_overruns_ = 0;
  std::int64_t overruns_total_ = 0;
};

} // namespace tiltop
