/**
 * @file experiment.hpp
 * @brief Target-tracking trials: randomized trial generation, the per-tick
 *        task state machine and the 200 Hz log record.
 *
 * A trial runs on a 1 ms tick grid. Tick k covers [k dt, (k+1) dt):
 *
 *   countdown  robot frozen, inputs ignored
 *   tracking   tilt -> mapping -> CoP clamp -> LIP step -> force -> dwell
 *   dwell      as tracking, robot CoM currently inside the target
 *
 * and ends completed (dwell held long enough), timeout, or fault (non-finite
 * state). Every 5th tick is logged; a row carries the state at the start of
 * its tick together with the CoP and tilt applied during that tick.
 */
#pragma once

#include <tiltop/error.hpp>
#include <tiltop/lip.hpp>
#include <tiltop/mappings.hpp>
#include <tiltop/pilot.hpp>
#include <tiltop/rng.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tiltop {

enum class TestKind
{
  Position,
  Velocity
};

inline std::string_view to_string(TestKind k) { return k == TestKind::Position ? "position" : "velocity"; }

inline TestKind test_kind_from_string(std::string_view s)
{
  if(s == "position") return TestKind::Position;
  if(s == "velocity") return TestKind::Velocity;
  throw ConfigError("unknown test kind '" + std::string(s) + "'");
}

/// Target ranges of the two tests.
struct TestRanges
{
  static constexpr double position_min = 3.0, position_max = 5.0;
  static constexpr double velocity_start_min = 1.0, velocity_start_max = 2.0;
  static constexpr double velocity_min = 2.0, velocity_max = 4.0;
  static constexpr double practice_velocity = 4.0;
};

struct TrialConfig
{
  TestKind kind = TestKind::Position;
  double target_start = 4.0;      ///< [m]
  double target_velocity = 0.0;   ///< [m/s], 0 for position tests
  double countdown = 3.0;         ///< [s]
  double dwell_required = 3.0;    ///< [s]
  double target_half_width = 0.25;///< [m]
  double timeout = 60.0;          ///< [s], measured from trial start
  std::uint64_t seed = 0;
  bool practice = false;

  void validate() const
  {
    constexpr double eps = 1e-12;
    if(kind == TestKind::Position)
    {
      if(target_start < TestRanges::position_min - eps || target_start > TestRanges::position_max + eps)
        throw ConfigError("TrialConfig: position target must lie in [3, 5] m");
      if(target_velocity != 0.0) throw ConfigError("TrialConfig: position target must be static");
    }
    else
    {
      if(target_start < TestRanges::velocity_start_min - eps || target_start > TestRanges::velocity_start_max + eps)
        throw ConfigError("TrialConfig: velocity target must start in [1, 2] m");
      if(target_velocity < TestRanges::velocity_min - eps || target_velocity > TestRanges::velocity_max + eps)
        throw ConfigError("TrialConfig: target velocity must lie in [2, 4] m/s");
    }
    if(!(countdown >= 0.0)) throw ConfigError("TrialConfig: countdown must be >= 0");
    if(!(dwell_required > 0.0)) throw ConfigError("TrialConfig: dwell_required must be > 0");
    if(!(target_half_width > 0.0)) throw ConfigError("TrialConfig: target_half_width must be > 0");
    if(!(timeout > countdown + dwell_required)) throw ConfigError("TrialConfig: timeout must exceed countdown + dwell");
  }

  /// Abscissa used for performance fits: distance or velocity.
  double target_metric() const { return kind == TestKind::Position ? target_start : target_velocity; }
};

/// Uniform target parameters drawn from a counter-based generator keyed by seed.
inline TrialConfig generate_trial(std::uint64_t seed, TestKind kind)
{
  const CounterRng rng(seed);
  TrialConfig c;
  c.kind = kind;
  c.seed = seed;
  if(kind == TestKind::Position)
  {
    c.target_start = rng.uniform(0, TestRanges::position_min, TestRanges::position_max);
    c.target_velocity = 0.0;
  }
  else
  {
    c.target_start = rng.uniform(0, TestRanges::velocity_start_min, TestRanges::velocity_start_max);
    c.target_velocity = rng.uniform(1, TestRanges::velocity_min, TestRanges::velocity_max);
  }
  return c;
}

/// Practice trial: random start, velocity tests fixed at practice_velocity.
inline TrialConfig generate_practice_trial(std::uint64_t seed, TestKind kind,
                                           double practice_velocity = TestRanges::practice_velocity)
{
  TrialConfig c = generate_trial(seed, kind);
  if(kind == TestKind::Velocity) c.target_velocity = practice_velocity;
  c.practice = true;
  return c;
}

inline double target_position(const TrialConfig & cfg, double t_since_countdown_end)
{
  if(cfg.kind == TestKind::Position) return cfg.target_start;
  return cfg.target_start + cfg.target_velocity * std::max(t_since_countdown_end, 0.0);
}

inline double target_velocity_at(const TrialConfig & cfg, double t_since_countdown_end)
{
  return (cfg.kind == TestKind::Velocity && t_since_countdown_end >= 0.0) ? cfg.target_velocity : 0.0;
}

struct MappingSetup
{
  MappingKind kind = MappingKind::FB;
  FbConfig fb;
  FfConfig ff;

  double gain() const { return kind == MappingKind::FB ? fb.k_fb : ff.k_ff; }

  void set_gain(double g)
  {
    if(kind == MappingKind::FB)
      fb.k_fb = g;
    else
      ff.k_ff = g;
  }

  void validate() const
  {
    fb.validate();
    ff.validate();
  }
};

struct HumanParams
{
  double height = 1.0; ///< [m], CoM height of the human pendulum
  double mass = 70.0;  ///< [kg]

  void validate() const
  {
    if(!(height > 0.0)) throw ConfigError("HumanParams: height must be > 0");
    if(!(mass > 0.0)) throw ConfigError("HumanParams: mass must be > 0");
  }
};

/// Everything that determines one trial's simulation.
struct TrialSetup
{
  TrialConfig trial;
  MappingSetup mapping;
  ForceFeedbackConfig force;
  bool force_feedback_on = true;
  LipParams robot = LipParams::robot_default();
  HumanParams human;
  double dt = 0.001;
  int log_decimation = 5;

  void validate() const
  {
    trial.validate();
    mapping.validate();
    force.validate();
    human.validate();
    if(!(dt > 0.0)) throw ConfigError("TrialSetup: dt must be > 0");
    if(log_decimation < 1) throw ConfigError("TrialSetup: log_decimation must be >= 1");
  }
};

enum class Phase
{
  Idle,
  Countdown,
  Tracking,
  Dwell,
  Completed,
  Timeout,
  Fault
};

inline std::string_view to_string(Phase p)
{
  switch(p)
  {
    case Phase::Idle: return "idle";
    case Phase::Countdown: return "countdown";
    case Phase::Tracking: return "tracking";
    case Phase::Dwell: return "dwell";
    case Phase::Completed: return "completed";
    case Phase::Timeout: return "timeout";
    case Phase::Fault: return "fault";
  }
  return "idle";
}

enum class Outcome
{
  Completed,
  Timeout,
  Fault
};

inline std::string_view to_string(Outcome o)
{
  switch(o)
  {
    case Outcome::Completed: return "completed";
    case Outcome::Timeout: return "timeout";
    case Outcome::Fault: return "fault";
  }
  return "fault";
}

inline Outcome outcome_from_string(std::string_view s)
{
  if(s == "completed") return Outcome::Completed;
  if(s == "timeout") return Outcome::Timeout;
  if(s == "fault") return Outcome::Fault;
  throw ConfigError("unknown outcome '" + std::string(s) + "'");
}

/// One 1 kHz tick as executed.
struct TickRecord
{
  std::int64_t tick = 0;
  Phase phase = Phase::Countdown; ///< phase during this tick
  LipState robot;                 ///< at tick start; robot.p is the CoP applied during the tick
  CommandState command;           ///< at tick start (FB); velocity applied during the tick
  double tilt_offset = 0.0;       ///< human tilt applied
  double tilt_angle = 0.0;        ///< atan(tilt / h_H)
  ForceSample force;
  bool cop_saturated = false;
  double target_x = 0.0;
};

/// Sparse log of the tick records that fall on the decimated grid.
using LogRow = TickRecord;

struct TrialResult
{
  Outcome outcome = Outcome::Timeout;
  std::optional<double> completion_time; ///< countdown end -> start of the successful dwell [s]
  std::optional<double> dwell_start_time;///< since trial start [s]
  std::optional<double> end_time;        ///< since trial start [s]
  std::int64_t ticks = 0;
  std::string fault_reason;
};

class TrialRunner
{
public:
  explicit TrialRunner(TrialSetup setup) : setup_(std::move(setup))
  {
    setup_.validate();
    omega_r_ = natural_frequency(setup_.robot);
    countdown_ticks_ = to_ticks(setup_.trial.countdown);
    dwell_ticks_required_ = to_ticks(setup_.trial.dwell_required);
    timeout_ticks_ = to_ticks(setup_.trial.timeout);
    command_ = CommandState::seeded(robot_.x);
    phase_ = countdown_ticks_ > 0 ? Phase::Countdown : Phase::Tracking;
  }

  const TrialSetup & setup() const { return setup_; }
  bool finished() const { return finished_; }
  Phase phase() const { return phase_; }
  std::int64_t tick_count() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * setup_.dt; }
  double time_since_countdown_end() const { return static_cast<double>(tick_ - countdown_ticks_) * setup_.dt; }
  const LipState & robot() const { return robot_; }
  const CommandState & command() const { return command_; }
  double last_force() const { return last_force_; }
  double last_tilt() const { return last_tilt_; }
  double target_x() const { return target_position(setup_.trial, time_since_countdown_end()); }
  double countdown_remaining() const
  {
    return std::max<double>(0.0, static_cast<double>(countdown_ticks_ - tick_) * setup_.dt);
  }
  double dwell_progress() const
  {
    if(!dwell_start_tick_) return 0.0;
    return std::min(1.0, static_cast<double>(tick_ - *dwell_start_tick_) / static_cast<double>(dwell_ticks_required_));
  }
  const TrialResult & result() const { return result_; }
  bool logs_tick(std::int64_t k) const { return k % setup_.log_decimation == 0; }

  /// Observation handed to a synthetic pilot before the next tick.
  PilotObservation observation() const
  {
    const double ts = time_since_countdown_end();
    return PilotObservation{robot_.x, robot_.x_dot, target_position(setup_.trial, ts),
                            target_velocity_at(setup_.trial, ts), last_force_, ts};
  }

  /// Execute one tick with the given human tilt. No-op once finished.
  TickRecord tick(double human_tilt)
  {
    TickRecord rec;
    rec.tick = tick_;
    rec.phase = phase_;
    rec.target_x = target_x();
    if(finished_)
    {
      rec.robot = robot_;
      rec.command = command_;
      return rec;
    }

    if(tick_ < countdown_ticks_)
    {
      // Frozen: robot at rest with the CoP under the CoM.
      rec.robot = robot_;
      rec.command = command_;
      ++tick_;
      robot_.t = time();
      if(tick_ >= countdown_ticks_) phase_ = Phase::Tracking;
      return rec;
    }

    const double tilt = human_tilt;
    double p_des = 0.0;
    if(setup_.mapping.kind == MappingKind::FB)
    {
      command_.x_dot_rcmd = fb_velocity_command(tilt, setup_.mapping.fb);
      p_des = fb_cop(robot_, command_, omega_r_, setup_.mapping.fb);
    }
    else
    {
      p_des = ff_cop(robot_.x, tilt, setup_.robot.height(), setup_.human.height, setup_.mapping.ff);
    }
    const double p = saturate_cop(robot_.x, p_des, setup_.robot);

    rec.robot = robot_;
    rec.robot.p = p;
    rec.command = command_;
    rec.tilt_offset = tilt;
    rec.tilt_angle = std::atan(tilt / setup_.human.height);
    rec.force = force_feedback_sample(tilt, setup_.force);
    rec.cop_saturated = p != p_des;

    robot_ = step(robot_, p, setup_.dt, setup_.robot);
    ++tick_;
    robot_.t = time(); // tick-count clock
    if(setup_.mapping.kind == MappingKind::FB) command_ = integrate_command(command_, setup_.dt);
    last_force_ = rec.force.force;
    last_tilt_ = tilt;

    if(!is_finite(robot_) || !std::isfinite(command_.x_rcmd))
    {
      finish(Outcome::Fault);
      result_.fault_reason = "non-finite state";
      return rec;
    }

    const bool inside = std::abs(robot_.x - target_x()) <= setup_.trial.target_half_width;
    if(inside)
    {
      if(!dwell_start_tick_) dwell_start_tick_ = tick_;
      phase_ = Phase::Dwell;
      if(tick_ - *dwell_start_tick_ >= dwell_ticks_required_)
      {
        result_.completion_time = static_cast<double>(*dwell_start_tick_ - countdown_ticks_) * setup_.dt;
        result_.dwell_start_time = static_cast<double>(*dwell_start_tick_) * setup_.dt;
        finish(Outcome::Completed);
        return rec;
      }
    }
    else
    {
      dwell_start_tick_.reset();
      phase_ = Phase::Tracking;
    }

    if(tick_ >= timeout_ticks_) finish(Outcome::Timeout);
    return rec;
  }

  /// Abort from outside (client disconnect, operator abort).
  void abort(std::string reason)
  {
    if(finished_) return;
    finish(Outcome::Fault);
    result_.fault_reason = std::move(reason);
  }

private:
  std::int64_t to_ticks(double seconds) const { return std::llround(seconds / setup_.dt); }

  void finish(Outcome o)
  {
    finished_ = true;
    result_.outcome = o;
    result_.ticks = tick_;
    result_.end_time = time();
    phase_ = o == Outcome::Completed ? Phase::Completed : o == Outcome::Timeout ? Phase::Timeout : Phase::Fault;
  }

  TrialSetup setup_;
  double omega_r_ = 0.0;
  std::int64_t countdown_ticks_ = 0;
  std::int64_t dwell_ticks_required_ = 0;
  std::int64_t timeout_ticks_ = 0;

  LipState robot_{};
  CommandState command_{};
  std::int64_t tick_ = 0;
  Phase phase_ = Phase::Countdown;
  std::optional<std::int64_t> dwell_start_tick_;
  double last_force_ = 0.0;
  double last_tilt_ = 0.0;
  bool finished_ = false;
  TrialResult result_;
};

/// Tilt changes applied by a live client, keyed by tick. Between entries the
/// last value is held.
struct InputTrace
{
  std::vector<std::pair<std::int64_t, double>> changes;
  std::optional<std::int64_t> abort_tick; ///< trial aborted before executing this tick
  std::string abort_reason;

  void record(std::int64_t tick, double tilt)
  {
    if(changes.empty() || changes.back().second != tilt) changes.emplace_back(tick, tilt);
  }

  bool operator==(const InputTrace &) const = default;
};

/// Pilot description stored with a trial; either a synthetic pilot or a
/// recorded live input trace.
struct TrialInput
{
  std::optional<PilotConfig> pilot;
  std::optional<InputTrace> trace;
};

struct TrialLog
{
  TrialSetup setup;
  TrialInput input;
  TrialResult result;
  std::vector<LogRow> rows;
  std::int64_t overruns = 0; ///< live ticks that started late
  bool overrun_flag = false;
};

/// Run a complete trial with the given per-tick tilt source. on_tick sees
/// every executed tick (1 kHz), not only the logged ones.
template<class TiltSource, class OnTick>
TrialLog run_trial_with(const TrialSetup & setup, TiltSource && source, OnTick && on_tick)
{
  TrialRunner runner(setup);
  TrialLog log;
  log.setup = runner.setup();
  while(!runner.finished())
  {
    const std::int64_t k = runner.tick_count();
    const double tilt = source(runner, k);
    TickRecord rec = runner.tick(tilt);
    on_tick(rec);
    if(runner.logs_tick(k)) log.rows.push_back(rec);
  }
  log.result = runner.result();
  return log;
}

/// Synthetic-pilot trial. The pilot is consulted every tick, including the
/// countdown (its output is ignored there).
template<class OnTick>
TrialLog run_trial(const TrialSetup & setup, const PilotConfig & pilot_cfg, OnTick && on_tick)
{
  Pilot pilot(pilot_cfg);
  auto source = [&pilot](const TrialRunner & r, std::int64_t) { return pilot.step(r.observation()); };
  TrialLog log = run_trial_with(setup, source, std::forward<OnTick>(on_tick));
  log.input.pilot = pilot_cfg;
  return log;
}

inline TrialLog run_trial(const TrialSetup & setup, const PilotConfig & pilot_cfg)
{
  return run_trial(setup, pilot_cfg, [](const TickRecord &) {});
}

/// Re-run a live trial from its recorded input trace.
inline TrialLog run_trial(const TrialSetup & setup, const InputTrace & trace)
{
  TrialRunner runner(setup);
  TrialLog log;
  log.setup = runner.setup();
  log.input.trace = trace;
  std::size_t next = 0;
  double held = 0.0;
  while(!runner.finished())
  {
    const std::int64_t k = runner.tick_count();
    if(trace.abort_tick && k >= *trace.abort_tick)
    {
      runner.abort(trace.abort_reason);
      break;
    }
    while(next < trace.changes.size() && trace.changes[next].first <= k) held = trace.changes[next++].second;
    TickRecord rec = runner.tick(held);
    if(runner.logs_tick(k)) log.rows.push_back(rec);
  }
  log.result = runner.result();
  return log;
}

} // namespace tiltop
