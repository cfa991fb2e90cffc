// tiltop: session runner, replay verifier, analysis and forceplate calibration.

#include <tiltop/analysis.hpp>
#include <tiltop/forceplate.hpp>
#include <tiltop/live.hpp>
#include <tiltop/session.hpp>
#include <tiltop/trial_io.hpp>

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int serve(const std::string & config_path, bool headless, std::optional<std::uint64_t> seed,
          std::optional<std::string> out, std::optional<std::string> bind)
{
  tiltop::SessionConfig cfg = tiltop::load_session_config(config_path);
  if(headless) cfg.mode = tiltop::SessionMode::Headless;
  if(seed) cfg.seed = *seed;
  if(out) cfg.output_dir = *out;
  if(bind)
  {
    const auto colon = bind->rfind(':');
    if(colon == std::string::npos) throw tiltop::ConfigError("--bind must be host:port");
    cfg.bind_address = bind->substr(0, colon);
    cfg.port = static_cast<std::uint16_t>(std::stoi(bind->substr(colon + 1)));
  }

  if(cfg.mode == tiltop::SessionMode::Headless)
  {
    const auto dir = tiltop::run_session(cfg);
    std::cout << dir.string() << "\n";
    return 0;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  tiltop::AsyncWriter writer;
  tiltop::Channel<tiltop::ClientEvent> inbound;
  tiltop::WsServer server(cfg.bind_address, cfg.port, inbound);
  std::cerr << "listening on ws://" << cfg.bind_address << ":" << server.port() << "\n";

  tiltop::LiveSession session(cfg, [&writer](tiltop::PersistJob & job) { return writer.try_submit(job); });
  const auto timing = tiltop::drive_live(
      session, inbound, [&server](tiltop::OutboundFrame f) { server.send(std::move(f)); }, g_stop, &writer);
  server.stop();

  // Drain whatever the session still holds, then stop the writer.
  while(session.backlog() > 0 && !writer.failed()) session.tick();
  writer.stop();

  std::cerr << "ticks " << timing.ticks << ", overruns " << timing.overruns << ", median jitter "
            << timing.median_jitter_ms << " ms, max jitter " << timing.max_jitter_ms << " ms\n";
  if(writer.failed())
  {
    std::cerr << "log persistence failed: " << writer.failure() << "\n";
    const auto root = tiltop::session_dir(cfg);
    try
    {
      tiltop::write_text_file(root / "session.json",
                              tiltop::session_manifest(cfg, session.combination_index(), false, writer.failure())
                                      .dump(2)
                                  + "\n");
    }
    catch(const std::exception &)
    {
    }
    return 1;
  }
  if(!session.finished())
  {
    const auto root = tiltop::session_dir(cfg);
    tiltop::write_text_file(root / "session.json",
                            tiltop::session_manifest(cfg, session.combination_index(), false, "interrupted").dump(2)
                                + "\n");
  }
  return 0;
}

int replay(const std::string & path)
{
  const auto rep = tiltop::replay_trial(path);
  if(rep.ok())
  {
    std::cout << "replay OK: " << rep.rows << " rows byte-identical\n";
    return 0;
  }
  std::cout << "replay MISMATCH: " << rep.first_difference << "\n";
  return 2;
}

int analyze(const std::string & dir, const std::string & format, bool plots)
{
  const std::filesystem::path root(dir);
  const auto rep = tiltop::summarize(root);
  const std::string json = tiltop::report_json(rep).dump(2) + "\n";
  const std::string csv = tiltop::report_csv(rep);
  tiltop::write_text_file(root / "report.json", json);
  tiltop::write_text_file(root / "report.csv", csv);
  if(plots)
  {
    std::filesystem::create_directories(root / "plots");
    for(const auto & s : rep.combinations)
      tiltop::write_text_file(root / "plots" / (s.id + ".svg"), tiltop::performance_svg(s));
  }
  std::cout << (format == "csv" ? csv : json);
  for(const auto & w : rep.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int calibrate(const std::string & samples_path, std::optional<std::string> out)
{
  const auto samples = tiltop::read_calibration_csv(samples_path);
  const auto result = tiltop::calibrate(samples);
  const std::string text = tiltop::calibration_report(result).dump(2) + "\n";
  if(out)
    tiltop::write_text_file(*out, text);
  else
    std::cout << text;
  return 0;
}

} // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Body-tilt teleoperation simulator and experiment bench"};
  app.require_subcommand(1);

  auto * serve_cmd = app.add_subcommand("serve", "run a session (live websocket or headless)");
  std::string config_path;
  bool headless = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, bind;
  serve_cmd->add_option("--config", config_path, "session config (JSON)")->required()->check(CLI::ExistingFile);
  serve_cmd->add_flag("--headless", headless, "run with synthetic pilots, as fast as possible");
  serve_cmd->add_option("--seed", seed, "override the session seed");
  serve_cmd->add_option("--out", out, "override the output directory");
  serve_cmd->add_option("--bind", bind, "override the websocket address (host:port)");

  auto * replay_cmd = app.add_subcommand("replay", "re-simulate a trial and verify byte equality");
  std::string trial_path;
  replay_cmd->add_option("trial-log", trial_path, "trial .csv or .json")->required();

  auto * analyze_cmd = app.add_subcommand("analyze", "performance report for a session directory");
  std::string session_path, format = "json";
  bool plots = false;
  analyze_cmd->add_option("session-dir", session_path)->required()->check(CLI::ExistingDirectory);
  analyze_cmd->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  analyze_cmd->add_flag("--plots", plots, "write SVG completion-time plots");

  auto * calib_cmd = app.add_subcommand("calibrate", "fit the forceplate wrench map from samples");
  std::string samples_path;
  std::optional<std::string> calib_out;
  calib_cmd->add_option("samples", samples_path, "CSV: fx,fy,fz,tx,ty,tz,f1..f6")->required();
  calib_cmd->add_option("--out", calib_out, "write the JSON report here");

  CLI11_PARSE(app, argc, argv);

  try
  {
    if(*serve_cmd) return serve(config_path, headless, seed, out, bind);
    if(*replay_cmd) return replay(trial_path);
    if(*analyze_cmd) return analyze(session_path, format, plots);
    if(*calib_cmd) return calibrate(samples_path, calib_out);
  }
  catch(const std::exception & e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
