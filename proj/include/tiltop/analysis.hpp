/**
 * @file analysis.hpp
 * @brief Performance metrics over trial logs: completion-time best-fit lines,
 *        normalized completion time and deviation, maximum-tilt and
 *        body-weight-normalized force statistics, session reports and plots.
 */
#pragma once

#include <tiltop/error.hpp>
#include <tiltop/experiment.hpp>
#include <tiltop/json_io.hpp>
#include <tiltop/trial_io.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tiltop {

inline constexpr int kReportSchemaVersion = 1;

struct FitPoint
{
  double x = 0.0; ///< target distance [m] or velocity [m/s]
  double y = 0.0; ///< completion time [s]
};

struct PerformanceLine
{
  double slope = 0.0;
  double intercept = 0.0;

  double operator()(double x) const { return slope * x + intercept; }
};

/// Ordinary least squares. Throws DegenerateFitError with fewer than two
/// points or when every abscissa is identical.
inline PerformanceLine fit_performance_line(std::span<const FitPoint> points)
{
  if(points.size() < 2) throw DegenerateFitError("performance fit needs at least 2 points");
  const double n = static_cast<double>(points.size());
  double xm = 0.0, ym = 0.0;
  for(const auto & p : points)
  {
    xm += p.x;
    ym += p.y;
  }
  xm /= n;
  ym /= n;
  double sxx = 0.0, sxy = 0.0;
  for(const auto & p : points)
  {
    sxx += (p.x - xm) * (p.x - xm);
    sxy += (p.x - xm) * (p.y - ym);
  }
  if(!(sxx > 0.0)) throw DegenerateFitError("performance fit: all abscissae identical");
  const double slope = sxy / sxx;
  return PerformanceLine{slope, ym - slope * xm};
}

/// Evaluation range of a test: [lo, hi] with its median.
struct MetricRange
{
  double lo = 0.0;
  double median = 0.0;
  double hi = 0.0;

  static MetricRange of(TestKind kind)
  {
    if(kind == TestKind::Position) return {TestRanges::position_min, 4.0, TestRanges::position_max};
    return {TestRanges::velocity_min, 3.0, TestRanges::velocity_max};
  }

  double width() const { return hi - lo; }
};

struct NormalizedPerformance
{
  double completion_time = 0.0; ///< line value at the range median [s]
  double deviation = 0.0;       ///< |line(hi) - line(lo)| [s]
};

inline NormalizedPerformance normalize(const PerformanceLine & line, TestKind kind)
{
  const MetricRange r = MetricRange::of(kind);
  // |(s hi + b) - (s lo + b)| = |s| (hi - lo); the product form is exact.
  return NormalizedPerformance{line(r.median), std::abs(line.slope) * r.width()};
}

struct MeanStd
{
  double mean = 0.0;
  double std = 0.0; ///< sample (n - 1) standard deviation, 0 for a single value
};

inline MeanStd mean_std(std::span<const double> v)
{
  MeanStd out;
  if(v.empty()) return out;
  for(double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if(v.size() > 1)
  {
    double ss = 0.0;
    for(double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

/// Per-trial signals consumed by the tilt and force statistics.
struct TrialSignals
{
  std::vector<double> tilt_offsets; ///< x_H - p_H [m]
  std::vector<double> forces;       ///< F_HMI [N]

  static TrialSignals of(const TrialLog & log)
  {
    TrialSignals s;
    for(const auto & r : log.rows)
    {
      s.tilt_offsets.push_back(r.tilt_offset);
      s.forces.push_back(r.force.force);
    }
    return s;
  }

  static TrialSignals of(std::span<const LoggedSample> rows)
  {
    TrialSignals s;
    for(const auto & r : rows)
    {
      s.tilt_offsets.push_back(r.tilt_offset);
      s.forces.push_back(r.f_hmi);
    }
    return s;
  }
};

inline double max_abs(std::span<const double> v)
{
  double m = 0.0;
  for(double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Mean and sample std of the per-trial maximum tilt magnitude atan(|x_H - p_H| / h_H).
inline MeanStd tilt_stats(std::span<const TrialSignals> trials, double h_h)
{
  if(trials.empty()) throw Error("tilt_stats needs at least one trial");
  std::vector<double> peaks;
  peaks.reserve(trials.size());
  for(const auto & t : trials) peaks.push_back(std::atan(max_abs(t.tilt_offsets) / h_h));
  return mean_std(peaks);
}

/// Mean over trials of max |F_HMI| divided by body weight m g.
inline double force_stats(std::span<const TrialSignals> trials, double body_mass, double gravity = kGravity)
{
  if(trials.empty()) throw Error("force_stats needs at least one trial");
  std::vector<double> peaks;
  peaks.reserve(trials.size());
  for(const auto & t : trials) peaks.push_back(max_abs(t.forces) / (body_mass * gravity));
  return mean_std(peaks).mean;
}

struct PerformanceSummary
{
  std::string id;
  std::string force_feedback;
  std::string mapping;
  TestKind test = TestKind::Position;
  double gain = 0.0;
  std::optional<PerformanceLine> line;
  std::optional<NormalizedPerformance> normalized;
  std::size_t n_trials = 0;
  std::size_t n_completed = 0;
  std::size_t n_timeout = 0;
  std::size_t n_fault = 0;
  MeanStd tilt;
  double norm_force_mean = 0.0;
  std::vector<FitPoint> points; ///< completed trials only
};

struct SessionReport
{
  std::string session;
  std::vector<PerformanceSummary> combinations;
  std::vector<std::string> warnings;
};

/// Summary of one combination from already-loaded trials.
struct LoadedTrial
{
  TrialHeader header;
  TrialSignals signals;
};

inline PerformanceSummary summarize_combination(std::string id, std::span<const LoadedTrial> trials,
                                                std::vector<std::string> * warnings = nullptr)
{
  PerformanceSummary s;
  s.id = std::move(id);
  if(trials.empty())
  {
    if(warnings) warnings->push_back(s.id + ": no loadable trials");
    return s;
  }
  const TrialSetup & first = trials.front().header.setup;
  s.force_feedback = first.force_feedback_on ? "on" : "off";
  s.mapping = std::string(to_string(first.mapping.kind));
  s.test = first.trial.kind;
  s.gain = first.mapping.gain();

  std::vector<TrialSignals> signals;
  for(const auto & t : trials)
  {
    ++s.n_trials;
    signals.push_back(t.signals);
    switch(t.header.result.outcome)
    {
      case Outcome::Completed:
        ++s.n_completed;
        s.points.push_back({t.header.setup.trial.target_metric(), *t.header.result.completion_time});
        break;
      case Outcome::Timeout: ++s.n_timeout; break;
      case Outcome::Fault: ++s.n_fault; break;
    }
  }
  try
  {
    s.line = fit_performance_line(s.points);
    s.normalized = normalize(*s.line, s.test);
  }
  catch(const DegenerateFitError & e)
  {
    if(warnings) warnings->push_back(s.id + ": " + e.what());
  }
  s.tilt = tilt_stats(signals, first.human.height);
  s.norm_force_mean = force_stats(signals, first.human.mass, first.robot.gravity());
  return s;
}

namespace detail {

inline Json opt_number(const std::optional<double> & v) { return v ? Json(*v) : Json(nullptr); }

} // namespace detail

/// Load every measurement (non-practice) trial of a session directory and
/// summarize each combination. Missing or corrupt files become warnings.
inline SessionReport summarize(const std::filesystem::path & session_dir)
{
  SessionReport rep;
  const auto manifest_path = session_dir / "session.json";
  Json manifest;
  try
  {
    manifest = Json::parse(read_text_file(manifest_path));
  }
  catch(const nlohmann::json::exception & e)
  {
    throw IoError("corrupt session manifest " + manifest_path.string() + ": " + e.what());
  }
  rep.session = manifest.value("session", std::string());
  if(!manifest.value("complete", false)) rep.warnings.push_back("session manifest marked incomplete");

  for(const auto & c : manifest.at("combinations"))
  {
    const std::string id = c.at("id").get<std::string>();
    const auto combo_dir = session_dir / c.at("dir").get<std::string>();
    Json cm;
    try
    {
      cm = Json::parse(read_text_file(combo_dir / "manifest.json"));
    }
    catch(const std::exception & e)
    {
      rep.warnings.push_back(id + ": cannot read combination manifest: " + e.what());
      continue;
    }
    std::vector<LoadedTrial> trials;
    for(const auto & t : cm.at("trials"))
    {
      const auto stem = t.at("stem").get<std::string>();
      try
      {
        LoadedTrial lt;
        lt.header = read_trial_header(combo_dir / (stem + ".json"));
        lt.signals = TrialSignals::of(read_trial_rows(combo_dir / (stem + ".csv")));
        trials.push_back(std::move(lt));
      }
      catch(const std::exception & e)
      {
        rep.warnings.push_back(id + "/" + stem + ": " + e.what());
      }
    }
    rep.combinations.push_back(summarize_combination(id, trials, &rep.warnings));
  }
  return rep;
}

inline Json report_json(const SessionReport & rep)
{
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["session"] = rep.session;
  auto combos = Json::array();
  for(const auto & s : rep.combinations)
  {
    Json c;
    c["id"] = s.id;
    c["force_feedback"] = s.force_feedback;
    c["mapping"] = s.mapping;
    c["test"] = std::string(to_string(s.test));
    c["gain"] = s.gain;
    c["slope"] = detail::opt_number(s.line ? std::optional<double>(s.line->slope) : std::nullopt);
    c["intercept"] = detail::opt_number(s.line ? std::optional<double>(s.line->intercept) : std::nullopt);
    c["normalized_completion_time"] =
        detail::opt_number(s.normalized ? std::optional<double>(s.normalized->completion_time) : std::nullopt);
    c["deviation"] = detail::opt_number(s.normalized ? std::optional<double>(s.normalized->deviation) : std::nullopt);
    c["n_trials"] = s.n_trials;
    c["n_completed"] = s.n_completed;
    c["n_timeout"] = s.n_timeout;
    c["n_fault"] = s.n_fault;
    c["tilt_mean"] = s.tilt.mean;
    c["tilt_std"] = s.tilt.std;
    c["norm_force_mean"] = s.norm_force_mean;
    combos.push_back(c);
  }
  j["combinations"] = combos;
  j["warnings"] = rep.warnings;
  return j;
}

inline std::string report_csv(const SessionReport & rep)
{
  std::string out = "id,force_feedback,mapping,test,gain,slope,intercept,normalized_completion_time,deviation,"
                    "n_trials,n_completed,n_timeout,n_fault,tilt_mean,tilt_std,norm_force_mean\n";
  auto num = [](const std::optional<double> & v) { return v ? format_double(*v) : std::string(); };
  for(const auto & s : rep.combinations)
  {
    out += s.id + "," + s.force_feedback + "," + s.mapping + "," + std::string(to_string(s.test)) + ","
           + format_double(s.gain) + "," + num(s.line ? std::optional<double>(s.line->slope) : std::nullopt) + ","
           + num(s.line ? std::optional<double>(s.line->intercept) : std::nullopt) + ","
           + num(s.normalized ? std::optional<double>(s.normalized->completion_time) : std::nullopt) + ","
           + num(s.normalized ? std::optional<double>(s.normalized->deviation) : std::nullopt) + ","
           + std::to_string(s.n_trials) + "," + std::to_string(s.n_completed) + "," + std::to_string(s.n_timeout)
           + "," + std::to_string(s.n_fault) + "," + format_double(s.tilt.mean) + "," + format_double(s.tilt.std)
           + "," + format_double(s.norm_force_mean) + "\n";
  }
  return out;
}

/// Completion time vs target metric scatter with the fitted line.
inline std::string performance_svg(const PerformanceSummary & s)
{
  constexpr double W = 420, H = 320, L = 60, R = 20, T = 40, B = 50;
  const MetricRange range = MetricRange::of(s.test);
  double ymax = 1.0;
  for(const auto & p : s.points) ymax = std::max(ymax, p.y);
  if(s.line) ymax = std::max({ymax, (*s.line)(range.lo), (*s.line)(range.hi)});
  ymax = std::ceil(ymax * 1.1);
  auto sx = [&](double x) { return L + (x - range.lo) / range.width() * (W - L - R); };
  auto sy = [&](double y) { return H - B - y / ymax * (H - T - B); };
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(W) + "\" height=\"" + f(H) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + f(L) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" + s.id
         + (s.line ? "  slope " + f(s.line->slope) : std::string("  (no fit)")) + "</text>\n";
  svg += "<line x1=\"" + f(L) + "\" y1=\"" + f(H - B) + "\" x2=\"" + f(W - R) + "\" y2=\"" + f(H - B)
         + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + f(L) + "\" y1=\"" + f(T) + "\" x2=\"" + f(L) + "\" y2=\"" + f(H - B)
         + "\" stroke=\"black\"/>\n";
  for(int i = 0; i <= 4; ++i)
  {
    const double xv = range.lo + range.width() * i / 4.0;
    svg += "<text x=\"" + f(sx(xv)) + "\" y=\"" + f(H - B + 18) + "\" font-family=\"sans-serif\" font-size=\"11\""
           " text-anchor=\"middle\">" + f(xv) + "</text>\n";
    const double yv = ymax * i / 4.0;
    svg += "<text x=\"" + f(L - 6) + "\" y=\"" + f(sy(yv) + 4) + "\" font-family=\"sans-serif\" font-size=\"11\""
           " text-anchor=\"end\">" + f(yv) + "</text>\n";
  }
  svg += "<text x=\"" + f((L + W - R) / 2) + "\" y=\"" + f(H - 12) + "\" font-family=\"sans-serif\" font-size=\"12\""
         " text-anchor=\"middle\">" + (s.test == TestKind::Position ? "target position [m]" : "target velocity [m/s]")
         + "</text>\n";
  svg += "<text x=\"16\" y=\"" + f((T + H - B) / 2) + "\" font-family=\"sans-serif\" font-size=\"12\""
         " transform=\"rotate(-90 16 " + f((T + H - B) / 2) + ")\" text-anchor=\"middle\">completion time [s]</text>\n";
  for(const auto & p : s.points)
    svg += "<circle cx=\"" + f(sx(p.x)) + "\" cy=\"" + f(sy(p.y)) + "\" r=\"3\" fill=\"steelblue\"/>\n";
  if(s.line)
    svg += "<line x1=\"" + f(sx(range.lo)) + "\" y1=\"" + f(sy((*s.line)(range.lo))) + "\" x2=\"" + f(sx(range.hi))
           + "\" y2=\"" + f(sy((*s.line)(range.hi))) + "\" stroke=\"crimson\" stroke-width=\"2\"/>\n";
  svg += "</svg>\n";
  return svg;
}

} // namespace tiltop
