#include <tiltop/analysis.hpp>
#include <tiltop/session.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace tiltop;
namespace fs = std::filesystem;

namespace {

TrialSignals signals(std::vector<double> tilts, std::vector<double> forces = {})
{
  TrialSignals s;
  s.tilt_offsets = std::move(tilts);
  s.forces = forces.empty() ? std::vector<double>(s.tilt_offsets.size(), 0.0) : std::move(forces);
  return s;
}

/// A logged trial with a chosen outcome, written without simulating.
TrialLog fake_trial(double target, std::optional<double> completion, double peak_tilt)
{
  TrialLog log;
  log.setup.trial.kind = TestKind::Position;
  log.setup.trial.target_start = target;
  log.input.pilot = PilotConfig::constant(0.0);
  log.result.outcome = completion ? Outcome::Completed : Outcome::Timeout;
  log.result.completion_time = completion;
  for(int k = 0; k < 4; ++k)
  {
    TickRecord r;
    r.tick = 5 * k;
    r.tilt_offset = k == 2 ? peak_tilt : 0.0;
    r.force = force_feedback_sample(r.tilt_offset, log.setup.force);
    log.rows.push_back(r);
  }
  return log;
}

fs::path write_fixture_session(const std::string & name, const std::vector<TrialLog> & trials)
{
  const auto root = fs::temp_directory_path() / ("tiltop_analysis_" + name);
  fs::remove_all(root);
  const std::string id = "c0_ffon_FB_position";
  auto list = Json::array();
  for(std::size_t i = 0; i < trials.size(); ++i)
  {
    const std::string stem = trial_stem(false, i);
    write_trial(root / id, stem, trials[i]);
    list.push_back(Json{{"stem", stem}});
  }
  write_text_file(root / id / "manifest.json", Json{{"trials", list}}.dump(2));
  const Json manifest{{"session", name},
                      {"complete", true},
                      {"combinations", Json::array({Json{{"id", id}, {"dir", id}}})}};
  write_text_file(root / "session.json", manifest.dump(2));
  return root;
}

} // namespace

TEST(FitPerformanceLine, ExactAndFlat)
{
  const std::vector<FitPoint> exact{{3, 5}, {4, 6}, {5, 7}};
  const auto l = fit_performance_line(exact);
  EXPECT_NEAR(l.slope, 1.0, 1e-12);
  EXPECT_NEAR(l.intercept, 2.0, 1e-12);

  const std::vector<FitPoint> flat{{3, 5}, {5, 5}};
  const auto f = fit_performance_line(flat);
  EXPECT_NEAR(f.slope, 0.0, 1e-12);
  EXPECT_NEAR(f.intercept, 5.0, 1e-12);
}

TEST(FitPerformanceLine, Degenerate)
{
  const std::vector<FitPoint> same{{4, 5}, {4, 7}, {4, 9}};
  EXPECT_THROW(fit_performance_line(same), DegenerateFitError);
  const std::vector<FitPoint> one{{4, 5}};
  EXPECT_THROW(fit_performance_line(one), DegenerateFitError);
}

TEST(FitPerformanceLine, MonteCarloSlope)
{
  double sum = 0.0;
  for(std::uint64_t seed = 0; seed < 100; ++seed)
  {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> x(3, 5);
    std::normal_distribution<double> noise(0, 0.2);
    std::vector<FitPoint> pts;
    for(int i = 0; i < 20; ++i)
    {
      const double xi = x(rng);
      pts.push_back({xi, 1.5 * xi + 2.0 + noise(rng)});
    }
    sum += fit_performance_line(pts).slope;
  }
  EXPECT_NEAR(sum / 100, 1.5, 0.05);
}

TEST(FitPerformanceLine, ResidualsOrthogonal)
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x(2, 4), y(3, 30);
  for(int trial = 0; trial < 50; ++trial)
  {
    std::vector<FitPoint> pts;
    for(int i = 0; i < 20; ++i) pts.push_back({x(rng), y(rng)});
    const auto l = fit_performance_line(pts);
    double sr = 0.0, srx = 0.0;
    for(const auto & p : pts)
    {
      const double r = p.y - l(p.x);
      sr += r;
      srx += r * p.x;
    }
    EXPECT_NEAR(sr, 0.0, 1e-9);
    EXPECT_NEAR(srx, 0.0, 1e-9);
  }
}

TEST(Normalize, Examples)
{
  auto a = normalize({1.0, 2.0}, TestKind::Position);
  EXPECT_DOUBLE_EQ(a.completion_time, 6.0);
  EXPECT_DOUBLE_EQ(a.deviation, 2.0);
  auto b = normalize({0.0, 5.0}, TestKind::Velocity);
  EXPECT_DOUBLE_EQ(b.completion_time, 5.0);
  EXPECT_DOUBLE_EQ(b.deviation, 0.0);
  auto c = normalize({-0.5, 8.0}, TestKind::Position);
  EXPECT_DOUBLE_EQ(c.completion_time, 6.0);
  EXPECT_DOUBLE_EQ(c.deviation, 1.0);
  const PerformanceLine line{-0.5, 8.0};
  EXPECT_DOUBLE_EQ(c.deviation, std::abs(line(5.0) - line(3.0)));
}

TEST(TiltStats, Examples)
{
  const std::vector<TrialSignals> zero{signals({0, 0, 0})};
  const auto z = tilt_stats(zero, 1.0);
  EXPECT_EQ(z.mean, 0.0);
  EXPECT_EQ(z.std, 0.0);

  const std::vector<TrialSignals> two{signals({0.0, 0.1, 0.05}), signals({0.3, -0.2})};
  const auto t = tilt_stats(two, 1.0);
  EXPECT_NEAR(t.mean, 0.19556272348451456, 1e-9);
  EXPECT_NEAR(t.std, 0.13561469574996757, 1e-9);

  const std::vector<TrialSignals> sym{signals({0.2, -0.2, 0.1})};
  EXPECT_DOUBLE_EQ(tilt_stats(sym, 1.0).mean, std::atan(0.2));
}

TEST(TiltStats, SignFlipInvariant)
{
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 0.1);
  std::vector<TrialSignals> a, b;
  for(int t = 0; t < 6; ++t)
  {
    std::vector<double> v;
    for(int i = 0; i < 50; ++i) v.push_back(n(rng));
    a.push_back(signals(v));
    for(auto & x : v) x = -x;
    b.push_back(signals(v));
  }
  EXPECT_EQ(tilt_stats(a, 1.2).mean, tilt_stats(b, 1.2).mean);
  EXPECT_EQ(tilt_stats(a, 1.2).std, tilt_stats(b, 1.2).std);
}

TEST(ForceStats, Examples)
{
  const std::vector<TrialSignals> zero{signals({0.1}, {0.0})};
  EXPECT_EQ(force_stats(zero, 70.0, 9.81), 0.0);
  const std::vector<TrialSignals> one{signals({0, 0}, {-100.0, 20.0})};
  EXPECT_NEAR(force_stats(one, 70.0, 9.81), 0.145623998835008, 1e-9);
  const std::vector<TrialSignals> two{signals({0, 0}, {50.0, -10.0}), signals({0}, {100.0})};
  EXPECT_NEAR(force_stats(two, 70.0, 9.81), 0.10921799912625602, 1e-9);
}

TEST(Summarize, PerfectLineFixture)
{
  const auto root = write_fixture_session(
      "perfect", {fake_trial(3.0, 5.0, 0.1), fake_trial(4.0, 6.0, 0.3), fake_trial(5.0, 7.0, 0.2)});
  const auto rep = summarize(root);
  ASSERT_EQ(rep.combinations.size(), 1u);
  const auto & s = rep.combinations[0];
  ASSERT_TRUE(s.line);
  EXPECT_NEAR(s.line->slope, 1.0, 1e-12);
  EXPECT_NEAR(s.line->intercept, 2.0, 1e-12);
  EXPECT_NEAR(s.normalized->completion_time, 6.0, 1e-12);
  EXPECT_NEAR(s.normalized->deviation, 2.0, 1e-12);
  EXPECT_EQ(s.n_completed, 3u);
  EXPECT_TRUE(rep.warnings.empty());
}

TEST(Summarize, TimeoutExcludedFromFit)
{
  std::vector<TrialLog> trials;
  for(int i = 0; i < 20; ++i)
  {
    const double x = 3.0 + 0.1 * i;
    trials.push_back(fake_trial(x, i == 7 ? std::nullopt : std::optional<double>(2.0 * x + 1.0), 0.1));
  }
  const auto root = write_fixture_session("timeout", trials);
  const auto rep = summarize(root);
  const auto & s = rep.combinations.at(0);
  EXPECT_EQ(s.n_trials, 20u);
  EXPECT_EQ(s.n_completed, 19u);
  EXPECT_EQ(s.n_timeout, 1u);
  EXPECT_EQ(s.points.size(), 19u);
  EXPECT_NEAR(s.line->slope, 2.0, 1e-9);

  const std::string first = report_json(rep).dump(2) + report_csv(rep);
  const std::string second = report_json(summarize(root)).dump(2) + report_csv(summarize(root));
  EXPECT_EQ(first, second);
}

TEST(Summarize, MissingFilesBecomeWarnings)
{
  const auto root = write_fixture_session(
      "missing", {fake_trial(3.0, 5.0, 0.1), fake_trial(4.0, 6.0, 0.3), fake_trial(5.0, 7.0, 0.2)});
  fs::remove(root / "c0_ffon_FB_position" / "trial_01.csv");
  write_text_file(root / "c0_ffon_FB_position" / "trial_02.json", "{bad json");
  const auto rep = summarize(root);
  ASSERT_EQ(rep.warnings.size(), 3u); // two files plus the degenerate one-point fit
  EXPECT_NE(rep.warnings[0].find("trial_01"), std::string::npos);
  EXPECT_NE(rep.warnings[1].find("trial_02"), std::string::npos);
  EXPECT_EQ(rep.combinations.at(0).n_trials, 1u);
  EXPECT_FALSE(rep.combinations.at(0).line);
  const auto j = report_json(rep);
  EXPECT_TRUE(j["combinations"][0]["slope"].is_null());
}

TEST(Report, SvgHasPointsAndLine)
{
  PerformanceSummary s;
  s.id = "c0";
  s.points = {{3, 5}, {4, 6}, {5, 7}};
  s.line = fit_performance_line(s.points);
  const auto svg = performance_svg(s);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t circles = 0;
  for(auto p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) ++circles;
  EXPECT_EQ(circles, 3u);
  EXPECT_NE(svg.find("stroke=\"crimson\""), std::string::npos);
}
