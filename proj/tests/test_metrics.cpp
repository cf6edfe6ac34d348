#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dws/errors.hpp"
#include "dws/execution_window.hpp"
#include "dws/metrics.hpp"
#include "dws/rng.hpp"
#include "dws/trajectory_log.hpp"

using namespace dws;

namespace {

ActionSeries scalars(const std::vector<double>& v) {
  ActionSeries s;
  for (double x : v) s.push_back({x});
  return s;
}

TrajectoryLog episode_of(const ActionSeries& executed, DoneReason end, std::int64_t id = 0) {
  TrajectoryLog log;
  for (std::size_t t = 0; t < executed.size(); ++t) {
    TrajectoryRow row;
    row.episode = id;
    row.t = static_cast<std::int64_t>(t);
    row.obs = {0.0};
    row.action = executed[t];
    row.executed = executed[t];
    row.reward = 0.5;
    if (t + 1 == executed.size()) {
      row.done_reason = end;
      row.done = end != DoneReason::none;
    }
    log.push_back(row);
  }
  return log;
}

}  // namespace

TEST(Afr, Examples) {
  EXPECT_EQ(afr(scalars({0.3, 0.3, 0.3}), Norm::l1), 0.0);
  EXPECT_EQ(afr(scalars({0, 1, 0, 1}), Norm::l1), 1.0);
  EXPECT_THROW(afr(scalars({1.0}), Norm::l2), InsufficientDataError);
  EXPECT_THROW(afr({{0.0}, {0.0, 1.0}}, Norm::l1), ShapeError);
}

TEST(Afr, HomogeneityAndNormInequalities) {
  RngStream rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + rng.index(4);
    ActionSeries a(20, Action(d));
    for (auto& x : a)
      for (auto& v : x) v = rng.uniform(-1, 1);
    const double c = rng.uniform(-3, 3);
    ActionSeries scaled = a;
    for (auto& x : scaled)
      for (auto& v : x) v *= c;
    const double l1 = afr(a, Norm::l1), l2 = afr(a, Norm::l2);
    EXPECT_NEAR(afr(scaled, Norm::l1), std::abs(c) * l1, 1e-12);
    EXPECT_LE(l2, l1 + 1e-15);
    EXPECT_LE(l1, std::sqrt(static_cast<double>(d)) * l2 + 1e-12);
  }
}

TEST(Smoothness, MeanSquaredDifference) {
  EXPECT_DOUBLE_EQ(smoothness({{0.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}}), 1.0);
}

TEST(DeltaJerk, LinearRamp) {
  const auto s = delta_and_jerk_stats(scalars({0, 0.5, 1.0, 1.5, 2.0}));
  EXPECT_EQ(s.jerk_rms, 0.0);
  EXPECT_EQ(s.jerk_p95, 0.0);
  EXPECT_EQ(s.delta_max, 0.5);
  EXPECT_THROW(delta_and_jerk_stats(scalars({0, 1})), InsufficientDataError);
}

TEST(DeltaJerk, HandTrace) {
  // a = 0 1 3 2 2 5; deltas 1 2 -1 0 3; jerks 1 -3 1 3
  const ActionSeries a = scalars({0, 1, 3, 2, 2, 5});
  const auto s = delta_and_jerk_stats(a);
  EXPECT_EQ(s.delta_max, 3.0);
  EXPECT_EQ(s.delta_p95, 3.0);
  EXPECT_DOUBLE_EQ(s.jerk_rms, std::sqrt(5.0));
  EXPECT_EQ(s.jerk_p95, 3.0);
  EXPECT_DOUBLE_EQ(afr(a, Norm::l1), 1.4);
  EXPECT_DOUBLE_EQ(smoothness(a), 3.0);
}

TEST(Percentile, NearestRank) {
  EXPECT_EQ(nearest_rank_percentile({15, 20, 35, 40, 50}, 30), 20);
  EXPECT_EQ(nearest_rank_percentile({15, 20, 35, 40, 50}, 100), 50);
  EXPECT_EQ(nearest_rank_percentile({3, 1, 2}, 50), 2);
  EXPECT_THROW(nearest_rank_percentile({}, 50), InsufficientDataError);
}

TEST(DeltaJerk, ZohRolloutHasFewNonzeroDifferences) {
  RngStream rng(6);
  for (int h = 1; h <= 4; ++h) {
    const auto p = make_profile(ProfileKind::zoh, h);
    WindowCache cache;
    ReferenceProvider fn = [&](const Observation&) { return Action{rng.uniform(-1, 1)}; };
    ActionSeries u;
    const int T = 37;
    for (int t = 0; t < T; ++t) u.push_back(execute_step(cache, p, fn, {}, 1.0));
    int nonzero = 0;
    for (int t = 1; t < T; ++t) nonzero += u[t] != u[t - 1];
    EXPECT_LE(nonzero, (T + h - 1) / h);
  }
}

TEST(ActiveWindow, Stationary) {
  const auto s = active_window_stats({4, 4, 4}, {20, 20, 20}, 0.1);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->ttc_mean, 5.0);
  EXPECT_EQ(s->acc_rms, 0.0);
  EXPECT_EQ(s->jerk_rms, 0.0);
}

TEST(ActiveWindow, EmptyMaskIsAbsent) {
  EXPECT_FALSE(active_window_stats({0.5, 0.2}, {10, 10}, 0.1).has_value());
  EXPECT_FALSE(active_window_stats({5, 5}, {0.4, 0.1}, 0.1).has_value());
  EXPECT_THROW(active_window_stats({1}, {1, 2}, 0.1), ShapeError);
  EXPECT_THROW(active_window_stats({1}, {1}, 0.0), ParameterError);
}

TEST(ActiveWindow, ConstantDeceleration) {
  std::vector<double> v, g;
  for (int t = 0; t < 6; ++t) {
    v.push_back(10.0 - t);
    g.push_back(100.0);
  }
  const auto s = active_window_stats(v, g, 1.0);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->acc_rms, 1.0);
  EXPECT_EQ(s->jerk_rms, 0.0);
  const auto fine = active_window_stats(v, g, 0.1);
  EXPECT_NEAR(fine->acc_rms, 10.0, 1e-12);
}

TEST(EpisodeReport, ZeroActions) {
  const auto r = episode_report(episode_of(scalars({0, 0, 0, 0}), DoneReason::timeout), 0.05);
  EXPECT_EQ(r.afr_l1, 0.0);
  EXPECT_EQ(r.smoothness, 0.0);
  EXPECT_EQ(r.delta_max, 0.0);
  EXPECT_EQ(r.episode_return, 2.0);
  EXPECT_EQ(r.length, 4);
  EXPECT_FALSE(r.ttc_mean_active.has_value());
}

TEST(EpisodeReport, DoneReasonMapping) {
  const auto r = episode_report(episode_of(scalars({0, 1, 0}), DoneReason::boundary), 0.05);
  EXPECT_TRUE(r.boundary);
  EXPECT_FALSE(r.success);
  EXPECT_FALSE(r.collision);
}

TEST(EpisodeReport, MalformedLogs) {
  EXPECT_THROW(episode_report({}, 0.1), ParseError);
  auto log = episode_of(scalars({0, 1, 0}), DoneReason::success);
  log[1].episode = 9;
  try {
    episode_report(log, 0.1);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  log = episode_of(scalars({0, 1, 0}), DoneReason::success);
  log[0].done = true;
  log[0].done_reason = DoneReason::collision;
  EXPECT_THROW(episode_report(log, 0.1), ParseError);
}

TEST(EpisodeReport, BrakeColumnsFromInfo) {
  auto log = episode_of(scalars({0, 0.5, 1.0}), DoneReason::success);
  const double speeds[] = {10, 9, 8};
  for (int t = 0; t < 3; ++t) log[t].info = {{"speed", speeds[t]}, {"gap", 30.0}};
  const auto r = episode_report(log, 0.1);
  ASSERT_TRUE(r.ttc_mean_active.has_value());
  EXPECT_NEAR(*r.ttc_mean_active, (3.0 + 30.0 / 9 + 30.0 / 8) / 3, 1e-12);
  EXPECT_NEAR(*r.acc_rms_active, 10.0, 1e-9);
}

// Batch aggregate against a direct per-episode recomputation.
TEST(Aggregate, MatchesRecomputation) {
  RngStream rng(12);
  std::vector<MetricsReport> reports;
  std::vector<double> afrs, returns;
  for (int e = 0; e < 20; ++e) {
    ActionSeries a;
    for (int t = 0; t < 15; ++t) a.push_back({rng.uniform(-1, 1)});
    reports.push_back(episode_report(episode_of(a, DoneReason::timeout, e), 0.05));
    double s = 0;
    for (int t = 1; t < 15; ++t) s += std::abs(a[t][0] - a[t - 1][0]);
    afrs.push_back(s / 14);
    returns.push_back(0.5 * 15);
  }
  const Aggregate agg = aggregate(reports);
  double m = 0;
  for (double x : afrs) m += x;
  m /= 20;
  double ss = 0;
  for (double x : afrs) ss += (x - m) * (x - m);
  EXPECT_NEAR(agg.mean[1], m, 1e-12);
  EXPECT_NEAR(agg.std[1], std::sqrt(ss / 19), 1e-12);
  EXPECT_EQ(agg.mean[0], 7.5);
  EXPECT_EQ(agg.std[0], 0.0);
  EXPECT_TRUE(std::isnan(agg.mean[12]));  // no brake columns
}

TEST(ReportCsv, HeaderAndSummaryRows) {
  std::vector<MetricsReport> reports(2);
  reports[0].afr_l1 = 1.0;
  reports[1].afr_l1 = 3.0;
  std::stringstream ss;
  write_report_csv(ss, reports);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line.rfind("row,return,afr_l1,afr_l2,", 0), 0u);
  std::getline(ss, line);
  std::getline(ss, line);
  std::getline(ss, line);
  EXPECT_EQ(line.rfind("mean,0,2,", 0), 0u);
  std::getline(ss, line);
  EXPECT_EQ(line.rfind("std,0,1.4142135623730951,", 0), 0u);
}

TEST(ReportInvariants, NonNegativeAndPercentileBelowMax) {
  RngStream rng(13);
  for (int e = 0; e < 50; ++e) {
    ActionSeries a;
    const int T = 3 + static_cast<int>(rng.index(30));
    for (int t = 0; t < T; ++t) a.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const auto r = episode_report(episode_of(a, DoneReason::timeout), 0.05);
    for (double v : {r.afr_l1, r.afr_l2, r.smoothness, r.jerk_rms, r.jerk_p95, r.delta_max, r.delta_p95})
      EXPECT_GE(v, 0.0);
    EXPECT_LE(r.delta_p95, r.delta_max);
    const auto s = delta_and_jerk_stats(a);
    double jmax = 0;
    for (int t = 2; t < T; ++t)
      jmax = std::max(jmax, std::hypot(a[t][0] - 2 * a[t - 1][0] + a[t - 2][0], a[t][1] - 2 * a[t - 1][1] + a[t - 2][1]));
    EXPECT_LE(s.jerk_p95, jmax + 1e-12);
    EXPECT_LE(s.jerk_rms, jmax + 1e-12);
  }
}

TEST(TrajectoryCsv, RoundTrip) {
  TrajectoryLog log = episode_of(scalars({0.1, -0.2, 0.3}), DoneReason::collision);
  log[0].info = {{"speed", 3.5}, {"gap", 12.25}};
  log[1].info = {{"speed", 3.0}, {"gap", 11.9}};
  log[2].info = {{"speed", 2.5}, {"gap", -0.1}};
  std::stringstream ss;
  write_trajectory_csv(ss, log);
  const TrajectoryLog back = read_trajectory_csv(ss);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].executed, log[i].executed);
    EXPECT_EQ(back[i].reward, log[i].reward);
    EXPECT_EQ(back[i].info, log[i].info);
    EXPECT_EQ(back[i].done_reason, log[i].done_reason);
  }
}

TEST(TrajectoryCsv, BadRowNamesIndex) {
  std::istringstream in(
      "episode,t,obs_0,action_0,exec_0,reward,done,done_reason\n"
      "0,0,0.1,0.2,0.2,1.0,0,none\n"
      "0,1,0.1,abc,0.2,1.0,1,success\n");
  try {
    read_trajectory_csv(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
}

TEST(TrajectoryCsv, SplitEpisodes) {
  TrajectoryLog log = episode_of(scalars({0, 1}), DoneReason::success, 0);
  const auto second = episode_of(scalars({2, 3, 4}), DoneReason::timeout, 1);
  log.insert(log.end(), second.begin(), second.end());
  const auto eps = split_episodes(log);
  ASSERT_EQ(eps.size(), 2u);
  EXPECT_EQ(eps[0].size(), 2u);
  EXPECT_EQ(eps[1].size(), 3u);
}
