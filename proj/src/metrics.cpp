#include "dws/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "dws/errors.hpp"

namespace dws {

namespace {

double diff_norm(const Action& a, const Action& b, Norm norm) {
  if (a.size() != b.size()) throw ShapeError("action dimension changes within a series");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += norm == Norm::l1 ? std::abs(d) : d * d;
  }
  return norm == Norm::l1 ? acc : std::sqrt(acc);
}

Action difference(const Action& a, const Action& b) {
  Action d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

double l2(const Action& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

double afr(const ActionSeries& actions, Norm norm) {
  if (actions.size() < 2) throw InsufficientDataError("AFR needs at least two actions");
  double total = 0.0;
  for (std::size_t t = 1; t < actions.size(); ++t) total += diff_norm(actions[t], actions[t - 1], norm);
  return total / static_cast<double>(actions.size() - 1);
}

double smoothness(const ActionSeries& actions) {
  if (actions.size() < 2) throw InsufficientDataError("smoothness needs at least two actions");
  double total = 0.0;
  for (std::size_t t = 1; t < actions.size(); ++t) {
    const double d = diff_norm(actions[t], actions[t - 1], Norm::l2);
    total += d * d;
  }
  return total / static_cast<double>(actions.size() - 1);
}

double nearest_rank_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InsufficientDataError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

DeltaJerkStats delta_and_jerk_stats(const ActionSeries& actions) {
  if (actions.size() < 3) throw InsufficientDataError("delta/jerk statistics need at least three actions");
  std::vector<Action> deltas;
  for (std::size_t t = 1; t < actions.size(); ++t) deltas.push_back(difference(actions[t], actions[t - 1]));
  std::vector<double> delta_norms, jerk_norms;
  for (const auto& d : deltas) delta_norms.push_back(l2(d));
  for (std::size_t t = 1; t < deltas.size(); ++t) jerk_norms.push_back(l2(difference(deltas[t], deltas[t - 1])));
  DeltaJerkStats s;
  s.delta_max = *std::max_element(delta_norms.begin(), delta_norms.end());
  s.delta_p95 = nearest_rank_percentile(delta_norms, 95.0);
  s.jerk_rms = rms(jerk_norms);
  s.jerk_p95 = nearest_rank_percentile(jerk_norms, 95.0);
  return s;
}

std::optional<ActiveWindowStats> active_window_stats(const std::vector<double>& speeds,
                                                     const std::vector<double>& gaps, double dt) {
  if (speeds.size() != gaps.size()) throw ShapeError("speed and gap series must be aligned");
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  const std::size_t n = speeds.size();
  std::vector<bool> active(n);
  std::vector<double> ttc, acc, jerk;
  for (std::size_t t = 0; t < n; ++t) {
    active[t] = gaps[t] > 0.5 && speeds[t] > 0.5;
    if (active[t]) ttc.push_back(gaps[t] / speeds[t]);
  }
  if (ttc.empty()) return std::nullopt;
  for (std::size_t t = 1; t < n; ++t) {
    const double a = (speeds[t] - speeds[t - 1]) / dt;
    if (active[t]) acc.push_back(a);
    if (t >= 2 && active[t]) {
      const double a_prev = (speeds[t - 1] - speeds[t - 2]) / dt;
      jerk.push_back((a - a_prev) / dt);
    }
  }
  ActiveWindowStats s;
  double total = 0.0;
  for (double x : ttc) total += x;
  s.ttc_mean = total / static_cast<double>(ttc.size());
  s.acc_rms = rms(acc);
  s.jerk_rms = rms(jerk);
  return s;
}

MetricsReport episode_report(const TrajectoryLog& episode, double dt) {
  if (episode.empty()) throw ParseError("row 0: empty episode log");
  MetricsReport r;
  ActionSeries executed;
  std::vector<double> speeds, gaps;
  bool physical = true;
  for (std::size_t i = 0; i < episode.size(); ++i) {
    const auto& row = episode[i];
    if (row.episode != episode.front().episode)
      throw ParseError("row " + std::to_string(i + 1) + ": episode id changes inside one episode");
    if (row.done != (row.done_reason != DoneReason::none))
      throw ParseError("row " + std::to_string(i + 1) + ": done flag disagrees with done_reason");
    if (row.done && i + 1 != episode.size())
      throw ParseError("row " + std::to_string(i + 1) + ": transition after episode end");
    r.episode_return += row.reward;
    executed.push_back(row.executed);
    auto sp = row.info.find("speed");
    auto gp = row.info.find("gap");
    if (sp != row.info.end() && gp != row.info.end()) {
      speeds.push_back(sp->second);
      gaps.push_back(gp->second);
    } else {
      physical = false;
    }
  }
  r.length = static_cast<int>(episode.size());
  if (executed.size() >= 2) {
    r.afr_l1 = afr(executed, Norm::l1);
    r.afr_l2 = afr(executed, Norm::l2);
    r.smoothness = smoothness(executed);
  }
  if (executed.size() >= 3) {
    const auto s = delta_and_jerk_stats(executed);
    r.delta_max = s.delta_max;
    r.delta_p95 = s.delta_p95;
    r.jerk_rms = s.jerk_rms;
    r.jerk_p95 = s.jerk_p95;
  } else if (executed.size() == 2) {
    r.delta_max = r.delta_p95 = std::sqrt(r.smoothness);
  }
  const DoneReason reason = episode.back().done_reason;
  r.success = reason == DoneReason::success;
  r.collision = reason == DoneReason::collision;
  r.boundary = reason == DoneReason::boundary;
  if (physical && !speeds.empty()) {
    if (auto a = active_window_stats(speeds, gaps, dt)) {
      r.ttc_mean_active = a->ttc_mean;
      r.acc_rms_active = a->acc_rms;
      r.jerk_rms_active = a->jerk_rms;
    }
  }
  return r;
}

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {
      "return",   "afr_l1",    "afr_l2",    "smoothness", "jerk_rms",        "jerk_p95",
      "delta_max", "delta_p95", "success",   "collision",  "boundary",        "length",
      "ttc_mean_active", "acc_rms_active", "jerk_rms_active"};
  return cols;
}

std::vector<double> report_values(const MetricsReport& r) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {r.episode_return, r.afr_l1,    r.afr_l2,         r.smoothness,
          r.jerk_rms,       r.jerk_p95,  r.delta_max,      r.delta_p95,
          r.success ? 1.0 : 0.0, r.collision ? 1.0 : 0.0, r.boundary ? 1.0 : 0.0,
          static_cast<double>(r.length),
          r.ttc_mean_active.value_or(nan), r.acc_rms_active.value_or(nan), r.jerk_rms_active.value_or(nan)};
}

Aggregate aggregate(const std::vector<MetricsReport>& reports) {
  const std::size_t cols = report_columns().size();
  Aggregate agg;
  agg.mean.assign(cols, std::numeric_limits<double>::quiet_NaN());
  agg.std.assign(cols, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::vector<double>> by_col(cols);
  for (const auto& r : reports) {
    const auto v = report_values(r);
    for (std::size_t c = 0; c < cols; ++c)
      if (!std::isnan(v[c])) by_col[c].push_back(v[c]);
  }
  for (std::size_t c = 0; c < cols; ++c) {
    const auto& x = by_col[c];
    if (x.empty()) continue;
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    agg.mean[c] = m;
    agg.std[c] = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
  }
  return agg;
}

void write_report_csv(std::ostream& out, const std::vector<MetricsReport>& reports) {
  auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  out << "row";
  for (const auto& c : report_columns()) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < reports.size(); ++i) {
    out << i;
    for (double v : report_values(reports[i])) out << ',' << cell(v);
    out << '\n';
  }
  const Aggregate agg = aggregate(reports);
  out << "mean";
  for (double v : agg.mean) out << ',' << cell(v);
  out << "\nstd";
  for (double v : agg.std) out << ',' << cell(v);
  out << '\n';
}

}  // namespace dws
