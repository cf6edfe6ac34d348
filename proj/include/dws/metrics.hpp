#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dws/envs.hpp"
#include "dws/trajectory_log.hpp"

namespace dws {

enum class Norm { l1, l2 };

using ActionSeries = std::vector<Action>;

// Mean over t >= 1 of ||a_t - a_{t-1}||. Needs at least two actions.
double afr(const ActionSeries& actions, Norm norm);

// Mean over t >= 1 of ||a_t - a_{t-1}||_2^2.
double smoothness(const ActionSeries& actions);

struct DeltaJerkStats {
  double delta_max = 0.0;
  double delta_p95 = 0.0;
  double jerk_rms = 0.0;
  double jerk_p95 = 0.0;
};

// Per-step units: delta_t = a_t - a_{t-1}, jerk_t = delta_t - delta_{t-1};
// statistics over Euclidean norms. Needs at least three actions.
DeltaJerkStats delta_and_jerk_stats(const ActionSeries& actions);

// Nearest-rank percentile (q in (0, 100]) of a non-empty sample.
double nearest_rank_percentile(std::vector<double> values, double q);

struct ActiveWindowStats {
  double ttc_mean = 0.0;
  double acc_rms = 0.0;
  double jerk_rms = 0.0;
};

// Active steps: gap > 0.5 and speed > 0.5. acc_t = (v_t - v_{t-1}) / dt and
// jerk_t = (acc_t - acc_{t-1}) / dt, both kept on active steps only.
// Returns nullopt when no step is active.
std::optional<ActiveWindowStats> active_window_stats(const std::vector<double>& speeds,
                                                     const std::vector<double>& gaps, double dt);

struct MetricsReport {
  double episode_return = 0.0;
  double afr_l1 = 0.0;
  double afr_l2 = 0.0;
  double smoothness = 0.0;
  double jerk_rms = 0.0;
  double jerk_p95 = 0.0;
  double delta_max = 0.0;
  double delta_p95 = 0.0;
  bool success = false;
  bool collision = false;
  bool boundary = false;
  int length = 0;
  std::optional<double> ttc_mean_active;
  std::optional<double> acc_rms_active;
  std::optional<double> jerk_rms_active;
};

// Report for one complete episode, computed on executed actions. Statistics
// that need more steps than the episode has are reported as 0. The braking
// statistics use info_speed / info_gap columns when present, with `dt` as
// the physical time step.
MetricsReport episode_report(const TrajectoryLog& episode, double dt);

// Column names of the report CSV, in order.
const std::vector<std::string>& report_columns();

struct Aggregate {
  std::vector<double> mean;
  std::vector<double> std;  // sample standard deviation (n - 1); 0 for a single row
};

std::vector<double> report_values(const MetricsReport& r);  // absent optionals -> NaN
// Column-wise mean and std, ignoring NaN entries.
Aggregate aggregate(const std::vector<MetricsReport>& reports);

// One row per report, then a "mean" and a "std" row. The first column is
// `row` (episode index or mean/std).
void write_report_csv(std::ostream& out, const std::vector<MetricsReport>& reports);

}  // namespace dws
