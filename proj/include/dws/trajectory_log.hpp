#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dws/envs.hpp"

namespace dws {

/// One executed step of a rollout.
///
/// CSV layout (header row, comma separated, '.' decimal point):
///   episode,t,obs_0..obs_{n-1},action_0..,exec_0..,reward,done,done_reason[,info_<key>...]
/// `action` is the policy's reference action, `exec` the action sent to the
/// environment; `done` is 0/1. Info columns are optional diagnostics such as
/// info_speed and info_gap for the braking task.
struct TrajectoryRow {
  std::int64_t episode = 0;
  std::int64_t t = 0;
  Observation obs;
  Action action;
  Action executed;
  double reward = 0.0;
  bool done = false;
  DoneReason done_reason = DoneReason::none;
  std::map<std::string, double> info;
};

using TrajectoryLog = std::vector<TrajectoryRow>;

void write_trajectory_csv(std::ostream& out, const TrajectoryLog& log);
// Throws ParseError naming the 1-based data row on malformed input.
TrajectoryLog read_trajectory_csv(std::istream& in);

// Splits a multi-episode log by episode id, preserving order.
std::vector<TrajectoryLog> split_episodes(const TrajectoryLog& log);

std::string format_double(double v);

}  // namespace dws
