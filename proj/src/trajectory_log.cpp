#include "dws/trajectory_log.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "dws/errors.hpp"

namespace dws {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, std::size_t row) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("row " + std::to_string(row) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

void write_trajectory_csv(std::ostream& out, const TrajectoryLog& log) {
  if (log.empty()) return;
  const auto& first = log.front();
  out << "episode,t";
  for (std::size_t i = 0; i < first.obs.size(); ++i) out << ",obs_" << i;
  for (std::size_t i = 0; i < first.action.size(); ++i) out << ",action_" << i;
  for (std::size_t i = 0; i < first.executed.size(); ++i) out << ",exec_" << i;
  out << ",reward,done,done_reason";
  std::vector<std::string> keys;
  for (const auto& row : log)
    for (const auto& [k, v] : row.info)
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  for (const auto& k : keys) out << ",info_" << k;
  out << '\n';
  for (const auto& row : log) {
    out << row.episode << ',' << row.t;
    for (double v : row.obs) out << ',' << format_double(v);
    for (double v : row.action) out << ',' << format_double(v);
    for (double v : row.executed) out << ',' << format_double(v);
    out << ',' << format_double(row.reward) << ',' << (row.done ? 1 : 0) << ',' << to_string(row.done_reason);
    for (const auto& k : keys) {
      out << ',';
      if (auto it = row.info.find(k); it != row.info.end()) out << format_double(it->second);
    }
    out << '\n';
  }
}

TrajectoryLog read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split_csv_line(line);
  std::size_t n_obs = 0, n_act = 0, n_exec = 0;
  std::vector<std::string> info_keys;
  for (const auto& h : header) {
    if (h.rfind("obs_", 0) == 0) ++n_obs;
    else if (h.rfind("action_", 0) == 0) ++n_act;
    else if (h.rfind("exec_", 0) == 0) ++n_exec;
    else if (h.rfind("info_", 0) == 0) info_keys.push_back(h.substr(5));
  }
  const std::size_t fixed = 2 + n_obs + n_act + n_exec + 3;
  if (header.size() != fixed + info_keys.size() || header[0] != "episode" || header[1] != "t")
    throw ParseError("row 0: unexpected trajectory header");

  TrajectoryLog log;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw ParseError("row " + std::to_string(row_index) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(f.size()));
    TrajectoryRow row;
    std::size_t c = 0;
    row.episode = static_cast<std::int64_t>(parse_double(f[c++], row_index));
    row.t = static_cast<std::int64_t>(parse_double(f[c++], row_index));
    for (std::size_t i = 0; i < n_obs; ++i) row.obs.push_back(parse_double(f[c++], row_index));
    for (std::size_t i = 0; i < n_act; ++i) row.action.push_back(parse_double(f[c++], row_index));
    for (std::size_t i = 0; i < n_exec; ++i) row.executed.push_back(parse_double(f[c++], row_index));
    row.reward = parse_double(f[c++], row_index);
    const std::string& done = f[c++];
    if (done != "0" && done != "1") throw ParseError("row " + std::to_string(row_index) + ": done must be 0 or 1");
    row.done = done == "1";
    try {
      row.done_reason = done_reason_from_string(f[c++]);
    } catch (const ParseError& e) {
      throw ParseError("row " + std::to_string(row_index) + ": " + e.what());
    }
    for (const auto& k : info_keys) {
      const std::string& v = f[c++];
      if (!v.empty()) row.info[k] = parse_double(v, row_index);
    }
    log.push_back(std::move(row));
  }
  return log;
}

std::vector<TrajectoryLog> split_episodes(const TrajectoryLog& log) {
  std::vector<TrajectoryLog> out;
  for (const auto& row : log) {
    if (out.empty() || out.back().back().episode != row.episode) out.emplace_back();
    out.back().push_back(row);
  }
  return out;
}

}  // namespace dws
