#include "dws/replay.hpp"

#include <ostream>

#include "dws/errors.hpp"
#include "dws/trajectory_log.hpp"

namespace dws {

namespace {

bool consecutive(const Transition& a, const Transition& b) {
  return a.episode_id == b.episode_id && b.step_index == a.step_index + 1;
}

}  // namespace

ReplayStore::ReplayStore(std::size_t capacity) : ring_(capacity) {
  if (capacity == 0) throw ParameterError("replay capacity must be positive");
}

std::vector<Transition> ReplayStore::sample_uniform(std::size_t batch, RngStream& rng) const {
  if (ring_.empty()) throw AvailabilityError("sample_uniform on an empty replay store");
  std::vector<Transition> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) out.push_back(ring_[rng.index(ring_.size())]);
  return out;
}

WindowStore::WindowStore(std::size_t capacity) : ring_(capacity) {
  if (capacity == 0) throw ParameterError("window capacity must be positive");
}

std::vector<std::size_t> WindowStore::valid_window_starts(int h) const {
  if (h < 1) throw ParameterError("window length h must be >= 1");
  std::vector<std::size_t> starts;
  const std::size_t n = ring_.size();
  const auto len = static_cast<std::size_t>(h);
  if (n < len) return starts;
  // run = length of the contiguous run ending at position i
  std::size_t run = 0;
  for (std::size_t i = 0; i < n; ++i) {
    run = (i > 0 && consecutive(ring_[i - 1], ring_[i]) && !ring_[i - 1].d) ? run + 1 : 1;
    if (run >= len) starts.push_back(i + 1 - len);
  }
  return starts;
}

std::vector<std::size_t> WindowStore::valid_pair_positions() const {
  std::vector<std::size_t> pos;
  for (std::size_t i = 1; i < ring_.size(); ++i)
    if (consecutive(ring_[i - 1], ring_[i]) && !ring_[i - 1].d) pos.push_back(i);
  return pos;
}

WindowSegment WindowStore::segment_at(std::size_t start, int h) const {
  WindowSegment seg;
  seg.transitions.reserve(static_cast<std::size_t>(h));
  bool valid = start + static_cast<std::size_t>(h) <= ring_.size();
  bool any_terminal = false;
  for (int k = 0; valid && k < h; ++k) {
    const Transition& t = ring_[start + static_cast<std::size_t>(k)];
    if (k > 0 && (!consecutive(seg.transitions.back(), t) || seg.transitions.back().d)) valid = false;
    any_terminal = any_terminal || t.d;
    seg.transitions.push_back(t);
  }
  seg.z = valid;
  seg.m = valid && !any_terminal;
  return seg;
}

std::vector<WindowSegment> WindowStore::sample_windows(int h, std::size_t batch, RngStream& rng) const {
  const auto starts = valid_window_starts(h);
  std::vector<WindowSegment> out;
  if (starts.empty()) return out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) out.push_back(segment_at(starts[rng.index(starts.size())], h));
  return out;
}

std::vector<StatePair> WindowStore::adjacent_pairs(std::size_t batch, RngStream& rng) const {
  const auto pos = valid_pair_positions();
  std::vector<StatePair> out;
  if (pos.empty()) return out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t p = pos[rng.index(pos.size())];
    out.push_back({ring_[p - 1].s, ring_[p].s});
  }
  return out;
}

DualBuffer::DualBuffer(std::size_t replay_capacity, std::size_t window_capacity)
    : replay_(replay_capacity), window_(window_capacity) {}

void DualBuffer::push(const Transition& t) {
  auto it = last_step_.find(t.episode_id);
  if (it != last_step_.end() && t.step_index <= it->second)
    throw OrderingError("episode " + std::to_string(t.episode_id) + ": step " + std::to_string(t.step_index) +
                        " pushed after step " + std::to_string(it->second));
  last_step_[t.episode_id] = t.step_index;
  replay_.push(t);
  window_.push(t);
}

void dump_window_store_csv(std::ostream& out, const WindowStore& store) {
  if (store.size() == 0) return;
  TrajectoryLog log;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Transition& t = store[i];
    TrajectoryRow row;
    row.episode = t.episode_id;
    row.t = t.step_index;
    row.obs = t.s;
    row.action = t.u;
    row.executed = t.u;
    row.reward = t.r;
    row.done = t.d || t.reason != DoneReason::none;
    row.done_reason = t.reason;
    log.push_back(std::move(row));
  }
  write_trajectory_csv(out, log);
}

}  // namespace dws
