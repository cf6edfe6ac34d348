#pragma once

#include <cstdint>
#include <iosfwd>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dws/envs.hpp"
#include "dws/rng.hpp"

namespace dws {

/// One executed environment step.
struct Transition {
  Observation s;
  Action u;  // executed action
  double r = 0.0;
  Observation s_next;
  bool d = false;  // terminal (timeouts are not terminal)
  std::int64_t episode_id = 0;
  std::int64_t step_index = 0;
  DoneReason reason = DoneReason::none;
  // Expert-guided runs: intervention flag g and the expert action a_E.
  bool intervened = false;
  Action expert_action;
};

/// h contiguous same-episode transitions. z: the window is valid; m: no
/// transition in it is terminal, so bootstrapping is allowed.
struct WindowSegment {
  std::vector<Transition> transitions;
  bool z = false;
  bool m = false;
};

struct StatePair {
  Observation s_prev;
  Observation s_curr;
};

// Fixed-capacity FIFO with O(1) random access; index 0 is the oldest item.
template <typename T>
class Ring {
 public:
  explicit Ring(std::size_t capacity) : capacity_(capacity) { items_.reserve(std::min<std::size_t>(capacity, 1 << 16)); }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }
  const T& operator[](std::size_t i) const { return items_[(head_ + i) % items_.size()]; }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<T> items_;
};

class ReplayStore {
 public:
  static constexpr std::size_t kDefaultCapacity = 50000;

  explicit ReplayStore(std::size_t capacity = kDefaultCapacity);

  void push(Transition t) { ring_.push(std::move(t)); }
  // i.i.d. uniform draws with replacement.
  std::vector<Transition> sample_uniform(std::size_t batch, RngStream& rng) const;

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return ring_.capacity(); }
  const Transition& operator[](std::size_t i) const { return ring_[i]; }

 private:
  Ring<Transition> ring_;
};

/// Ordered, episode-tagged store used for contiguous windows and adjacent pairs.
class WindowStore {
 public:
  static constexpr std::size_t kDefaultCapacity = 4096;

  explicit WindowStore(std::size_t capacity = kDefaultCapacity);

  void push(Transition t) { ring_.push(std::move(t)); }

  // Start positions i such that [i, i+h) is one contiguous run of one episode.
  std::vector<std::size_t> valid_window_starts(int h) const;
  // Positions i >= 1 such that (i-1, i) are consecutive in one episode and i-1 is non-terminal.
  std::vector<std::size_t> valid_pair_positions() const;

  WindowSegment segment_at(std::size_t start, int h) const;

  // Uniform with replacement over valid starts; empty when none exist.
  std::vector<WindowSegment> sample_windows(int h, std::size_t batch, RngStream& rng) const;
  std::vector<StatePair> adjacent_pairs(std::size_t batch, RngStream& rng) const;

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return ring_.capacity(); }
  const Transition& operator[](std::size_t i) const { return ring_[i]; }

 private:
  Ring<Transition> ring_;
};

/// Replay store plus window store, fed together.
class DualBuffer {
 public:
  DualBuffer(std::size_t replay_capacity = ReplayStore::kDefaultCapacity,
             std::size_t window_capacity = WindowStore::kDefaultCapacity);

  // Throws OrderingError when step_index does not increase within an episode.
  void push(const Transition& t);

  const ReplayStore& replay() const { return replay_; }
  const WindowStore& window() const { return window_; }

 private:
  ReplayStore replay_;
  WindowStore window_;
  std::unordered_map<std::int64_t, std::int64_t> last_step_;
};

// Trajectory-log schema (see trajectory_log.hpp), one row per transition.
void dump_window_store_csv(std::ostream& out, const WindowStore& store);

}  // namespace dws
