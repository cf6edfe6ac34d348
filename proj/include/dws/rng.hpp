#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dws {

// Named child streams of one master seed. Each stream owns an independent
// engine so that, e.g., sampling extra windows never shifts exploration noise.
enum class StreamId : std::uint64_t {
  init = 0,
  env = 1,
  explore = 2,
  target_noise = 3,
  replay_sampling = 4,
  window_sampling = 5,
  pair_sampling = 6,
  eval = 7,
  oracle = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

// Child seed k of master m: splitmix64(m + (k + 1) * 0x9E3779B97F4A7C15).
std::uint64_t child_seed(std::uint64_t master, std::uint64_t index);

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : engine_(seed) {}
  RngStream(std::uint64_t master, StreamId id)
      : engine_(child_seed(master, static_cast<std::uint64_t>(id))) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dws
