#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dws/execution_window.hpp"
#include "dws/rng.hpp"

namespace dws {

enum class EnvName { double_integrator_reach, narrow_corridor, emergency_brake };
enum class DoneReason { none, success, boundary, collision, timeout };

std::string to_string(EnvName n);
EnvName env_from_string(const std::string& name);  // also accepts "integrator", "corridor", "brake"
std::string to_string(DoneReason r);
DoneReason done_reason_from_string(const std::string& name);

struct EnvSpec {
  EnvName name = EnvName::double_integrator_reach;
  double dt = 0.05;
  int horizon = 200;
  int action_dim = 1;
  double a_max = 1.0;
  // Std of additive Gaussian noise on every observation component returned by
  // reset/step (measurement noise; the dynamics and rewards use true state).
  double obs_noise = 0.0;

  // double_integrator_reach: target ~ U[-target_range, target_range]
  double target_range = 1.0;
  double target_tolerance = 0.05;

  // narrow_corridor: lateral double integrator driven forward at a fixed speed
  double half_width = 1.0;
  double forward_speed = 5.0;
  double corridor_length = 50.0;
  double progress_weight = 0.4;    // reward per metre of progress
  double lateral_weight = 0.5;
  double initial_lateral = 0.5;    // |y0| <= initial_lateral * half_width
  double initial_lateral_speed = 0.5;
  double expert_kp = 2.0;
  double expert_kd = 1.0;
  double intervene_fraction = 0.7;  // expert intervenes when |y| > fraction * half_width

  // emergency_brake: longitudinal approach to a crossing obstacle
  double cruise_speed = 16.7;       // m/s, exact initial speed
  double brake_decel = 8.0;         // b_max, m/s^2 at full brake
  double obstacle_distance = 40.0;  // nominal initial gap
  double obstacle_jitter = 0.1;     // gap scaled by U[1 - j, 1 + j]
  double clear_time = 4.0;          // nominal time until the obstacle clears
  double clear_jitter = 0.1;
  double speed_weight = 0.1;        // reward per metre travelled
  double collision_penalty = 100.0;
  double effort_weight = 0.01;
  double ttc_threshold = 1.5;

  static EnvSpec defaults(EnvName name);
  void validate() const;
  int observation_dim() const;
  // Bound on |reward| of any single step.
  double reward_bound() const;
  bool has_expert() const { return name != EnvName::double_integrator_reach; }
};

// Physical state of whichever environment is active.
struct EnvState {
  int t = 0;
  // integrator
  double pos = 0.0, vel = 0.0, target = 0.0;
  // corridor
  double x = 0.0, y = 0.0, v_lat = 0.0;
  // brake
  double speed = 0.0, gap = 0.0, time = 0.0, clear_at = 0.0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  DoneReason done_reason = DoneReason::none;
  std::map<std::string, double> info;
};

struct ExpertAdvice {
  Action action;
  bool intervene = false;
};

// corridor: clipped PD law -kp*y - kd*v_lat, intervene when |y| > 0.7 half-width.
// brake: full brake when time-to-collision < threshold, intervene on the same rule.
ExpertAdvice expert_action(const EnvSpec& spec, const EnvState& state);

double time_to_collision(const EnvState& state);

class Env {
 public:
  explicit Env(EnvSpec spec);

  Observation reset(std::uint64_t seed);
  StepResult step(std::span<const double> action);

  const EnvSpec& spec() const { return spec_; }
  const EnvState& state() const { return state_; }
  // For tests: place the environment in an explicit state.
  void set_state(const EnvState& s);
  // Noise-free observation of the current state.
  Observation observe() const;
  bool done() const { return done_; }
  ExpertAdvice expert() const { return expert_action(spec_, state_); }

 private:
  Observation measured();

  EnvSpec spec_;
  EnvState state_;
  RngStream noise_rng_;
  bool started_ = false;
  bool done_ = false;
};

}  // namespace dws
