#include "dws/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dws/errors.hpp"

namespace dws {

std::string to_string(EnvName n) {
  switch (n) {
    case EnvName::double_integrator_reach:
      return "double_integrator_reach";
    case EnvName::narrow_corridor:
      return "narrow_corridor";
    case EnvName::emergency_brake:
      return "emergency_brake";
  }
  return "?";
}

EnvName env_from_string(const std::string& name) {
  if (name == "double_integrator_reach" || name == "integrator") return EnvName::double_integrator_reach;
  if (name == "narrow_corridor" || name == "corridor") return EnvName::narrow_corridor;
  if (name == "emergency_brake" || name == "brake") return EnvName::emergency_brake;
  throw ParameterError("unknown environment '" + name + "'");
}

std::string to_string(DoneReason r) {
  switch (r) {
    case DoneReason::none:
      return "none";
    case DoneReason::success:
      return "success";
    case DoneReason::boundary:
      return "boundary";
    case DoneReason::collision:
      return "collision";
    case DoneReason::timeout:
      return "timeout";
  }
  return "?";
}

DoneReason done_reason_from_string(const std::string& name) {
  for (auto r : {DoneReason::none, DoneReason::success, DoneReason::boundary, DoneReason::collision,
                 DoneReason::timeout})
    if (to_string(r) == name) return r;
  throw ParseError("unknown done_reason '" + name + "'");
}

EnvSpec EnvSpec::defaults(EnvName name) {
  EnvSpec s;
  s.name = name;
  switch (name) {
    case EnvName::double_integrator_reach:
      s.dt = 0.05;
      s.horizon = 200;
      break;
    case EnvName::narrow_corridor:
      s.dt = 0.05;
      s.horizon = 400;
      s.a_max = 2.0;
      s.obs_noise = 0.05;
      break;
    case EnvName::emergency_brake:
      s.dt = 0.1;
      s.horizon = 80;
      s.obs_noise = 0.05;
      break;
  }
  return s;
}

void EnvSpec::validate() const {
  if (!(dt > 0.0)) throw ValidationError("env.dt must be positive");
  if (horizon < 1) throw ValidationError("env.horizon must be >= 1");
  if (!(a_max > 0.0)) throw ValidationError("env.a_max must be positive");
  if (!(obs_noise >= 0.0)) throw ValidationError("env.obs_noise must be >= 0");
  if (action_dim != 1) throw ValidationError("env.action_dim must be 1 for the bundled environments");
  if (name == EnvName::narrow_corridor && !(half_width > 0.0))
    throw ValidationError("env.half_width must be positive");
  if (name == EnvName::emergency_brake && !(cruise_speed > 0.0 && brake_decel > 0.0 && obstacle_distance > 0.0))
    throw ValidationError("env.cruise_speed, env.brake_decel and env.obstacle_distance must be positive");
}

int EnvSpec::observation_dim() const {
  return 3;
}

double EnvSpec::reward_bound() const {
  switch (name) {
    case EnvName::double_integrator_reach: {
      const double duration = horizon * dt;
      return 0.5 * a_max * duration * duration + target_range + 1.0;
    }
    case EnvName::narrow_corridor:
      return progress_weight * forward_speed * dt +
             lateral_weight * (half_width + (initial_lateral_speed + a_max * horizon * dt) * dt);
    case EnvName::emergency_brake:
      return speed_weight * cruise_speed * dt + collision_penalty + effort_weight * a_max * a_max;
  }
  return 0.0;
}

double time_to_collision(const EnvState& s) {
  if (s.speed <= 0.0) return std::numeric_limits<double>::infinity();
  return s.gap / s.speed;
}

ExpertAdvice expert_action(const EnvSpec& spec, const EnvState& s) {
  switch (spec.name) {
    case EnvName::narrow_corridor: {
      const double a = std::clamp(-spec.expert_kp * s.y - spec.expert_kd * s.v_lat, -spec.a_max, spec.a_max);
      return {{a}, std::abs(s.y) > spec.intervene_fraction * spec.half_width};
    }
    case EnvName::emergency_brake: {
      const bool danger = time_to_collision(s) < spec.ttc_threshold;
      return {{danger ? std::min(1.0, spec.a_max) : 0.0}, danger};
    }
    case EnvName::double_integrator_reach:
      break;
  }
  throw CapabilityError("environment '" + to_string(spec.name) + "' has no scripted expert");
}

Env::Env(EnvSpec spec) : spec_(spec) { spec_.validate(); }

Observation Env::reset(std::uint64_t seed) {
  RngStream rng(seed);
  state_ = EnvState{};
  switch (spec_.name) {
    case EnvName::double_integrator_reach:
      state_.target = rng.uniform(-spec_.target_range, spec_.target_range);
      break;
    case EnvName::narrow_corridor:
      state_.y = rng.uniform(-1.0, 1.0) * spec_.initial_lateral * spec_.half_width;
      state_.v_lat = rng.uniform(-1.0, 1.0) * spec_.initial_lateral_speed;
      break;
    case EnvName::emergency_brake:
      state_.speed = spec_.cruise_speed;
      state_.gap = spec_.obstacle_distance * rng.uniform(1.0 - spec_.obstacle_jitter, 1.0 + spec_.obstacle_jitter);
      state_.clear_at = spec_.clear_time * rng.uniform(1.0 - spec_.clear_jitter, 1.0 + spec_.clear_jitter);
      break;
  }
  noise_rng_ = RngStream(splitmix64(seed));
  started_ = true;
  done_ = false;
  return measured();
}

void Env::set_state(const EnvState& s) {
  state_ = s;
  started_ = true;
  done_ = false;
}

Observation Env::observe() const {
  switch (spec_.name) {
    case EnvName::double_integrator_reach:
      return {state_.pos, state_.vel, state_.target};
    case EnvName::narrow_corridor:
      return {state_.y / spec_.half_width, state_.v_lat, state_.x / spec_.corridor_length};
    case EnvName::emergency_brake:
      return {state_.speed / spec_.cruise_speed, state_.gap / spec_.obstacle_distance,
              (state_.clear_at - state_.time) / spec_.clear_time};
  }
  return {};
}

Observation Env::measured() {
  Observation o = observe();
  if (spec_.obs_noise > 0.0)
    for (double& x : o) x += spec_.obs_noise * noise_rng_.normal();
  return o;
}

StepResult Env::step(std::span<const double> action) {
  if (!started_) throw UsageError("step called before reset");
  if (done_) throw UsageError("step called after episode end");
  if (action.size() != static_cast<std::size_t>(spec_.action_dim))
    throw ShapeError("action has " + std::to_string(action.size()) + " components, expected " +
                     std::to_string(spec_.action_dim));
  const double a = std::clamp(action[0], -spec_.a_max, spec_.a_max);
  const double dt = spec_.dt;
  StepResult res;
  ++state_.t;

  switch (spec_.name) {
    case EnvName::double_integrator_reach: {
      state_.pos = state_.pos + state_.vel * dt;
      state_.vel = state_.vel + a * dt;
      const double err = std::abs(state_.pos - state_.target);
      res.reward = -err + (err < spec_.target_tolerance ? 1.0 : 0.0);
      res.info = {{"position", state_.pos}, {"error", err}};
      break;
    }
    case EnvName::narrow_corridor: {
      const double dx = spec_.forward_speed * dt;
      state_.x += dx;
      state_.y = state_.y + state_.v_lat * dt;
      state_.v_lat = state_.v_lat + a * dt;
      res.reward = spec_.progress_weight * dx - spec_.lateral_weight * std::abs(state_.y);
      if (std::abs(state_.y) > spec_.half_width) {
        res.done_reason = DoneReason::boundary;
      } else if (state_.x >= spec_.corridor_length) {
        res.done_reason = DoneReason::success;
      }
      res.info = {{"lateral", state_.y}, {"lateral_speed", state_.v_lat}};
      break;
    }
    case EnvName::emergency_brake: {
      const double v = state_.speed;
      state_.gap -= v * dt;
      state_.speed = std::clamp(v - a * spec_.brake_decel * dt, 0.0, spec_.cruise_speed);
      state_.time += dt;
      res.reward = spec_.speed_weight * v * dt - spec_.effort_weight * a * a;
      if (state_.gap <= 0.0) {
        res.reward -= spec_.collision_penalty;
        res.done_reason = DoneReason::collision;
      } else if (state_.time >= state_.clear_at - 1e-9) {
        res.done_reason = DoneReason::success;
      }
      res.info = {{"speed", state_.speed}, {"gap", state_.gap}};
      break;
    }
  }
  if (res.done_reason == DoneReason::none && state_.t >= spec_.horizon) res.done_reason = DoneReason::timeout;
  res.done = res.done_reason != DoneReason::none;
  done_ = res.done;
  res.observation = measured();
  return res;
}

}  // namespace dws
