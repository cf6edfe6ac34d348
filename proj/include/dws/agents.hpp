#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dws/approximator.hpp"
#include "dws/envs.hpp"
#include "dws/execution_window.hpp"
#include "dws/metrics.hpp"
#include "dws/replay.hpp"
#include "dws/rng.hpp"
#include "dws/value_window.hpp"

namespace dws {

enum class Algorithm { vanilla, dws, action_chunk, dws_eg };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

struct Hyperparams {
  double gamma = 0.98;
  double tau = 0.005;
  double lr_actor = 2e-4;
  double lr_critic = 3e-4;
  double policy_noise = 0.15;
  double noise_clip = 0.5;
  int policy_update_frequency = 1;
  std::size_t batch_size = 128;
  std::size_t replay_capacity = ReplayStore::kDefaultCapacity;
  std::size_t window_capacity = WindowStore::kDefaultCapacity;
  double explore_initial = 0.5;
  double explore_min = 0.005;
  double explore_decay = 0.99988;
  std::vector<int> hidden = {64, 64};
  double lambda_eg = 1.0;
  // Share of each critic batch drawn as window heads when the value window is on.
  double window_fraction = 0.5;
  // Environment steps with uniformly random reference actions before learning.
  int warmup_steps = 0;
  int updates_per_step = 1;

  void validate() const;
};

struct DwsConfig {
  int h = 3;
  double lambda_s = 0.10;
  ProfileKind profile = ProfileKind::zoh;
  bool execution_window = true;
  bool value_window = true;
  bool smooth_reg = true;
};

struct CriticLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double z_ratio = 0.0;  // share of rows trained on windowed targets
};

struct ActorLoss {
  double total = 0.0;
  double base = 0.0;        // mean(-Q1(s, pi(s)))
  double smooth = 0.0;      // lambda_s * mean ||pi(s_t) - pi(s_{t-1})||^2
  double imitation = 0.0;   // lambda_eg * mean(g * omega * ||a_E - pi(s)||^2)
  Eigen::VectorXd grad;     // w.r.t. actor parameters
};

// Actor output is a_max * tanh(.) so the network carries a tanh output layer.
NetworkSpec actor_spec(int obs_dim, int action_dim, const std::vector<int>& hidden);
NetworkSpec critic_spec(int obs_dim, int action_dim, const std::vector<int>& hidden);

// Stacks observations (and optionally actions) as columns.
Eigen::MatrixXd stack_columns(const std::vector<Observation>& obs);
Eigen::MatrixXd stack_state_action(const std::vector<Observation>& obs, const std::vector<Action>& actions);

/// Batch for the actor objective. `expert_actions[i]` is required where
/// `intervened[i]` is set; both vectors may be empty when unused.
struct ActorBatch {
  std::vector<Observation> states;
  std::vector<StatePair> pairs;
  std::vector<bool> intervened;
  std::vector<Action> expert_actions;
};

// Loss and gradient of
//   mean(-Q1(s, pi(s))) + lambda_s * mean ||pi(s_t) - pi(s_{t-1})||^2
//   + lambda_eg * mean(g * omega * ||a_E - pi(s)||^2),  omega = max(0, Q1(s, a_E) - Q1(s, pi(s)))
// with omega held constant. The smoothness term is skipped entirely when
// lambda_s == 0 or there are no pairs.
ActorLoss actor_objective(const Network& actor, const Network& critic, double a_max, const ActorBatch& batch,
                          double lambda_s, double lambda_eg);

/// TD3-style twin-critic deterministic agent with the DWS components.
class Td3Agent {
 public:
  Td3Agent(int obs_dim, int action_dim, double a_max, Hyperparams hp, DwsConfig dws, RngStream& init,
           bool zero_actor = false);

  // a_max * tanh(actor(s)), no noise.
  Action act(const Observation& s) const;

  // Deterministic action plus N(0, (scale * a_max)^2) noise when exploring,
  // clipped to [-a_max, a_max]; each exploring call decays the scale.
  Action select_reference(const Observation& s, bool explore, RngStream& rng);
  // Same with an explicit noise draw (action units); does not decay.
  Action reference_with_noise(const Observation& s, std::span<const double> noise) const;

  CriticLosses critic_update(const std::vector<Transition>& replay_rows, const std::vector<WindowSegment>& windows,
                             RngStream& target_noise);
  // Targets Y (window-aligned where z = 1) for the given rows, in order:
  // replay rows first, then window heads.
  Eigen::VectorXd critic_targets(const std::vector<Transition>& replay_rows, const std::vector<WindowSegment>& windows,
                                 RngStream& target_noise) const;

  ActorLoss actor_update(const std::vector<Observation>& states, const std::vector<StatePair>& pairs, double lambda_s);
  ActorLoss eg_actor_update(const std::vector<Transition>& rows, double lambda_eg);
  ActorLoss actor_step(const ActorBatch& batch, double lambda_s, double lambda_eg);

  void soft_update_targets();

  double exploration_scale() const { return explore_scale_; }
  std::uint64_t exploration_queries() const { return explore_queries_; }
  const Hyperparams& hyperparams() const { return hp_; }
  const DwsConfig& dws() const { return dws_; }
  double a_max() const { return a_max_; }
  TargetConfig target_config() const;

  Network actor, critic1, critic2;
  Network actor_target, critic1_target, critic2_target;
  OptimizerState actor_opt, critic1_opt, critic2_opt;

 private:
  Hyperparams hp_;
  DwsConfig dws_;
  double a_max_;
  double explore_scale_;
  std::uint64_t explore_queries_ = 0;
};

// R + gamma^L * (1 - d) * q_next for a chunk cut to L executed steps.
double chunk_target(std::span<const double> rewards, bool terminal, double q_next, double gamma);

/// Explicit action-chunking baseline: the actor emits h * d actions that are
/// executed open loop; the critic scores (s, whole chunk).
struct ChunkTransition {
  Observation s;
  Action chunk;  // h * d, including any unexecuted tail
  std::vector<double> rewards;  // L <= h realised rewards
  Observation s_next;  // state after L steps
  bool d = false;
};

class ChunkAgent {
 public:
  ChunkAgent(int obs_dim, int action_dim, int h, double a_max, Hyperparams hp, RngStream& init);

  Action chunk_select(const Observation& s) const;  // h * d, noise-free
  Action chunk_explore(const Observation& s, RngStream& rng);
  CriticLosses critic_update(const std::vector<ChunkTransition>& rows, RngStream& target_noise);
  double actor_update(const std::vector<Observation>& states);
  void soft_update_targets();

  int h() const { return h_; }
  int action_dim() const { return action_dim_; }
  double exploration_scale() const { return explore_scale_; }

  Network actor, critic1, critic2;
  Network actor_target, critic1_target, critic2_target;
  OptimizerState actor_opt, critic1_opt, critic2_opt;

 private:
  Hyperparams hp_;
  int h_;
  int action_dim_;
  double a_max_;
  double explore_scale_;
};

struct TrainConfig {
  EnvSpec env = EnvSpec::defaults(EnvName::double_integrator_reach);
  Algorithm algorithm = Algorithm::dws;
  Hyperparams hp;
  DwsConfig dws;
  bool expert_guided = false;
  bool force_intervention = false;  // g = 1 on every step
  int episodes = 50;
  std::int64_t max_env_steps = -1;   // stop early once reached (< 0: no limit)
  int eval_every = 5;                // 0 disables periodic evaluation
  int eval_episodes = 10;
  std::uint64_t eval_seed = 1000003;
  bool zero_actor = false;

  // Effective component switches after applying the algorithm.
  DwsConfig effective_dws() const;
  void validate() const;
};

struct TrainingLogRow {
  std::uint64_t update = 0;
  std::int64_t env_step = 0;
  std::int64_t episode = 0;
  double critic1_loss = 0.0;
  double critic2_loss = 0.0;
  double actor_loss = 0.0;
  double exploration_scale = 0.0;
  double z_ratio = 0.0;
};

struct EvalRecord {
  int after_episode = 0;
  std::vector<MetricsReport> reports;
};

struct TrainHooks {
  std::function<void(const Td3Agent&, std::uint64_t update)> on_update;
  std::function<void(const TrainingLogRow&)> on_log;
  std::function<void(const TrajectoryRow&)> on_step;  // training rollouts
  // After each finished training episode, with the current online actor.
  std::function<void(int episodes_done, const Network& actor)> on_episode;
};

struct TrainResult {
  std::optional<Td3Agent> agent;        // absent for the chunk baseline
  std::optional<ChunkAgent> chunk_agent;
  std::vector<EvalRecord> evals;
  std::vector<double> train_returns;
  std::int64_t env_steps = 0;
  std::uint64_t updates = 0;
  std::uint64_t policy_queries = 0;
};

// Runs the interaction/update loop for one seed. Deterministic in (config, seed).
TrainResult dws_train(const TrainConfig& cfg, std::uint64_t seed, const TrainHooks& hooks = {});
TrainResult chunk_train(const TrainConfig& cfg, std::uint64_t seed, const TrainHooks& hooks = {});
TrainResult train(const TrainConfig& cfg, std::uint64_t seed, const TrainHooks& hooks = {});

// Noise-free rollouts on evaluation seeds eval_seed + i. The execution
// window (when enabled in `dws`) is applied exactly as in training.
std::vector<MetricsReport> evaluate_actor(const Network& actor, double a_max, const EnvSpec& env,
                                          const DwsConfig& dws, int episodes, std::uint64_t eval_seed,
                                          TrajectoryLog* log = nullptr);
std::vector<MetricsReport> evaluate_chunk(const ChunkAgent& agent, const EnvSpec& env, int episodes,
                                          std::uint64_t eval_seed, TrajectoryLog* log = nullptr);
// Final evaluation of a finished run.
std::vector<MetricsReport> evaluate(const TrainResult& run, const TrainConfig& cfg, int episodes,
                                    TrajectoryLog* log = nullptr);

}  // namespace dws
