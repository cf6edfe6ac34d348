#include "dws/agents.hpp"

#include <algorithm>
#include <cmath>

#include "dws/errors.hpp"

namespace dws {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::vanilla: return "vanilla";
    case Algorithm::dws: return "dws";
    case Algorithm::action_chunk: return "action_chunk";
    case Algorithm::dws_eg: return "dws_eg";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "vanilla" || name == "td3") return Algorithm::vanilla;
  if (name == "dws") return Algorithm::dws;
  if (name == "action_chunk" || name == "chunk") return Algorithm::action_chunk;
  if (name == "dws_eg") return Algorithm::dws_eg;
  throw ValidationError("unknown algorithm '" + name + "'");
}

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ValidationError("field '" + field + "': " + what);
}

}  // namespace

void Hyperparams::validate() const {
  require(gamma > 0.0 && gamma < 1.0, "gamma", "must lie in (0, 1)");
  require(tau > 0.0 && tau <= 1.0, "tau", "must lie in (0, 1]");
  require(lr_actor > 0.0, "lr_actor", "must be positive");
  require(lr_critic > 0.0, "lr_critic", "must be positive");
  require(policy_noise >= 0.0, "policy_noise", "must be >= 0");
  require(noise_clip >= 0.0, "noise_clip", "must be >= 0");
  require(policy_update_frequency >= 1, "policy_update_frequency", "must be >= 1");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(replay_capacity >= 1, "replay_capacity", "must be >= 1");
  require(window_capacity >= 1, "window_capacity", "must be >= 1");
  require(explore_min >= 0.0 && explore_min <= explore_initial, "explore_min", "must lie in [0, explore_initial]");
  require(explore_decay > 0.0 && explore_decay <= 1.0, "explore_decay", "must lie in (0, 1]");
  require(!hidden.empty(), "hidden", "needs at least one layer");
  for (int w : hidden) require(w >= 1, "hidden", "widths must be positive");
  require(lambda_eg >= 0.0, "lambda_eg", "must be >= 0");
  require(window_fraction >= 0.0 && window_fraction <= 1.0, "window_fraction", "must lie in [0, 1]");
  require(warmup_steps >= 0, "warmup_steps", "must be >= 0");
  require(updates_per_step >= 1, "updates_per_step", "must be >= 1");
}

NetworkSpec actor_spec(int obs_dim, int action_dim, const std::vector<int>& hidden) {
  NetworkSpec s;
  s.layer_widths.push_back(obs_dim);
  s.layer_widths.insert(s.layer_widths.end(), hidden.begin(), hidden.end());
  s.layer_widths.push_back(action_dim);
  s.hidden_activation = Activation::relu;
  s.output_activation = Activation::tanh;
  return s;
}

NetworkSpec critic_spec(int obs_dim, int action_dim, const std::vector<int>& hidden) {
  NetworkSpec s;
  s.layer_widths.push_back(obs_dim + action_dim);
  s.layer_widths.insert(s.layer_widths.end(), hidden.begin(), hidden.end());
  s.layer_widths.push_back(1);
  s.hidden_activation = Activation::relu;
  s.output_activation = Activation::identity;
  return s;
}

Eigen::MatrixXd stack_columns(const std::vector<Observation>& obs) {
  if (obs.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(obs.front().size());
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t j = 0; j < obs.size(); ++j) {
    if (static_cast<Eigen::Index>(obs[j].size()) != rows) throw ShapeError("ragged batch");
    for (Eigen::Index i = 0; i < rows; ++i) m(i, static_cast<Eigen::Index>(j)) = obs[j][i];
  }
  return m;
}

Eigen::MatrixXd stack_state_action(const std::vector<Observation>& obs, const std::vector<Action>& actions) {
  if (obs.size() != actions.size()) throw ShapeError("state and action batches differ in length");
  const Eigen::MatrixXd s = stack_columns(obs);
  const Eigen::MatrixXd a = stack_columns(actions);
  Eigen::MatrixXd m(s.rows() + a.rows(), s.cols());
  m << s, a;
  return m;
}

namespace {

// Target-policy actions for a block of bootstrap states, drawing noise in
// row order then dimension order, exactly as bootstrap_action does per row.
Eigen::MatrixXd smoothed_targets(const Network& target_actor, const Eigen::MatrixXd& s_boot, const TargetConfig& tc,
                                 RngStream& rng) {
  const Eigen::MatrixXd out = target_actor.forward_batch(s_boot);
  Eigen::MatrixXd u(out.rows(), out.cols());
  std::vector<double> a(out.rows()), noise(out.rows(), 0.0);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      a[i] = out(i, j) * tc.a_max;
      if (tc.target_noise_sigma > 0.0) noise[i] = tc.target_noise_sigma * tc.a_max * rng.normal();
    }
    const Action sm = smoothed_action(a, noise, tc);
    for (Eigen::Index i = 0; i < out.rows(); ++i) u(i, j) = sm[i];
  }
  return u;
}

Eigen::VectorXd twin_target_q(const Network& c1, const Network& c2, const Eigen::MatrixXd& s, const Eigen::MatrixXd& u) {
  Eigen::MatrixXd x(s.rows() + u.rows(), s.cols());
  x << s, u;
  const Eigen::VectorXd q1 = c1.forward_batch(x).row(0).transpose();
  const Eigen::VectorXd q2 = c2.forward_batch(x).row(0).transpose();
  return twin_min(q1, q2);
}

double regress(Network& critic, OptimizerState& opt, const Eigen::MatrixXd& x, const Eigen::VectorXd& Y) {
  ForwardCache cache;
  const Eigen::VectorXd q = critic.forward_batch(x, &cache).row(0).transpose();
  const LossGrad lg = wsmbe_loss(q, Y);
  const Gradients g = critic.backward(cache, lg.grad.transpose());
  adam_step(critic, g.parameters, opt);
  return lg.loss;
}

}  // namespace

ActorLoss actor_objective(const Network& actor, const Network& critic, double a_max, const ActorBatch& batch,
                          double lambda_s, double lambda_eg) {
  const std::size_t B = batch.states.size();
  if (B == 0) throw AvailabilityError("actor update on an empty batch");
  if (!batch.intervened.empty() && batch.intervened.size() != B) throw ShapeError("intervention flags misaligned");
  const int d = actor.spec().output_dim();
  const double inv_b = 1.0 / static_cast<double>(B);

  ActorLoss out;
  const Eigen::MatrixXd S = stack_columns(batch.states);
  ForwardCache ac;
  const Eigen::MatrixXd A = actor.forward_batch(S, &ac);
  const Eigen::MatrixXd U = a_max * A;
  Eigen::MatrixXd X(S.rows() + U.rows(), S.cols());
  X << S, U;
  ForwardCache cc;
  const Eigen::RowVectorXd q = critic.forward_batch(X, &cc).row(0);
  out.base = -q.mean();
  const Eigen::MatrixXd dq = Eigen::MatrixXd::Constant(1, static_cast<Eigen::Index>(B), -inv_b);
  Eigen::MatrixXd dU = critic.input_gradient(cc, dq).bottomRows(d);

  if (!batch.intervened.empty()) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < B; ++i) {
      if (!batch.intervened[i]) continue;
      if (i >= batch.expert_actions.size() || batch.expert_actions[i].size() != static_cast<std::size_t>(d))
        throw DataError("row " + std::to_string(i) + " has g = 1 but no expert action");
      rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (!rows.empty() && lambda_eg > 0.0) {
      Eigen::MatrixXd XE(X.rows(), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t k = 0; k < rows.size(); ++k) {
        XE.col(static_cast<Eigen::Index>(k)).head(S.rows()) = S.col(rows[k]);
        for (int j = 0; j < d; ++j)
          XE(S.rows() + j, static_cast<Eigen::Index>(k)) = batch.expert_actions[static_cast<std::size_t>(rows[k])][j];
      }
      const Eigen::RowVectorXd qe = critic.forward_batch(XE).row(0);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const Eigen::Index i = rows[k];
        const double omega = std::max(0.0, qe[static_cast<Eigen::Index>(k)] - q[i]);
        const Eigen::VectorXd resid = U.col(i) - XE.col(static_cast<Eigen::Index>(k)).tail(d);
        out.imitation += lambda_eg * omega * resid.squaredNorm() * inv_b;
        dU.col(i) += lambda_eg * omega * 2.0 * inv_b * resid;
      }
    }
  }

  out.grad = actor.backward(ac, a_max * dU).parameters;

  if (lambda_s > 0.0 && !batch.pairs.empty()) {
    std::vector<Observation> prev, curr;
    prev.reserve(batch.pairs.size());
    curr.reserve(batch.pairs.size());
    for (const auto& p : batch.pairs) {
      prev.push_back(p.s_prev);
      curr.push_back(p.s_curr);
    }
    ForwardCache cp, cn;
    const Eigen::MatrixXd Ap = actor.forward_batch(stack_columns(prev), &cp);
    const Eigen::MatrixXd An = actor.forward_batch(stack_columns(curr), &cn);
    const Eigen::MatrixXd D = a_max * (An - Ap);
    const double inv_p = 1.0 / static_cast<double>(batch.pairs.size());
    out.smooth = lambda_s * D.colwise().squaredNorm().sum() * inv_p;
    const Eigen::MatrixXd dAn = (2.0 * lambda_s * a_max * inv_p) * D;
    out.grad += actor.backward(cn, dAn).parameters;
    out.grad += actor.backward(cp, -dAn).parameters;
  }
  out.total = out.base + out.smooth + out.imitation;
  return out;
}

Td3Agent::Td3Agent(int obs_dim, int action_dim, double a_max, Hyperparams hp, DwsConfig dws, RngStream& init,
                   bool zero_actor)
    : hp_(std::move(hp)), dws_(dws), a_max_(a_max), explore_scale_(hp_.explore_initial) {
  hp_.validate();
  if (!(a_max > 0.0)) throw ParameterError("a_max must be positive");
  const NetworkSpec as = actor_spec(obs_dim, action_dim, hp_.hidden);
  const NetworkSpec cs = critic_spec(obs_dim, action_dim, hp_.hidden);
  actor = zero_actor ? Network(as) : Network::fan_in_uniform(as, init);
  critic1 = Network::fan_in_uniform(cs, init);
  critic2 = Network::fan_in_uniform(cs, init);
  actor_target = actor;
  critic1_target = critic1;
  critic2_target = critic2;
  actor_opt = OptimizerState::for_network(actor, hp_.lr_actor);
  critic1_opt = OptimizerState::for_network(critic1, hp_.lr_critic);
  critic2_opt = OptimizerState::for_network(critic2, hp_.lr_critic);
}

TargetConfig Td3Agent::target_config() const {
  TargetConfig tc;
  tc.gamma = hp_.gamma;
  tc.h = dws_.h;
  tc.target_noise_sigma = hp_.policy_noise;
  tc.noise_clip = hp_.noise_clip;
  tc.a_max = a_max_;
  return tc;
}

Action Td3Agent::act(const Observation& s) const {
  Action a = actor.forward(s);
  for (double& x : a) x *= a_max_;
  return a;
}

Action Td3Agent::reference_with_noise(const Observation& s, std::span<const double> noise) const {
  Action a = act(s);
  if (noise.size() != a.size()) throw ShapeError("noise dimension mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::clamp(a[i] + noise[i], -a_max_, a_max_);
  return a;
}

Action Td3Agent::select_reference(const Observation& s, bool explore, RngStream& rng) {
  if (!explore) return act(s);
  Action noise(static_cast<std::size_t>(actor.spec().output_dim()));
  for (double& n : noise) n = explore_scale_ * a_max_ * rng.normal();
  Action a = reference_with_noise(s, noise);
  explore_scale_ = std::max(hp_.explore_min, explore_scale_ * hp_.explore_decay);
  ++explore_queries_;
  return a;
}

Eigen::VectorXd Td3Agent::critic_targets(const std::vector<Transition>& replay_rows,
                                         const std::vector<WindowSegment>& windows, RngStream& target_noise) const {
  const TargetConfig tc = target_config();
  std::vector<Observation> boot;
  boot.reserve(replay_rows.size() + windows.size());
  for (const auto& t : replay_rows) boot.push_back(t.s_next);
  for (const auto& w : windows) {
    if (w.transitions.empty()) throw ContractError("empty window segment");
    boot.push_back(w.transitions.back().s_next);
  }
  const Eigen::MatrixXd Sb = stack_columns(boot);
  const Eigen::MatrixXd Ub = smoothed_targets(actor_target, Sb, tc, target_noise);
  const Eigen::VectorXd qb = twin_target_q(critic1_target, critic2_target, Sb, Ub);

  Eigen::VectorXd Y(static_cast<Eigen::Index>(boot.size()));
  Eigen::Index i = 0;
  for (const auto& t : replay_rows) {
    Y[i] = gated_target(one_step_target(t.r, t.d, qb[i], tc.gamma), std::nullopt, false);
    ++i;
  }
  for (const auto& w : windows) {
    const double G = windowed_return(w, tc.gamma, qb[i]);
    Y[i] = gated_target(G, G, true);
    ++i;
  }
  return Y;
}

CriticLosses Td3Agent::critic_update(const std::vector<Transition>& replay_rows,
                                     const std::vector<WindowSegment>& windows, RngStream& target_noise) {
  const std::size_t n = replay_rows.size() + windows.size();
  if (n == 0) throw AvailabilityError("critic update on an empty batch");
  const Eigen::VectorXd Y = critic_targets(replay_rows, windows, target_noise);
  std::vector<Observation> s;
  std::vector<Action> u;
  s.reserve(n);
  u.reserve(n);
  for (const auto& t : replay_rows) {
    s.push_back(t.s);
    u.push_back(t.u);
  }
  for (const auto& w : windows) {
    s.push_back(w.transitions.front().s);
    u.push_back(w.transitions.front().u);
  }
  const Eigen::MatrixXd X = stack_state_action(s, u);
  CriticLosses out;
  out.critic1 = regress(critic1, critic1_opt, X, Y);
  out.critic2 = regress(critic2, critic2_opt, X, Y);
  out.z_ratio = static_cast<double>(windows.size()) / static_cast<double>(n);
  return out;
}

ActorLoss Td3Agent::actor_step(const ActorBatch& batch, double lambda_s, double lambda_eg) {
  ActorLoss l = actor_objective(actor, critic1, a_max_, batch, lambda_s, lambda_eg);
  adam_step(actor, l.grad, actor_opt);
  return l;
}

ActorLoss Td3Agent::actor_update(const std::vector<Observation>& states, const std::vector<StatePair>& pairs,
                                 double lambda_s) {
  ActorBatch b;
  b.states = states;
  b.pairs = pairs;
  return actor_step(b, lambda_s, 0.0);
}

ActorLoss Td3Agent::eg_actor_update(const std::vector<Transition>& rows, double lambda_eg) {
  ActorBatch b;
  for (const auto& t : rows) {
    b.states.push_back(t.s);
    b.intervened.push_back(t.intervened);
    b.expert_actions.push_back(t.expert_action);
  }
  return actor_step(b, 0.0, lambda_eg);
}

void Td3Agent::soft_update_targets() {
  soft_update(actor_target, actor, hp_.tau);
  soft_update(critic1_target, critic1, hp_.tau);
  soft_update(critic2_target, critic2, hp_.tau);
}

double chunk_target(std::span<const double> rewards, bool terminal, double q_next, double gamma) {
  if (rewards.empty()) throw ContractError("chunk with no executed steps");
  double g = 0.0, discount = 1.0;
  for (double r : rewards) {
    g += discount * r;
    discount *= gamma;
  }
  if (!terminal) g += discount * q_next;
  return g;
}

ChunkAgent::ChunkAgent(int obs_dim, int action_dim, int h, double a_max, Hyperparams hp, RngStream& init)
    : hp_(std::move(hp)), h_(h), action_dim_(action_dim), a_max_(a_max), explore_scale_(hp_.explore_initial) {
  hp_.validate();
  if (h < 1) throw ParameterError("chunk length h must be >= 1");
  if (!(a_max > 0.0)) throw ParameterError("a_max must be positive");
  const NetworkSpec as = actor_spec(obs_dim, h * action_dim, hp_.hidden);
  const NetworkSpec cs = critic_spec(obs_dim, h * action_dim, hp_.hidden);
  actor = Network::fan_in_uniform(as, init);
  critic1 = Network::fan_in_uniform(cs, init);
  critic2 = Network::fan_in_uniform(cs, init);
  actor_target = actor;
  critic1_target = critic1;
  critic2_target = critic2;
  actor_opt = OptimizerState::for_network(actor, hp_.lr_actor);
  critic1_opt = OptimizerState::for_network(critic1, hp_.lr_critic);
  critic2_opt = OptimizerState::for_network(critic2, hp_.lr_critic);
}

Action ChunkAgent::chunk_select(const Observation& s) const {
  Action a = actor.forward(s);
  for (double& x : a) x *= a_max_;
  return a;
}

Action ChunkAgent::chunk_explore(const Observation& s, RngStream& rng) {
  Action a = chunk_select(s);
  for (double& x : a) x = std::clamp(x + explore_scale_ * a_max_ * rng.normal(), -a_max_, a_max_);
  explore_scale_ = std::max(hp_.explore_min, explore_scale_ * hp_.explore_decay);
  return a;
}

CriticLosses ChunkAgent::critic_update(const std::vector<ChunkTransition>& rows, RngStream& target_noise) {
  if (rows.empty()) throw AvailabilityError("critic update on an empty batch");
  TargetConfig tc;
  tc.gamma = hp_.gamma;
  tc.h = h_;
  tc.target_noise_sigma = hp_.policy_noise;
  tc.noise_clip = hp_.noise_clip;
  tc.a_max = a_max_;
  std::vector<Observation> s, boot;
  std::vector<Action> u;
  for (const auto& r : rows) {
    if (r.chunk.size() != static_cast<std::size_t>(h_ * action_dim_)) throw ShapeError("chunk has wrong length");
    s.push_back(r.s);
    u.push_back(r.chunk);
    boot.push_back(r.s_next);
  }
  const Eigen::MatrixXd Sb = stack_columns(boot);
  const Eigen::MatrixXd Ub = smoothed_targets(actor_target, Sb, tc, target_noise);
  const Eigen::VectorXd qb = twin_target_q(critic1_target, critic2_target, Sb, Ub);
  Eigen::VectorXd Y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    Y[static_cast<Eigen::Index>(i)] = chunk_target(rows[i].rewards, rows[i].d, qb[static_cast<Eigen::Index>(i)], tc.gamma);
  const Eigen::MatrixXd X = stack_state_action(s, u);
  CriticLosses out;
  out.critic1 = regress(critic1, critic1_opt, X, Y);
  out.critic2 = regress(critic2, critic2_opt, X, Y);
  return out;
}

double ChunkAgent::actor_update(const std::vector<Observation>& states) {
  ActorBatch b;
  b.states = states;
  const ActorLoss l = actor_objective(actor, critic1, a_max_, b, 0.0, 0.0);
  adam_step(actor, l.grad, actor_opt);
  return l.total;
}

void ChunkAgent::soft_update_targets() {
  soft_update(actor_target, actor, hp_.tau);
  soft_update(critic1_target, critic1, hp_.tau);
  soft_update(critic2_target, critic2, hp_.tau);
}

DwsConfig TrainConfig::effective_dws() const {
  DwsConfig d = dws;
  if (algorithm == Algorithm::vanilla) {
    d.execution_window = false;
    d.value_window = false;
    d.smooth_reg = false;
  }
  return d;
}

void TrainConfig::validate() const {
  env.validate();
  hp.validate();
  require(episodes >= 1, "episodes", "must be >= 1");
  require(dws.h >= 1, "h", "must be >= 1");
  require(dws.lambda_s >= 0.0, "lambda_s", "must be >= 0");
  require(eval_every >= 0, "eval_every", "must be >= 0");
  require(eval_episodes >= 1, "eval_episodes", "must be >= 1");
  const bool guided = expert_guided || algorithm == Algorithm::dws_eg || force_intervention;
  require(!guided || env.has_expert(), "expert_guided", "environment " + to_string(env.name) + " has no expert");
  require(!(guided && algorithm == Algorithm::action_chunk), "expert_guided", "not supported for action_chunk");
}

namespace {

Action clip_action(Action a, double a_max) {
  for (double& x : a) x = std::clamp(x, -a_max, a_max);
  return a;
}

Action uniform_action(std::size_t n, double a_max, RngStream& rng) {
  Action a(n);
  for (double& x : a) x = rng.uniform(-a_max, a_max);
  return a;
}

StepResult guarded_step(Env& env, std::span<const double> u, std::int64_t episode, std::int64_t t) {
  try {
    return env.step(u);
  } catch (const Error& e) {
    throw RunError("episode " + std::to_string(episode) + ", step " + std::to_string(t) + ": " + e.what());
  }
}

TrajectoryRow make_row(std::int64_t episode, std::int64_t t, const Observation& s, const Action& ref,
                       const Action& u, const StepResult& sr) {
  TrajectoryRow row;
  row.episode = episode;
  row.t = t;
  row.obs = s;
  row.action = ref;
  row.executed = u;
  row.reward = sr.reward;
  row.done = sr.done;
  row.done_reason = sr.done_reason;
  row.info = sr.info;
  return row;
}

bool is_terminal(const StepResult& sr) { return sr.done && sr.done_reason != DoneReason::timeout; }

}  // namespace

TrainResult dws_train(const TrainConfig& cfg, std::uint64_t seed, const TrainHooks& hooks) {
  cfg.validate();
  if (cfg.algorithm == Algorithm::action_chunk) throw UsageError("dws_train called for the chunk baseline");
  const DwsConfig dws = cfg.effective_dws();
  const Hyperparams& hp = cfg.hp;
  const bool guided = cfg.expert_guided || cfg.algorithm == Algorithm::dws_eg || cfg.force_intervention;
  const double a_max = cfg.env.a_max;
  const auto d = static_cast<std::size_t>(cfg.env.action_dim);

  RngStream init(seed, StreamId::init), env_rng(seed, StreamId::env), explore(seed, StreamId::explore),
      tnoise(seed, StreamId::target_noise), replay_rng(seed, StreamId::replay_sampling),
      window_rng(seed, StreamId::window_sampling), pair_rng(seed, StreamId::pair_sampling);

  TrainResult res;
  res.agent.emplace(cfg.env.observation_dim(), cfg.env.action_dim, a_max, hp, dws, init, cfg.zero_actor);
  Td3Agent& agent = *res.agent;
  DualBuffer buffer(hp.replay_capacity, hp.window_capacity);
  const ExecutionProfile profile = make_profile(dws.profile, dws.execution_window ? dws.h : 1);
  const double lambda_s = dws.smooth_reg ? dws.lambda_s : 0.0;
  const auto window_rows = static_cast<std::size_t>(std::llround(static_cast<double>(hp.batch_size) * hp.window_fraction));

  auto update = [&](std::int64_t episode) {
    std::vector<WindowSegment> windows;
    if (dws.value_window && window_rows > 0) windows = buffer.window().sample_windows(dws.h, window_rows, window_rng);
    const std::vector<Transition> rows = buffer.replay().sample_uniform(hp.batch_size - windows.size(), replay_rng);
    const CriticLosses cl = agent.critic_update(rows, windows, tnoise);
    ++res.updates;
    TrainingLogRow log{res.updates, res.env_steps, episode, cl.critic1, cl.critic2, 0.0,
                       agent.exploration_scale(), cl.z_ratio};
    if (res.updates % static_cast<std::uint64_t>(hp.policy_update_frequency) == 0) {
      ActorBatch batch;
      batch.states.reserve(rows.size() + windows.size());
      for (const auto& t : rows) batch.states.push_back(t.s);
      for (const auto& w : windows) batch.states.push_back(w.transitions.front().s);
      if (lambda_s > 0.0) batch.pairs = buffer.window().adjacent_pairs(hp.batch_size, pair_rng);
      if (guided) {
        for (const auto& t : rows) {
          batch.intervened.push_back(t.intervened);
          batch.expert_actions.push_back(t.expert_action);
        }
        for (const auto& w : windows) {
          batch.intervened.push_back(w.transitions.front().intervened);
          batch.expert_actions.push_back(w.transitions.front().expert_action);
        }
      }
      log.actor_loss = agent.actor_step(batch, lambda_s, guided ? hp.lambda_eg : 0.0).total;
      agent.soft_update_targets();
    }
    if (hooks.on_log) hooks.on_log(log);
    if (hooks.on_update) hooks.on_update(agent, res.updates);
  };

  bool stop = false;
  for (int ep = 0; ep < cfg.episodes && !stop; ++ep) {
    Env env(cfg.env);
    Observation s = env.reset(env_rng.next_u64());
    WindowCache cache;
    cache.action_dim = d;
    double ret = 0.0;
    std::int64_t t = 0;
    const ReferenceProvider provider = [&](const Observation& obs) {
      ++res.policy_queries;
      if (res.env_steps < hp.warmup_steps) return uniform_action(d, a_max, explore);
      return agent.select_reference(obs, true, explore);
    };
    while (!env.done()) {
      Action ref, u;
      bool g = false;
      Action a_expert;
      if (guided) {
        const ExpertAdvice adv = env.expert();
        g = adv.intervene || cfg.force_intervention;
        if (g) a_expert = clip_action(adv.action, a_max);
      }
      if (g) {
        u = a_expert;
        ref = a_expert;
        cache.reset();
      } else if (dws.execution_window) {
        u = execute_step(cache, profile, provider, s, a_max);
        ref = *cache.reference;
      } else {
        ref = provider(s);
        u = ref;
      }
      const StepResult sr = guarded_step(env, u, ep, t);
      Transition tr;
      tr.s = s;
      tr.u = u;
      tr.r = sr.reward;
      tr.s_next = sr.observation;
      tr.d = is_terminal(sr);
      tr.episode_id = ep;
      tr.step_index = t;
      tr.reason = sr.done_reason;
      tr.intervened = g;
      if (g) tr.expert_action = a_expert;
      buffer.push(tr);
      if (hooks.on_step) hooks.on_step(make_row(ep, t, s, ref, u, sr));
      ret += sr.reward;
      s = sr.observation;
      ++t;
      ++res.env_steps;
      if (res.env_steps >= hp.warmup_steps && buffer.replay().size() >= hp.batch_size)
        for (int k = 0; k < hp.updates_per_step; ++k) update(ep);
      if (cfg.max_env_steps >= 0 && res.env_steps >= cfg.max_env_steps) {
        stop = true;
        break;
      }
    }
    res.train_returns.push_back(ret);
    if (hooks.on_episode) hooks.on_episode(ep + 1, agent.actor);
    if (cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0)
      res.evals.push_back({ep + 1, evaluate_actor(agent.actor, a_max, cfg.env, dws, cfg.eval_episodes, cfg.eval_seed)});
  }
  return res;
}

TrainResult chunk_train(const TrainConfig& cfg, std::uint64_t seed, const TrainHooks& hooks) {
  cfg.validate();
  const Hyperparams& hp = cfg.hp;
  const int h = cfg.dws.h;
  const double a_max = cfg.env.a_max;
  const auto d = static_cast<std::size_t>(cfg.env.action_dim);

  RngStream init(seed, StreamId::init), env_rng(seed, StreamId::env), explore(seed, StreamId::explore),
      tnoise(seed, StreamId::target_noise), replay_rng(seed, StreamId::replay_sampling);

  TrainResult res;
  res.chunk_agent.emplace(cfg.env.observation_dim(), cfg.env.action_dim, h, a_max, hp, init);
  ChunkAgent& agent = *res.chunk_agent;
  Ring<ChunkTransition> replay(hp.replay_capacity);

  auto update = [&](std::int64_t episode) {
    std::vector<ChunkTransition> rows;
    rows.reserve(hp.batch_size);
    for (std::size_t i = 0; i < hp.batch_size; ++i) rows.push_back(replay[replay_rng.index(replay.size())]);
    const CriticLosses cl = agent.critic_update(rows, tnoise);
    ++res.updates;
    TrainingLogRow log{res.updates, res.env_steps, episode, cl.critic1, cl.critic2, 0.0, agent.exploration_scale(), 0.0};
    if (res.updates % static_cast<std::uint64_t>(hp.policy_update_frequency) == 0) {
      std::vector<Observation> states;
      states.reserve(rows.size());
      for (const auto& r : rows) states.push_back(r.s);
      log.actor_loss = agent.actor_update(states);
      agent.soft_update_targets();
    }
    if (hooks.on_log) hooks.on_log(log);
  };

  bool stop = false;
  for (int ep = 0; ep < cfg.episodes && !stop; ++ep) {
    Env env(cfg.env);
    Observation s = env.reset(env_rng.next_u64());
    double ret = 0.0;
    std::int64_t t = 0;
    while (!env.done() && !stop) {
      ++res.policy_queries;
      const Action chunk = res.env_steps < hp.warmup_steps ? uniform_action(d * static_cast<std::size_t>(h), a_max, explore)
                                                           : agent.chunk_explore(s, explore);
      ChunkTransition ct;
      ct.s = s;
      ct.chunk = chunk;
      int executed = 0;
      for (int k = 0; k < h && !env.done(); ++k) {
        const Action u(chunk.begin() + static_cast<std::ptrdiff_t>(k * d),
                       chunk.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
        const StepResult sr = guarded_step(env, u, ep, t);
        if (hooks.on_step) hooks.on_step(make_row(ep, t, s, u, u, sr));
        ct.rewards.push_back(sr.reward);
        ct.d = is_terminal(sr);
        ret += sr.reward;
        s = sr.observation;
        ++t;
        ++res.env_steps;
        ++executed;
      }
      ct.s_next = s;
      replay.push(std::move(ct));
      for (int k = 0; k < executed; ++k) {
        if (res.env_steps >= hp.warmup_steps && replay.size() >= hp.batch_size)
          for (int j = 0; j < hp.updates_per_step; ++j) update(ep);
      }
      if (cfg.max_env_steps >= 0 && res.env_steps >= cfg.max_env_steps) stop = true;
    }
    res.train_returns.push_back(ret);
    if (hooks.on_episode) hooks.on_episode(ep + 1, agent.actor);
    if (cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0)
      res.evals.push_back({ep + 1, evaluate_chunk(agent, cfg.env, cfg.eval_episodes, cfg.eval_seed)});
  }
  return res;
}

TrainResult train(const TrainConfig& cfg, std::uint64_t seed, const TrainHooks& hooks) {
  return cfg.algorithm == Algorithm::action_chunk ? chunk_train(cfg, seed, hooks) : dws_train(cfg, seed, hooks);
}

std::vector<MetricsReport> evaluate_actor(const Network& actor, double a_max, const EnvSpec& spec,
                                          const DwsConfig& dws, int episodes, std::uint64_t eval_seed,
                                          TrajectoryLog* log) {
  if (actor.spec().input_dim() != spec.observation_dim() || actor.spec().output_dim() != spec.action_dim)
    throw CompatibilityError("actor maps " + std::to_string(actor.spec().input_dim()) + " -> " +
                             std::to_string(actor.spec().output_dim()) + " but env " + to_string(spec.name) +
                             " has observation " + std::to_string(spec.observation_dim()) + ", action " +
                             std::to_string(spec.action_dim));
  const ExecutionProfile profile = make_profile(dws.profile, dws.execution_window ? dws.h : 1);
  const ReferenceProvider provider = [&](const Observation& s) {
    Action a = actor.forward(s);
    for (double& x : a) x *= a_max;
    return a;
  };
  std::vector<MetricsReport> reports;
  for (int i = 0; i < episodes; ++i) {
    Env env(spec);
    Observation s = env.reset(eval_seed + static_cast<std::uint64_t>(i));
    WindowCache cache;
    cache.action_dim = static_cast<std::size_t>(spec.action_dim);
    TrajectoryLog ep;
    std::int64_t t = 0;
    while (!env.done()) {
      const Action u = execute_step(cache, profile, provider, s, a_max);
      const StepResult sr = guarded_step(env, u, i, t);
      ep.push_back(make_row(i, t, s, *cache.reference, u, sr));
      s = sr.observation;
      ++t;
    }
    reports.push_back(episode_report(ep, spec.dt));
    if (log) log->insert(log->end(), ep.begin(), ep.end());
  }
  return reports;
}

std::vector<MetricsReport> evaluate_chunk(const ChunkAgent& agent, const EnvSpec& spec, int episodes,
                                          std::uint64_t eval_seed, TrajectoryLog* log) {
  const auto d = static_cast<std::size_t>(spec.action_dim);
  if (static_cast<std::size_t>(agent.action_dim()) != d) throw CompatibilityError("chunk agent action dimension");
  std::vector<MetricsReport> reports;
  for (int i = 0; i < episodes; ++i) {
    Env env(spec);
    Observation s = env.reset(eval_seed + static_cast<std::uint64_t>(i));
    TrajectoryLog ep;
    std::int64_t t = 0;
    while (!env.done()) {
      const Action chunk = agent.chunk_select(s);
      for (int k = 0; k < agent.h() && !env.done(); ++k) {
        const Action u(chunk.begin() + static_cast<std::ptrdiff_t>(k * d),
                       chunk.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
        const StepResult sr = guarded_step(env, u, i, t);
        ep.push_back(make_row(i, t, s, u, u, sr));
        s = sr.observation;
        ++t;
      }
    }
    reports.push_back(episode_report(ep, spec.dt));
    if (log) log->insert(log->end(), ep.begin(), ep.end());
  }
  return reports;
}

std::vector<MetricsReport> evaluate(const TrainResult& run, const TrainConfig& cfg, int episodes, TrajectoryLog* log) {
  if (run.chunk_agent) return evaluate_chunk(*run.chunk_agent, cfg.env, episodes, cfg.eval_seed, log);
  if (!run.agent) throw UsageError("run has no trained agent");
  return evaluate_actor(run.agent->actor, cfg.env.a_max, cfg.env, cfg.effective_dws(), episodes, cfg.eval_seed, log);
}

}  // namespace dws
