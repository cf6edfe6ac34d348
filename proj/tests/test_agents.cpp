#include <gtest/gtest.h>

#include <cmath>

#include "dws/agents.hpp"
#include "dws/errors.hpp"

using namespace dws;

namespace {

Hyperparams small_hp() {
  Hyperparams hp;
  hp.hidden = {16, 16};
  hp.batch_size = 32;
  return hp;
}

Td3Agent make_agent(std::uint64_t seed = 1, DwsConfig dws = {}, double a_max = 1.0) {
  RngStream init(seed, StreamId::init);
  return Td3Agent(3, 1, a_max, small_hp(), dws, init);
}

std::vector<Transition> random_rows(std::size_t n, std::uint64_t seed, std::int64_t episode = 0) {
  RngStream rng(seed);
  std::vector<Transition> rows;
  for (std::size_t i = 0; i < n; ++i) {
    Transition t;
    t.s = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    t.u = {rng.uniform(-1, 1)};
    t.r = rng.uniform(-1, 1);
    t.s_next = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    t.d = rng.uniform() < 0.2;
    t.episode_id = episode;
    t.step_index = static_cast<std::int64_t>(i);
    rows.push_back(t);
  }
  return rows;
}

// Consecutive transitions of one episode, cut into overlapping windows.
std::vector<WindowSegment> windows_from(const std::vector<Transition>& rows, int h) {
  WindowStore store(rows.size());
  for (auto t : rows) {
    t.d = false;
    store.push(t);
  }
  std::vector<WindowSegment> out;
  for (std::size_t i : store.valid_window_starts(h)) out.push_back(store.segment_at(i, h));
  return out;
}

double q_of(const Network& critic, const Observation& s, const Action& u) {
  std::vector<double> x = s;
  x.insert(x.end(), u.begin(), u.end());
  return critic.forward(x)[0];
}

TrainConfig quick_config(EnvName env, Algorithm algo) {
  TrainConfig cfg;
  cfg.env = EnvSpec::defaults(env);
  cfg.algorithm = algo;
  cfg.hp = small_hp();
  cfg.episodes = 3;
  cfg.eval_every = 0;
  cfg.eval_episodes = 2;
  return cfg;
}

}  // namespace

TEST(Hyperparams, DefaultsMatchTable) {
  const Hyperparams hp;
  EXPECT_EQ(hp.gamma, 0.98);
  EXPECT_EQ(hp.tau, 0.005);
  EXPECT_EQ(hp.lr_actor, 2e-4);
  EXPECT_EQ(hp.lr_critic, 3e-4);
  EXPECT_EQ(hp.policy_noise, 0.15);
  EXPECT_EQ(hp.noise_clip, 0.5);
  EXPECT_EQ(hp.policy_update_frequency, 1);
  EXPECT_EQ(hp.batch_size, 128u);
  EXPECT_EQ(hp.replay_capacity, 50000u);
  EXPECT_EQ(hp.explore_initial, 0.5);
  EXPECT_EQ(hp.explore_min, 0.005);
  EXPECT_EQ(hp.explore_decay, 0.99988);
  const DwsConfig dws;
  EXPECT_EQ(dws.h, 3);
  EXPECT_EQ(dws.lambda_s, 0.10);
  EXPECT_EQ(dws.profile, ProfileKind::zoh);
}

TEST(Hyperparams, ValidationNamesField) {
  Hyperparams hp;
  hp.tau = 0.0;
  try {
    hp.validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'tau'"), std::string::npos);
  }
  hp = Hyperparams{};
  hp.explore_min = 0.9;
  EXPECT_THROW(hp.validate(), ValidationError);
  EXPECT_THROW(algorithm_from_string("ppo"), ValidationError);
  EXPECT_EQ(algorithm_from_string("td3"), Algorithm::vanilla);
}

TEST(Agent, SpecsAndTargets) {
  const Td3Agent a = make_agent();
  EXPECT_EQ(a.actor.spec().layer_widths, (std::vector<int>{3, 16, 16, 1}));
  EXPECT_EQ(a.actor.spec().output_activation, Activation::tanh);
  EXPECT_EQ(a.critic1.spec().layer_widths, (std::vector<int>{4, 16, 16, 1}));
  EXPECT_EQ(a.actor_target.spec(), a.actor.spec());
  EXPECT_EQ(a.critic2_target.parameters(), a.critic2.parameters());
  EXPECT_NE(a.critic1.parameters(), a.critic2.parameters());
}

TEST(SelectReference, NoExploreIsForwardPass) {
  Td3Agent a = make_agent(2, {}, 2.0);
  RngStream rng(0);
  const Observation s = {0.1, -0.3, 0.5};
  const Action u = a.select_reference(s, false, rng);
  EXPECT_EQ(u[0], 2.0 * a.actor.forward(s)[0]);
  EXPECT_EQ(a.exploration_scale(), 0.5);
  EXPECT_EQ(a.exploration_queries(), 0u);
}

TEST(SelectReference, ScaleSchedule) {
  Td3Agent a = make_agent();
  RngStream rng(0);
  const Observation s = {0, 0, 0};
  for (int n = 1; n <= 60000; ++n) {
    a.select_reference(s, true, rng);
    if (n % 5000 == 0 || n == 1) {
      const double expected = std::max(0.005, 0.5 * std::pow(0.99988, n));
      EXPECT_NEAR(a.exploration_scale(), expected, 1e-9 * expected) << n;
    }
  }
  EXPECT_EQ(a.exploration_scale(), 0.005);
}

TEST(SelectReference, ClipArithmetic) {
  Td3Agent a = make_agent();
  a.actor.parameters().setZero();
  // last bias drives the output: tanh(b) = 0.7
  a.actor.parameters()[a.actor.parameter_count() - 1] = std::atanh(0.7);
  const Observation s = {0.2, 0.2, 0.2};
  EXPECT_NEAR(a.act(s)[0], 0.7, 1e-15);
  EXPECT_EQ(a.reference_with_noise(s, std::vector<double>{0.9})[0], 1.0);
  EXPECT_NEAR(a.reference_with_noise(s, std::vector<double>{-0.2})[0], 0.5, 1e-15);
}

// Independent scalar reference for the twin-critic targets.
TEST(CriticTargets, MatchScalarReference) {
  Td3Agent a = make_agent(3, {}, 1.5);
  const auto rows = random_rows(12, 7);
  const auto wins = windows_from(random_rows(8, 8, 1), 3);
  RngStream r1(44), r2(44);
  const Eigen::VectorXd Y = a.critic_targets(rows, wins, r1);

  const TargetConfig tc = a.target_config();
  std::size_t i = 0;
  for (const auto& t : rows) {
    const Action ub = bootstrap_action(a.actor_target, t.s_next, tc, r2);
    const double q = twin_min(q_of(a.critic1_target, t.s_next, ub), q_of(a.critic2_target, t.s_next, ub));
    EXPECT_NEAR(Y[i++], one_step_target(t.r, t.d, q, tc.gamma), 1e-12);
  }
  for (const auto& w : wins) {
    const Observation& sb = w.transitions.back().s_next;
    const Action ub = bootstrap_action(a.actor_target, sb, tc, r2);
    const double q = twin_min(q_of(a.critic1_target, sb, ub), q_of(a.critic2_target, sb, ub));
    double G = 0, disc = 1;
    for (const auto& t : w.transitions) {
      G += disc * t.r;
      disc *= tc.gamma;
    }
    G += w.m ? disc * q : 0.0;
    EXPECT_NEAR(Y[i++], G, 1e-12);
  }
}

TEST(CriticUpdate, MixedLossMatchesPerRowMean) {
  Td3Agent a = make_agent(4);
  const auto rows = random_rows(10, 9);
  const auto wins = windows_from(random_rows(6, 10, 1), 2);
  Td3Agent copy = a;
  RngStream r1(5), r2(5);
  const Eigen::VectorXd Y = copy.critic_targets(rows, wins, r2);
  double l1 = 0, l2 = 0;
  std::size_t i = 0;
  auto acc = [&](const Observation& s, const Action& u) {
    const double e1 = q_of(a.critic1, s, u) - Y[i], e2 = q_of(a.critic2, s, u) - Y[i];
    l1 += e1 * e1;
    l2 += e2 * e2;
    ++i;
  };
  for (const auto& t : rows) acc(t.s, t.u);
  for (const auto& w : wins) acc(w.transitions.front().s, w.transitions.front().u);
  const CriticLosses cl = a.critic_update(rows, wins, r1);
  EXPECT_NEAR(cl.critic1, l1 / static_cast<double>(i), 1e-12);
  EXPECT_NEAR(cl.critic2, l2 / static_cast<double>(i), 1e-12);
  EXPECT_DOUBLE_EQ(cl.z_ratio, static_cast<double>(wins.size()) / static_cast<double>(i));
  EXPECT_THROW(a.critic_update({}, {}, r1), AvailabilityError);
}

TEST(CriticUpdate, HOneWindowsEqualOneStepRows) {
  DwsConfig dws;
  dws.h = 1;
  Td3Agent a = make_agent(5, dws), b = a;
  auto rows = random_rows(16, 11);
  for (auto& t : rows) t.d = false;
  const auto wins = windows_from(rows, 1);
  ASSERT_EQ(wins.size(), rows.size());
  RngStream r1(6), r2(6);
  const CriticLosses la = a.critic_update(rows, {}, r1);
  const CriticLosses lb = b.critic_update({}, wins, r2);
  EXPECT_EQ(la.critic1, lb.critic1);
  EXPECT_EQ(a.critic1.parameters(), b.critic1.parameters());
  EXPECT_EQ(a.critic2.parameters(), b.critic2.parameters());
}

TEST(ActorObjective, LambdaZeroIsPureDpg) {
  const Td3Agent a = make_agent(6);
  ActorBatch batch;
  for (const auto& t : random_rows(8, 12)) batch.states.push_back(t.s);
  const ActorLoss plain = actor_objective(a.actor, a.critic1, 1.0, batch, 0.0, 0.0);
  for (const auto& t : random_rows(8, 13)) batch.pairs.push_back({t.s, t.s_next});
  const ActorLoss with_pairs = actor_objective(a.actor, a.critic1, 1.0, batch, 0.0, 0.0);
  EXPECT_EQ(with_pairs.smooth, 0.0);
  EXPECT_EQ(with_pairs.grad, plain.grad);
  double q = 0;
  for (const auto& s : batch.states) q += q_of(a.critic1, s, a.act(s));
  EXPECT_NEAR(plain.base, -q / 8, 1e-12);
}

TEST(ActorObjective, ConstantPolicyHasNoRegularizer) {
  RngStream init(1);
  Td3Agent a(3, 1, 1.0, small_hp(), {}, init, /*zero_actor=*/true);
  ActorBatch batch;
  for (const auto& t : random_rows(8, 14)) {
    batch.states.push_back(t.s);
    batch.pairs.push_back({t.s, t.s_next});
  }
  EXPECT_EQ(actor_objective(a.actor, a.critic1, 1.0, batch, 0.4, 0.0).smooth, 0.0);
}

TEST(ActorObjective, RegularizerScalesWithLambda) {
  const Td3Agent a = make_agent(7);
  ActorBatch batch;
  for (const auto& t : random_rows(8, 15)) {
    batch.states.push_back(t.s);
    batch.pairs.push_back({t.s, t.s_next});
  }
  const double base = actor_objective(a.actor, a.critic1, 1.0, batch, 1.0, 0.0).smooth;
  EXPECT_GT(base, 0.0);
  for (double lam : {0.03, 0.1, 0.3, 0.4}) {
    const ActorLoss l = actor_objective(a.actor, a.critic1, 1.0, batch, lam, 0.0);
    EXPECT_NEAR(l.smooth, lam * base, 1e-15 * base + 1e-18);
  }
}

TEST(ActorObjective, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Td3Agent a = make_agent(seed, {}, 1.7);
    ActorBatch batch;
    for (const auto& t : random_rows(6, 100 + seed)) {
      batch.states.push_back(t.s);
      batch.pairs.push_back({t.s, t.s_next});
    }
    const ActorLoss l = actor_objective(a.actor, a.critic1, 1.7, batch, 0.3, 0.0);
    auto loss = [&](const Eigen::VectorXd& p) {
      Network n = a.actor;
      n.parameters() = p;
      return actor_objective(n, a.critic1, 1.7, batch, 0.3, 0.0).total;
    };
    EXPECT_LT(max_relative_error(loss, a.actor.parameters(), l.grad, 1e-5), 1e-4) << seed;
  }
}

TEST(ActorObjective, ImitationGradientWithFrozenOmega) {
  const Td3Agent a = make_agent(8, {}, 1.0);
  ActorBatch batch;
  RngStream rng(3);
  for (const auto& t : random_rows(8, 16)) {
    batch.states.push_back(t.s);
    batch.intervened.push_back(rng.uniform() < 0.6);
    batch.expert_actions.push_back({rng.uniform(-1, 1)});
  }
  const double lam = 2.0;
  const ActorLoss l = actor_objective(a.actor, a.critic1, 1.0, batch, 0.0, lam);
  // omega from the unperturbed parameters, then held fixed
  std::vector<double> omega;
  for (std::size_t i = 0; i < 8; ++i)
    omega.push_back(std::max(0.0, q_of(a.critic1, batch.states[i], batch.expert_actions[i]) -
                                      q_of(a.critic1, batch.states[i], a.act(batch.states[i]))));
  auto loss = [&](const Eigen::VectorXd& p) {
    Network n = a.actor;
    n.parameters() = p;
    double total = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      const double u = n.forward(batch.states[i])[0];
      total -= q_of(a.critic1, batch.states[i], {u});
      if (batch.intervened[i]) total += lam * omega[i] * std::pow(batch.expert_actions[i][0] - u, 2);
    }
    return total / 8;
  };
  EXPECT_NEAR(loss(a.actor.parameters()), l.total, 1e-12);
  EXPECT_LT(max_relative_error(loss, a.actor.parameters(), l.grad, 1e-5), 1e-4);
}

TEST(EgActorUpdate, GateOffEqualsBase) {
  Td3Agent a = make_agent(9), b = a;
  auto rows = random_rows(8, 17);
  for (auto& t : rows) t.expert_action = {0.3};
  const ActorLoss la = a.eg_actor_update(rows, 1.0);
  std::vector<Observation> states;
  for (const auto& t : rows) states.push_back(t.s);
  const ActorLoss lb = b.actor_update(states, {}, 0.0);
  EXPECT_EQ(la.total, lb.total);
  EXPECT_EQ(la.imitation, 0.0);
  EXPECT_EQ(a.actor.parameters(), b.actor.parameters());
}

TEST(EgActorUpdate, ZeroResidualAndClippedAdvantage) {
  const Td3Agent a = make_agent(10);
  ActorBatch batch;
  for (const auto& t : random_rows(8, 18)) {
    batch.states.push_back(t.s);
    batch.intervened.push_back(true);
    batch.expert_actions.push_back(a.act(t.s));
  }
  // batched and single-column forward passes may differ in the last bit
  EXPECT_NEAR(actor_objective(a.actor, a.critic1, 1.0, batch, 0.0, 1.0).imitation, 0.0, 1e-25);

  // Expert actions the critic scores below pi(s) get omega = 0.
  ActorBatch worse;
  RngStream rng(2);
  for (const auto& s : batch.states) {
    const double qpi = q_of(a.critic1, s, a.act(s));
    for (int k = 0; k < 100; ++k) {
      const Action cand = {rng.uniform(-1, 1)};
      if (q_of(a.critic1, s, cand) < qpi) {
        worse.states.push_back(s);
        worse.intervened.push_back(true);
        worse.expert_actions.push_back(cand);
        break;
      }
    }
  }
  ASSERT_FALSE(worse.states.empty());
  EXPECT_EQ(actor_objective(a.actor, a.critic1, 1.0, worse, 0.0, 1.0).imitation, 0.0);
}

TEST(EgActorUpdate, MissingExpertActionThrows) {
  Td3Agent a = make_agent(11);
  auto rows = random_rows(4, 19);
  rows[2].intervened = true;
  EXPECT_THROW(a.eg_actor_update(rows, 1.0), DataError);
  EXPECT_THROW(a.actor_update({}, {}, 0.1), AvailabilityError);
}

TEST(SoftUpdate, TargetsTrailOnline) {
  Td3Agent a = make_agent(12);
  const auto rows = random_rows(32, 20);
  RngStream r(1);
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd before_target = a.critic1_target.parameters();
    a.critic_update(rows, {}, r);
    const double displacement = (before_target - a.critic1.parameters()).norm();
    a.soft_update_targets();
    EXPECT_NEAR((a.critic1_target.parameters() - a.critic1.parameters()).norm(), (1 - 0.005) * displacement,
                1e-12);
  }
}

TEST(Chunk, DimensionalContract) {
  RngStream init(1);
  ChunkAgent c(3, 1, 3, 1.0, small_hp(), init);
  EXPECT_EQ(c.actor.spec().output_dim(), 3);
  EXPECT_EQ(c.critic1.spec().input_dim(), 3 + 3);
  EXPECT_EQ(c.chunk_select({0.1, 0.2, 0.3}).size(), 3u);
  RngStream init2(1);
  ChunkAgent c2(3, 2, 4, 1.0, small_hp(), init2);
  EXPECT_EQ(c2.actor.spec().output_dim(), 8);
  EXPECT_EQ(c2.critic1.spec().input_dim(), 11);
}

TEST(Chunk, TargetDiscounts) {
  const std::vector<double> r3 = {1, 1, 1};
  EXPECT_NEAR(chunk_target(r3, false, 10.0, 0.98) - (1 + 0.98 + 0.9604), 0.941192 * 10.0, 1e-12);
  const std::vector<double> r2 = {1, 1};
  EXPECT_DOUBLE_EQ(chunk_target(r2, true, 10.0, 0.98), 1.98);
  EXPECT_DOUBLE_EQ(chunk_target(r2, false, 10.0, 0.98), 1.98 + 0.98 * 0.98 * 10.0);
  EXPECT_THROW(chunk_target({}, false, 1.0, 0.9), ContractError);
}

TEST(Chunk, CriticUpdateRejectsWrongLength) {
  RngStream init(1);
  ChunkAgent c(3, 1, 3, 1.0, small_hp(), init);
  ChunkTransition ct;
  ct.s = {0, 0, 0};
  ct.chunk = {0.1, 0.2};
  ct.rewards = {1.0};
  ct.s_next = {0, 0, 0};
  RngStream r(1);
  EXPECT_THROW(c.critic_update({ct}, r), ShapeError);
}

TEST(ChunkTrain, OpenLoopExecution) {
  TrainConfig cfg = quick_config(EnvName::double_integrator_reach, Algorithm::action_chunk);
  cfg.env.horizon = 20;  // 20 = 6 * 3 + 2, so the last chunk is cut to L = 2
  cfg.episodes = 2;
  std::vector<TrajectoryRow> steps;
  TrainHooks hooks;
  hooks.on_step = [&](const TrajectoryRow& r) { steps.push_back(r); };
  const TrainResult res = chunk_train(cfg, 3, hooks);
  ASSERT_TRUE(res.chunk_agent.has_value());
  EXPECT_EQ(res.env_steps, 40);
  EXPECT_EQ(res.policy_queries, 2u * 7u);
  EXPECT_EQ(steps.size(), 40u);
}

TEST(Train, DeterministicGivenSeed) {
  TrainConfig cfg = quick_config(EnvName::narrow_corridor, Algorithm::dws);
  cfg.max_env_steps = 300;
  const TrainResult a = train(cfg, 5), b = train(cfg, 5);
  EXPECT_EQ(a.agent->actor.parameters(), b.agent->actor.parameters());
  EXPECT_EQ(a.agent->critic2.parameters(), b.agent->critic2.parameters());
  EXPECT_EQ(a.train_returns, b.train_returns);
  const TrainResult c = train(cfg, 6);
  EXPECT_NE(a.agent->actor.parameters(), c.agent->actor.parameters());
}

TEST(Train, ZohRunsOfH) {
  TrainConfig cfg = quick_config(EnvName::double_integrator_reach, Algorithm::dws);
  cfg.env.horizon = 30;
  std::vector<TrajectoryRow> steps;
  TrainHooks hooks;
  hooks.on_step = [&](const TrajectoryRow& r) { steps.push_back(r); };
  const TrainResult res = train(cfg, 1, hooks);
  ASSERT_EQ(steps.size(), 90u);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto k = steps[i].t % 3;
    if (k > 0) {
      EXPECT_EQ(steps[i].executed, steps[i - 1].executed) << i;
    }
  }
  EXPECT_EQ(res.policy_queries, 30u);
}

TEST(Train, VanillaQueriesEveryStep) {
  TrainConfig cfg = quick_config(EnvName::double_integrator_reach, Algorithm::vanilla);
  cfg.env.horizon = 30;
  const TrainResult res = train(cfg, 1);
  EXPECT_EQ(res.policy_queries, 90u);
  EXPECT_FALSE(cfg.effective_dws().execution_window);
  EXPECT_FALSE(cfg.effective_dws().value_window);
  EXPECT_FALSE(cfg.effective_dws().smooth_reg);
}

TEST(Train, DegenerateDwsMatchesVanilla) {
  TrainConfig v = quick_config(EnvName::narrow_corridor, Algorithm::vanilla);
  v.max_env_steps = 300;
  TrainConfig d = v;
  d.algorithm = Algorithm::dws;
  d.dws.h = 1;
  d.dws.lambda_s = 0.0;
  d.dws.value_window = false;
  const TrainResult a = train(v, 9), b = train(d, 9);
  EXPECT_GT(a.updates, 100u);
  EXPECT_EQ(a.agent->actor.parameters(), b.agent->actor.parameters());
  EXPECT_EQ(a.agent->critic1.parameters(), b.agent->critic1.parameters());
}

TEST(Train, ForcedInterventionExecutesExpert) {
  TrainConfig cfg = quick_config(EnvName::narrow_corridor, Algorithm::dws);
  cfg.force_intervention = true;
  cfg.episodes = 1;
  std::vector<TrajectoryRow> steps;
  TrainHooks hooks;
  hooks.on_step = [&](const TrajectoryRow& r) { steps.push_back(r); };
  const TrainResult res = train(cfg, 2, hooks);
  EXPECT_EQ(res.policy_queries, 0u);
  ASSERT_FALSE(steps.empty());
  EXPECT_EQ(steps.back().done_reason, DoneReason::success);
}

TEST(Train, ConfigErrors) {
  TrainConfig cfg = quick_config(EnvName::double_integrator_reach, Algorithm::dws_eg);
  EXPECT_THROW(train(cfg, 1), ValidationError);
  cfg = quick_config(EnvName::narrow_corridor, Algorithm::action_chunk);
  cfg.expert_guided = true;
  EXPECT_THROW(train(cfg, 1), ValidationError);
  cfg = quick_config(EnvName::narrow_corridor, Algorithm::action_chunk);
  EXPECT_THROW(dws_train(cfg, 1), UsageError);
}

TEST(Evaluate, DimensionMismatch) {
  const Td3Agent a = make_agent();
  EnvSpec spec = EnvSpec::defaults(EnvName::narrow_corridor);
  NetworkSpec wrong = a.actor.spec();
  wrong.layer_widths.front() = 5;
  EXPECT_THROW(evaluate_actor(Network(wrong), 1.0, spec, {}, 1, 0), CompatibilityError);
}

TEST(Evaluate, NoiseFreeAndRepeatable) {
  const Td3Agent a = make_agent(3);
  const EnvSpec spec = EnvSpec::defaults(EnvName::narrow_corridor);
  TrajectoryLog l1, l2;
  const auto r1 = evaluate_actor(a.actor, spec.a_max, spec, {}, 3, 77, &l1);
  const auto r2 = evaluate_actor(a.actor, spec.a_max, spec, {}, 3, 77, &l2);
  ASSERT_EQ(l1.size(), l2.size());
  for (std::size_t i = 0; i < l1.size(); ++i) EXPECT_EQ(l1[i].executed, l2[i].executed);
  EXPECT_EQ(r1[2].episode_return, r2[2].episode_return);
}
