#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dws/execution_window.hpp"

namespace dws {

/// Small finite MDP for checking windowed targets against exact h-step backups.
///
/// Text format (one directive per line, '#' starts a comment):
///   states <S>
///   terminal <s>...                  absorbing states; entering one ends the episode
///   initial <s>...                   episodes start uniformly at one of these
///   actions <u_0> <u_1> ...          executed-action alphabet (scalars)
///   references <i> <j> ...           alphabet indices usable as reference actions
///   policy <s> <p_0> <p_1> ...       reference-policy probabilities per state
///   transition <s> <u_idx> <p_0> ... <p_{S-1}>
///   reward <s> <u_idx> <mean> <std>  Gaussian reward
/// Every non-terminal state needs a policy row and, for every alphabet entry,
/// a transition and reward row.
struct FiniteMdp {
  int num_states = 0;
  std::vector<bool> terminal;
  std::vector<int> initial_states;
  std::vector<double> action_values;
  std::vector<int> reference_actions;
  std::vector<std::vector<double>> policy;                    // [s][ref]
  std::vector<std::vector<std::vector<double>>> transition;   // [s][u][s']
  std::vector<std::vector<double>> reward_mean, reward_std;   // [s][u]

  // Throws ModelError on non-normalized rows or missing tables.
  void validate() const;
  // Alphabet index of an executed value, matched within 1e-9; ModelError otherwise.
  int action_index(double u) const;
  int num_references() const { return static_cast<int>(reference_actions.size()); }
  double reference_value(int ref) const { return action_values[reference_actions[ref]]; }
};

FiniteMdp parse_mdp(std::istream& in);
void write_mdp(std::ostream& out, const FiniteMdp& mdp);

// 5 states in a line, state 4 absorbing; reference actions -1 and +1 drift
// the chain; rewards are Gaussian. The executed alphabet covers every
// profile weight for h <= 3.
FiniteMdp make_chain_mdp();

// Bootstrap table Q[s][ref]; the bootstrap action at s_{t+h} is drawn from
// the reference policy, matching a target actor.
using QTable = std::vector<std::vector<double>>;

struct BackupValue {
  double value = 0.0;              // E[G] with terminal-absorbing semantics and mask m
  double valid_probability = 0.0;  // P(no terminal before the window's last slot)
  double conditional = 0.0;        // E[G | window valid], the quantity sampled windows estimate
};

// Exact h-step executed backup for every augmented head state
// (s, kappa, reference), indexed [s][kappa][ref], by enumerating all
// length-h executed trajectories. Terminal states get zero entries.
std::vector<std::vector<std::vector<BackupValue>>> operator_oracle(const FiniteMdp& mdp,
                                                                  const ExecutionProfile& profile, double gamma,
                                                                  const QTable& q);

// Arbitrary fixed bootstrap table for the chain: Q[s][j] = 1 + 0.5 s - 0.7 j.
QTable chain_q_table(const FiniteMdp& mdp);

/// Sample statistics of windowed returns for one augmented head state.
struct MonteCarloCell {
  int s = 0, kappa = 0, ref = 0;
  std::size_t n = 0;
  double mean = 0.0;
  double std_error = 0.0;          // sample std / sqrt(n)
  double clustered_error = 0.0;    // clustered by episode, for diagnostics
  double expected = 0.0;           // oracle conditional value
  bool checked = false;            // n >= min_cell_samples
  bool pass = true;                // |mean - expected| <= 3 std_error
};

struct MonteCarloReport {
  ProfileKind profile = ProfileKind::zoh;
  int h = 1;
  std::size_t segments = 0;
  std::vector<MonteCarloCell> cells;

  bool pass() const;
  // Largest |mean - expected| / std_error over checked cells.
  double max_z() const;
};

// Simulates windowed execution of the reference policy, stores the executed
// transitions in a WindowStore and compares windowed_return over every valid
// segment (at least `min_segments` of them) with the exact backup, grouped
// by head state (s, kappa, reference). Bootstrap actions are drawn from the
// reference policy.
MonteCarloReport monte_carlo_check(const FiniteMdp& mdp, const ExecutionProfile& profile, double gamma,
                                   const QTable& q, std::size_t min_segments, std::uint64_t seed,
                                   std::size_t min_cell_samples = 1000);

// Chain MDP, both profiles, h = 1, 2, 3.
std::vector<MonteCarloReport> oracle_suite(std::uint64_t seed, std::size_t min_segments = 100000,
                                           double gamma = 0.9);

}  // namespace dws
