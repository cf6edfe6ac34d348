#include "dws/mdp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>

#include "dws/errors.hpp"
#include "dws/replay.hpp"
#include "dws/rng.hpp"
#include "dws/trajectory_log.hpp"
#include "dws/value_window.hpp"

namespace dws {

void FiniteMdp::validate() const {
  if (num_states < 1) throw ModelError("mdp needs at least one state");
  const auto S = static_cast<std::size_t>(num_states);
  const std::size_t U = action_values.size();
  if (terminal.size() != S) throw ModelError("terminal flags missing");
  if (U == 0) throw ModelError("empty action alphabet");
  if (reference_actions.empty()) throw ModelError("no reference actions");
  for (int r : reference_actions)
    if (r < 0 || static_cast<std::size_t>(r) >= U) throw ModelError("reference index out of range");
  if (initial_states.empty()) throw ModelError("no initial states");
  for (int s : initial_states)
    if (s < 0 || s >= num_states || terminal[s]) throw ModelError("initial state must be a non-terminal state");
  if (policy.size() != S || transition.size() != S || reward_mean.size() != S || reward_std.size() != S)
    throw ModelError("tables must cover every state");
  for (std::size_t s = 0; s < S; ++s) {
    if (terminal[s]) continue;
    const std::string where = "state " + std::to_string(s);
    if (policy[s].size() != reference_actions.size()) throw ModelError(where + ": policy row missing");
    double total = 0.0;
    for (double p : policy[s]) {
      if (p < 0.0) throw ModelError(where + ": negative policy probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ModelError(where + ": policy row does not sum to 1");
    if (transition[s].size() != U || reward_mean[s].size() != U || reward_std[s].size() != U)
      throw ModelError(where + ": transition/reward rows missing");
    for (std::size_t u = 0; u < U; ++u) {
      if (transition[s][u].size() != S) throw ModelError(where + ": transition row has wrong length");
      double row = 0.0;
      for (double p : transition[s][u]) {
        if (p < 0.0) throw ModelError(where + ": negative transition probability");
        row += p;
      }
      if (std::abs(row - 1.0) > 1e-9)
        throw ModelError(where + ", action " + std::to_string(u) + ": transition row sums to " + std::to_string(row));
      if (reward_std[s][u] < 0.0) throw ModelError(where + ": negative reward std");
    }
  }
}

int FiniteMdp::action_index(double u) const {
  for (std::size_t i = 0; i < action_values.size(); ++i)
    if (std::abs(action_values[i] - u) <= 1e-9) return static_cast<int>(i);
  throw ModelError("executed action " + format_double(u) + " is not in the action alphabet");
}

namespace {

void resize_tables(FiniteMdp& m) {
  const auto S = static_cast<std::size_t>(m.num_states);
  const std::size_t U = m.action_values.size();
  m.terminal.assign(S, false);
  m.policy.assign(S, {});
  m.transition.assign(S, std::vector<std::vector<double>>(U));
  m.reward_mean.assign(S, std::vector<double>(U, 0.0));
  m.reward_std.assign(S, std::vector<double>(U, 0.0));
}

}  // namespace

FiniteMdp parse_mdp(std::istream& in) {
  FiniteMdp m;
  std::string line;
  int line_no = 0;
  bool sized = false;
  std::vector<int> pending_terminal;
  auto fail = [&](const std::string& what) { throw ParseError("mdp line " + std::to_string(line_no) + ": " + what); };
  auto ensure_sized = [&]() {
    if (sized) return;
    if (m.num_states < 1 || m.action_values.empty()) fail("'states' and 'actions' must precede tables");
    resize_tables(m);
    for (int s : pending_terminal) m.terminal[s] = true;
    sized = true;
  };
  auto state_arg = [&](std::istringstream& ss) {
    int s = -1;
    if (!(ss >> s) || s < 0 || s >= m.num_states) fail("bad state index");
    return s;
  };
  auto action_arg = [&](std::istringstream& ss) {
    int u = -1;
    if (!(ss >> u) || u < 0 || static_cast<std::size_t>(u) >= m.action_values.size()) fail("bad action index");
    return u;
  };
  auto rest = [&](std::istringstream& ss) {
    std::vector<double> v;
    double x = 0.0;
    while (ss >> x) v.push_back(x);
    if (!ss.eof()) fail("bad number");
    return v;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    if (key == "states") {
      if (!(ss >> m.num_states) || m.num_states < 1) fail("bad state count");
    } else if (key == "actions") {
      m.action_values = rest(ss);
    } else if (key == "terminal") {
      for (double s : rest(ss)) {
        if (s < 0 || s >= m.num_states) fail("bad terminal state");
        pending_terminal.push_back(static_cast<int>(s));
        if (sized) m.terminal[static_cast<std::size_t>(s)] = true;
      }
    } else if (key == "initial") {
      for (double s : rest(ss)) m.initial_states.push_back(static_cast<int>(s));
    } else if (key == "references") {
      for (double r : rest(ss)) m.reference_actions.push_back(static_cast<int>(r));
    } else if (key == "policy") {
      ensure_sized();
      const int s = state_arg(ss);
      m.policy[s] = rest(ss);
    } else if (key == "transition") {
      ensure_sized();
      const int s = state_arg(ss);
      const int u = action_arg(ss);
      m.transition[s][u] = rest(ss);
    } else if (key == "reward") {
      ensure_sized();
      const int s = state_arg(ss);
      const int u = action_arg(ss);
      const auto v = rest(ss);
      if (v.size() != 2) fail("reward needs mean and std");
      m.reward_mean[s][u] = v[0];
      m.reward_std[s][u] = v[1];
    } else {
      fail("unknown directive '" + key + "'");
    }
  }
  ensure_sized();
  m.validate();
  return m;
}

void write_mdp(std::ostream& out, const FiniteMdp& m) {
  out << "states " << m.num_states << '\n';
  out << "terminal";
  for (int s = 0; s < m.num_states; ++s)
    if (m.terminal[s]) out << ' ' << s;
  out << "\ninitial";
  for (int s : m.initial_states) out << ' ' << s;
  out << "\nactions";
  for (double u : m.action_values) out << ' ' << format_double(u);
  out << "\nreferences";
  for (int r : m.reference_actions) out << ' ' << r;
  out << '\n';
  for (int s = 0; s < m.num_states; ++s) {
    if (m.terminal[s]) continue;
    out << "policy " << s;
    for (double p : m.policy[s]) out << ' ' << format_double(p);
    out << '\n';
    for (std::size_t u = 0; u < m.action_values.size(); ++u) {
      out << "transition " << s << ' ' << u;
      for (double p : m.transition[s][u]) out << ' ' << format_double(p);
      out << "\nreward " << s << ' ' << u << ' ' << format_double(m.reward_mean[s][u]) << ' '
          << format_double(m.reward_std[s][u]) << '\n';
    }
  }
}

FiniteMdp make_chain_mdp() {
  FiniteMdp m;
  m.num_states = 5;
  m.action_values = {-1.0, -2.0 / 3.0, -0.5, -1.0 / 3.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0};
  m.reference_actions = {0, 7};
  resize_tables(m);
  m.terminal[4] = true;
  m.initial_states = {0, 1, 2, 3};
  for (int s = 0; s < 4; ++s) {
    const double p_plus = 0.3 + 0.1 * s;
    m.policy[s] = {1.0 - p_plus, p_plus};
    for (std::size_t ui = 0; ui < m.action_values.size(); ++ui) {
      const double u = m.action_values[ui];
      std::vector<double> row(5, 0.0);
      const double right = 0.45 + 0.35 * u;
      row[s + 1] += right;
      row[s == 0 ? 0 : s - 1] += 0.9 - right;
      row[s] += 0.1;
      m.transition[s][ui] = row;
      m.reward_mean[s][ui] = 0.2 * s + 0.5 * u - 0.1;
      m.reward_std[s][ui] = 0.3 + 0.1 * s;
    }
  }
  m.validate();
  return m;
}

std::vector<std::vector<std::vector<BackupValue>>> operator_oracle(const FiniteMdp& mdp,
                                                                  const ExecutionProfile& profile, double gamma,
                                                                  const QTable& q) {
  mdp.validate();
  const int S = mdp.num_states;
  const int h = profile.h;
  const int R = mdp.num_references();
  if (q.size() != static_cast<std::size_t>(S)) throw ModelError("Q table must have one row per state");
  for (int s = 0; s < S; ++s)
    if (!mdp.terminal[s] && q[s].size() != static_cast<std::size_t>(R))
      throw ModelError("Q table row must have one entry per reference action");

  auto boot = [&](int s) {
    double v = 0.0;
    for (int j = 0; j < R; ++j) v += mdp.policy[s][j] * q[s][j];
    return v;
  };

  std::vector<std::vector<std::vector<BackupValue>>> out(
      S, std::vector<std::vector<BackupValue>>(h, std::vector<BackupValue>(R)));

  for (int s0 = 0; s0 < S; ++s0) {
    if (mdp.terminal[s0]) continue;
    for (int kappa0 = 0; kappa0 < h; ++kappa0) {
      for (int ref0 = 0; ref0 < R; ++ref0) {
        double value = 0.0, valid = 0.0, cond = 0.0;
        // Depth-first over next states and, at window boundaries, new references.
        std::function<void(int, int, int, int, double, double, double)> walk =
            [&](int s, int kappa, int ref, int k, double prob, double disc, double acc) {
              const int ui = mdp.action_index(profile.weights[kappa] * mdp.reference_value(ref));
              acc += disc * mdp.reward_mean[s][ui];
              for (int sn = 0; sn < S; ++sn) {
                const double p = mdp.transition[s][ui][sn];
                if (p == 0.0) continue;
                const double pp = prob * p;
                if (mdp.terminal[sn]) {
                  value += pp * acc;  // m = 0
                  if (k == h - 1) {
                    valid += pp;
                    cond += pp * acc;
                  }
                } else if (k == h - 1) {
                  const double g = acc + disc * gamma * boot(sn);
                  value += pp * g;
                  valid += pp;
                  cond += pp * g;
                } else {
                  const int next_kappa = (kappa + 1) % h;
                  if (next_kappa == 0) {
                    for (int j = 0; j < R; ++j)
                      if (mdp.policy[sn][j] > 0.0)
                        walk(sn, 0, j, k + 1, pp * mdp.policy[sn][j], disc * gamma, acc);
                  } else {
                    walk(sn, next_kappa, ref, k + 1, pp, disc * gamma, acc);
                  }
                }
              }
            };
        walk(s0, kappa0, ref0, 0, 1.0, 1.0, 0.0);
        out[s0][kappa0][ref0] = {value, valid, valid > 0.0 ? cond / valid : 0.0};
      }
    }
  }
  return out;
}

QTable chain_q_table(const FiniteMdp& mdp) {
  QTable q(mdp.num_states, std::vector<double>(mdp.num_references(), 0.0));
  for (int s = 0; s < mdp.num_states; ++s)
    for (int j = 0; j < mdp.num_references(); ++j) q[s][j] = 1.0 + 0.5 * s - 0.7 * j;
  return q;
}

bool MonteCarloReport::pass() const {
  return std::all_of(cells.begin(), cells.end(), [](const MonteCarloCell& c) { return c.pass; });
}

double MonteCarloReport::max_z() const {
  double z = 0.0;
  for (const auto& c : cells)
    if (c.checked && c.std_error > 0.0) z = std::max(z, std::abs(c.mean - c.expected) / c.std_error);
  return z;
}

namespace {

int sample_index(const std::vector<double>& probs, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

MonteCarloReport monte_carlo_check(const FiniteMdp& mdp, const ExecutionProfile& profile, double gamma,
                                   const QTable& q, std::size_t min_segments, std::uint64_t seed,
                                   std::size_t min_cell_samples) {
  const auto exact = operator_oracle(mdp, profile, gamma, q);
  const int h = profile.h;
  constexpr int kMaxEpisodeSteps = 200;
  RngStream rng(seed, StreamId::oracle);

  // Enough transitions for min_segments valid starts; each episode loses at
  // most h - 1 starts, so grow until the count is reached.
  std::vector<Transition> sim;
  std::vector<std::pair<int, int>> head;  // (kappa, ref) per transition
  std::size_t valid = 0;
  std::int64_t episode = 0;
  while (valid < min_segments) {
    int s = mdp.initial_states[rng.index(mdp.initial_states.size())];
    int kappa = 0, ref = 0;
    std::size_t len = 0;
    for (int t = 0; t < kMaxEpisodeSteps; ++t) {
      if (kappa == 0) ref = sample_index(mdp.policy[s], rng);
      const int ui = mdp.action_index(profile.weights[kappa] * mdp.reference_value(ref));
      Transition tr;
      tr.s = {static_cast<double>(s)};
      tr.u = {mdp.action_values[ui]};
      tr.r = mdp.reward_mean[s][ui] + mdp.reward_std[s][ui] * rng.normal();
      const int sn = sample_index(mdp.transition[s][ui], rng);
      tr.s_next = {static_cast<double>(sn)};
      tr.d = mdp.terminal[sn];
      tr.episode_id = episode;
      tr.step_index = t;
      sim.push_back(std::move(tr));
      head.emplace_back(kappa, ref);
      ++len;
      s = sn;
      kappa = (kappa + 1) % h;
      if (mdp.terminal[sn]) break;
    }
    if (len >= static_cast<std::size_t>(h)) valid += len - h + 1;
    ++episode;
  }

  WindowStore store(sim.size());
  for (const auto& tr : sim) store.push(tr);
  const auto starts = store.valid_window_starts(h);
  if (starts.size() < min_segments) throw ContractError("oracle simulation produced too few valid windows");

  struct Acc {
    std::vector<double> g;
    std::vector<std::int64_t> episode;
  };
  std::map<std::tuple<int, int, int>, Acc> groups;
  for (std::size_t i : starts) {
    const WindowSegment seg = store.segment_at(i, h);
    double q_boot = 0.0;
    if (seg.m) {
      const int sb = static_cast<int>(seg.transitions.back().s_next[0]);
      q_boot = q[sb][sample_index(mdp.policy[sb], rng)];
    }
    const int s0 = static_cast<int>(seg.transitions.front().s[0]);
    auto& acc = groups[{s0, head[i].first, head[i].second}];
    acc.g.push_back(windowed_return(seg, gamma, q_boot));
    acc.episode.push_back(seg.transitions.front().episode_id);
  }

  MonteCarloReport report;
  report.profile = profile.kind;
  report.h = h;
  report.segments = starts.size();
  for (const auto& [key, acc] : groups) {
    MonteCarloCell c;
    std::tie(c.s, c.kappa, c.ref) = key;
    c.n = acc.g.size();
    double sum = 0.0;
    for (double g : acc.g) sum += g;
    c.mean = sum / static_cast<double>(c.n);
    double ss = 0.0;
    std::map<std::int64_t, double> by_episode;
    for (std::size_t k = 0; k < c.n; ++k) {
      ss += (acc.g[k] - c.mean) * (acc.g[k] - c.mean);
      by_episode[acc.episode[k]] += acc.g[k] - c.mean;
    }
    const double n = static_cast<double>(c.n);
    c.std_error = c.n > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    double cs = 0.0;
    for (const auto& [e, v] : by_episode) cs += v * v;
    const double clusters = static_cast<double>(by_episode.size());
    c.clustered_error = clusters > 1 ? std::sqrt(cs * clusters / (clusters - 1.0)) / n : 0.0;
    c.expected = exact[c.s][c.kappa][c.ref].conditional;
    c.checked = c.n >= min_cell_samples;
    c.pass = !c.checked || std::abs(c.mean - c.expected) <= 3.0 * c.std_error;
    report.cells.push_back(c);
  }
  return report;
}

std::vector<MonteCarloReport> oracle_suite(std::uint64_t seed, std::size_t min_segments, double gamma) {
  const FiniteMdp mdp = make_chain_mdp();
  const QTable q = chain_q_table(mdp);
  std::vector<MonteCarloReport> out;
  for (ProfileKind kind : {ProfileKind::zoh, ProfileKind::dissipative_linear})
    for (int h = 1; h <= 3; ++h)
      out.push_back(monte_carlo_check(mdp, make_profile(kind, h), gamma, q, min_segments,
                                      child_seed(seed, static_cast<std::uint64_t>(out.size()))));
  return out;
}

}  // namespace dws
