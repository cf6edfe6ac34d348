#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dws {

using Action = std::vector<double>;
using Observation = std::vector<double>;

enum class ProfileKind { zoh, dissipative_linear };

std::string to_string(ProfileKind k);
// Accepts "zoh" and "decay" / "dissipative_linear".
ProfileKind profile_from_string(const std::string& name);

struct ExecutionProfile {
  ProfileKind kind = ProfileKind::zoh;
  int h = 1;
  std::vector<double> weights;
};

// zoh: w_k = 1; dissipative_linear: w_k = 1 - k/h.
ExecutionProfile make_profile(ProfileKind kind, int h);

// Per-step bounds |w_k - w_{k-1}| * a_max for k = 1..h-1.
std::vector<double> intra_window_bound(const ExecutionProfile& profile, double a_max);

/// Controller memory of the execution window: phase kappa and the cached
/// reference action. Together with the environment state this is the
/// augmented state on which windowed execution is Markov.
struct WindowCache {
  int kappa = 0;
  std::optional<Action> reference;
  std::size_t action_dim = 0;  // 0 disables the dimension check

  void reset() {
    kappa = 0;
    reference.reset();
  }
};

using ReferenceProvider = std::function<Action(const Observation&)>;

// Emits w_kappa * a_hat, querying `provider` only when kappa == 0, then
// advances kappa modulo h. Executed actions are clipped to [-a_max, a_max].
Action execute_step(WindowCache& cache, const ExecutionProfile& profile,
                    const ReferenceProvider& provider, const Observation& s,
                    double a_max);

// Executed action for a given augmented state, without touching any cache.
Action executed_action(const ExecutionProfile& profile, int kappa, std::span<const double> reference,
                       double a_max);

}  // namespace dws
