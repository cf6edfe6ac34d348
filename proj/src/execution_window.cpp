#include "dws/execution_window.hpp"

#include <algorithm>
#include <cmath>

#include "dws/errors.hpp"

namespace dws {

std::string to_string(ProfileKind k) {
  return k == ProfileKind::zoh ? "zoh" : "decay";
}

ProfileKind profile_from_string(const std::string& name) {
  if (name == "zoh") return ProfileKind::zoh;
  if (name == "decay" || name == "dissipative_linear" || name == "dissipative") return ProfileKind::dissipative_linear;
  throw ParameterError("unknown execution profile '" + name + "'");
}

ExecutionProfile make_profile(ProfileKind kind, int h) {
  if (h < 1) throw ParameterError("window length h must be >= 1");
  ExecutionProfile p{kind, h, std::vector<double>(static_cast<std::size_t>(h), 1.0)};
  if (kind == ProfileKind::dissipative_linear)
    for (int k = 0; k < h; ++k) p.weights[k] = 1.0 - static_cast<double>(k) / h;
  return p;
}

std::vector<double> intra_window_bound(const ExecutionProfile& profile, double a_max) {
  if (!(a_max > 0.0)) throw ParameterError("a_max must be positive");
  std::vector<double> bounds;
  for (int k = 1; k < profile.h; ++k)
    bounds.push_back(std::abs(profile.weights[k] - profile.weights[k - 1]) * a_max);
  return bounds;
}

Action executed_action(const ExecutionProfile& profile, int kappa, std::span<const double> reference,
                       double a_max) {
  const double w = profile.weights.at(static_cast<std::size_t>(kappa));
  Action u(reference.begin(), reference.end());
  for (double& x : u) x = std::clamp(w * x, -a_max, a_max);
  return u;
}

Action execute_step(WindowCache& cache, const ExecutionProfile& profile,
                    const ReferenceProvider& provider, const Observation& s, double a_max) {
  if (cache.kappa < 0 || cache.kappa >= profile.h) throw UsageError("window phase out of range");
  if (cache.kappa == 0) {
    Action a = provider(s);
    if (cache.action_dim != 0 && a.size() != cache.action_dim)
      throw ShapeError("reference provider returned " + std::to_string(a.size()) +
                       " components, expected " + std::to_string(cache.action_dim));
    cache.reference = std::move(a);
  } else if (!cache.reference) {
    throw UsageError("window cache has a phase but no reference action");
  }
  Action u = executed_action(profile, cache.kappa, *cache.reference, a_max);
  cache.kappa = (cache.kappa + 1) % profile.h;
  return u;
}

}  // namespace dws
