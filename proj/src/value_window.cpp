#include "dws/value_window.hpp"

#include <algorithm>
#include <cmath>

#include "dws/errors.hpp"

namespace dws {

void TargetConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  if (h < 1) throw ValidationError("h must be >= 1");
  if (target_noise_sigma < 0.0) throw ValidationError("policy_noise must be >= 0");
  if (noise_clip < 0.0) throw ValidationError("noise_clip must be >= 0");
  if (!(a_max > 0.0)) throw ValidationError("a_max must be positive");
}

double one_step_target(double r, bool d, double q_next, double gamma) {
  return d ? r : r + gamma * q_next;
}

double windowed_return(const WindowSegment& segment, double gamma, double q_boot) {
  if (!segment.z) throw ContractError("windowed_return on an invalid segment (z = 0)");
  double g = 0.0;
  double discount = 1.0;
  for (const Transition& t : segment.transitions) {
    g += discount * t.r;
    discount *= gamma;
  }
  if (segment.m) g += discount * q_boot;
  return g;
}

double twin_min(double q1, double q2) { return std::min(q1, q2); }

Eigen::VectorXd twin_min(const Eigen::VectorXd& q1, const Eigen::VectorXd& q2) {
  if (q1.size() != q2.size()) throw ShapeError("twin_min length mismatch");
  return q1.cwiseMin(q2);
}

Action smoothed_action(std::span<const double> actor_output, std::span<const double> noise, const TargetConfig& cfg) {
  if (actor_output.size() != noise.size()) throw ShapeError("noise dimension mismatch");
  const double clip = cfg.noise_clip * cfg.a_max;
  Action u(actor_output.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] = std::clamp(actor_output[i] + std::clamp(noise[i], -clip, clip), -cfg.a_max, cfg.a_max);
  return u;
}

Action bootstrap_action(const Network& target_actor, const Observation& s_boot, const TargetConfig& cfg,
                        RngStream& rng) {
  std::vector<double> out = target_actor.forward(s_boot);
  std::vector<double> noise(out.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= cfg.a_max;
    if (cfg.target_noise_sigma > 0.0) noise[i] = cfg.target_noise_sigma * cfg.a_max * rng.normal();
  }
  return smoothed_action(out, noise, cfg);
}

double gated_target(double y, std::optional<double> G, bool z) {
  if (z && !G) throw ContractError("gated_target with z = 1 requires a windowed return");
  return z ? *G : y;
}

Eigen::VectorXd gated_target(const Eigen::VectorXd& y, const Eigen::VectorXd& G, const std::vector<bool>& z) {
  if (y.size() != G.size() || static_cast<std::size_t>(y.size()) != z.size())
    throw ShapeError("gated_target length mismatch");
  Eigen::VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) out[i] = z[static_cast<std::size_t>(i)] ? G[i] : y[i];
  return out;
}

LossGrad wsmbe_loss(const Eigen::VectorXd& q_pred, const Eigen::VectorXd& Y) {
  if (q_pred.size() != Y.size()) throw ShapeError("wsmbe_loss length mismatch");
  if (q_pred.size() == 0) throw AvailabilityError("wsmbe_loss on an empty batch");
  const Eigen::VectorXd diff = q_pred - Y;
  const double n = static_cast<double>(q_pred.size());
  return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

}  // namespace dws
