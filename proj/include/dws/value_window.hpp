#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dws/approximator.hpp"
#include "dws/replay.hpp"

namespace dws {

struct TargetConfig {
  double gamma = 0.98;
  int h = 3;
  double target_noise_sigma = 0.15;  // in units of a_max
  double noise_clip = 0.5;           // in units of a_max
  double a_max = 1.0;

  void validate() const;
};

// y = r + gamma * (1 - d) * q_next
double one_step_target(double r, bool d, double q_next, double gamma);

// G = sum_k gamma^k r_{t+k} + gamma^h * m * q_boot. Throws ContractError when z is false.
double windowed_return(const WindowSegment& segment, double gamma, double q_boot);

double twin_min(double q1, double q2);
Eigen::VectorXd twin_min(const Eigen::VectorXd& q1, const Eigen::VectorXd& q2);

// clip(actor_output + clip(noise, +-noise_clip*a_max), +-a_max), componentwise.
Action smoothed_action(std::span<const double> actor_output, std::span<const double> noise, const TargetConfig& cfg);

// Target-policy smoothing for a bootstrap state: the actor network has a
// tanh output that is scaled by cfg.a_max; noise ~ N(0, (sigma * a_max)^2).
Action bootstrap_action(const Network& target_actor, const Observation& s_boot, const TargetConfig& cfg,
                        RngStream& rng);

// Y = (1 - z) * y + z * G
double gated_target(double y, std::optional<double> G, bool z);
Eigen::VectorXd gated_target(const Eigen::VectorXd& y, const Eigen::VectorXd& G, const std::vector<bool>& z);

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d loss / d q_pred; the targets carry no gradient
};

// mean((q_pred - Y)^2)
LossGrad wsmbe_loss(const Eigen::VectorXd& q_pred, const Eigen::VectorXd& Y);

}  // namespace dws
