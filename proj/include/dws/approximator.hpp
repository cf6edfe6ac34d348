#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dws/rng.hpp"

namespace dws {

enum class Activation : std::int64_t { identity = 0, relu = 1, tanh = 2 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct NetworkSpec {
  std::vector<int> layer_widths;  // input, hidden..., output
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::identity;

  void validate() const;
  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  std::size_t layer_count() const { return layer_widths.size() - 1; }
  // sum over layers of (fan_in + 1) * fan_out
  std::size_t parameter_count() const;

  bool operator==(const NetworkSpec&) const = default;
};

// Intermediate values of one batched forward pass, consumed by backward().
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer, one column per sample
  std::vector<Eigen::MatrixXd> outputs; // post-activation output of each layer
  std::size_t parameter_count = 0;

  bool empty() const { return inputs.empty(); }
};

struct Gradients {
  Eigen::VectorXd parameters;  // same layout as Network::parameters()
  Eigen::MatrixXd input;       // one column per sample
};

/// Fully connected network with a flat parameter vector.
///
/// Canonical layout: for each layer in order, the weight matrix W (fan_out x
/// fan_in) stored row-major, followed by its bias vector (fan_out).
class Network {
 public:
  Network() = default;
  // All parameters zero.
  explicit Network(NetworkSpec spec);

  // Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  static Network fan_in_uniform(NetworkSpec spec, RngStream& rng);

  const NetworkSpec& spec() const { return spec_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  std::vector<double> forward(std::span<const double> input) const;

  // Batched forward pass; `inputs` has one column per sample.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs, ForwardCache* cache = nullptr) const;

  // Reverse-mode pass for d(sum_ij output_grad_ij * output_ij).
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const;
  // Input gradient only; skips the parameter gradients.
  Eigen::MatrixXd input_gradient(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const;

  bool all_finite() const { return params_.allFinite(); }

 private:
  Gradients backprop(const ForwardCache& cache, const Eigen::MatrixXd& output_grad, bool with_params) const;

  NetworkSpec spec_;
  Eigen::VectorXd params_;
  std::vector<std::size_t> offsets_;
};

struct OptimizerState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState for_network(const Network& net, double lr);
};

// Bias-corrected Adam. Throws NumericError naming the first non-finite component.
void adam_step(Network& net, const Eigen::VectorXd& grads, OptimizerState& opt);

// target <- tau * online + (1 - tau) * target
void soft_update(Network& target, const Network& online, double tau);

using BackwardFn = std::function<Gradients(const Network&, const ForwardCache&, const Eigen::MatrixXd&)>;

// Max over parameters of |analytic - central difference| / max(1, |analytic|)
// for the scalar loss sum(outputs). `backward` defaults to Network::backward.
double grad_check(const Network& net, std::span<const double> input, double eps,
                  const BackwardFn& backward = {});

// Generic central-difference check of a scalar function of a parameter vector.
double max_relative_error(const std::function<double(const Eigen::VectorXd&)>& loss,
                          const Eigen::VectorXd& at, const Eigen::VectorXd& analytic,
                          double eps);

// Binary snapshot:
//   u64 n, then n x i64: layer widths..., hidden activation, output activation
//   then parameter_count x f64 parameters
// All fields little-endian.
void write_network(std::ostream& out, const Network& net);
Network read_network(std::istream& in);
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

Eigen::MatrixXd to_column(std::span<const double> v);

}  // namespace dws
