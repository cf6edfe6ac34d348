#include "dws/approximator.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "dws/errors.hpp"

namespace dws {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void apply_activation(Activation a, Eigen::MatrixXd& m) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::relu:
      m = m.cwiseMax(0.0);
      break;
    case Activation::tanh:
      m = m.array().tanh();
      break;
  }
}

// d(out)/d(pre) expressed through the activation output.
void apply_activation_grad(Activation a, const Eigen::MatrixXd& out, Eigen::MatrixXd& grad) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::relu:
      grad = (out.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::tanh:
      grad.array() *= 1.0 - out.array().square();
      break;
  }
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw ParseError("network snapshot truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ParameterError("unknown activation '" + name + "'");
}

void NetworkSpec::validate() const {
  if (layer_widths.size() < 2) throw ShapeError("network needs at least two layer widths");
  for (int w : layer_widths)
    if (w < 1) throw ShapeError("layer widths must be positive");
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
    n += static_cast<std::size_t>(layer_widths[l] + 1) * static_cast<std::size_t>(layer_widths[l + 1]);
  return n;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec_.parameter_count()));
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(spec_.layer_widths[l] + 1) * spec_.layer_widths[l + 1];
  }
}

Network Network::fan_in_uniform(NetworkSpec spec, RngStream& rng) {
  Network net(std::move(spec));
  for (std::size_t l = 0; l < net.spec_.layer_count(); ++l) {
    const int fan_in = net.spec_.layer_widths[l];
    const int fan_out = net.spec_.layer_widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    double* w = net.params_.data() + net.offsets_[l];
    for (int i = 0; i < fan_in * fan_out; ++i) w[i] = rng.uniform(-bound, bound);
  }
  return net;
}

std::vector<double> Network::forward(std::span<const double> input) const {
  const Eigen::MatrixXd out = forward_batch(to_column(input));
  return {out.data(), out.data() + out.size()};
}

Eigen::MatrixXd Network::forward_batch(const Eigen::MatrixXd& inputs, ForwardCache* cache) const {
  if (inputs.rows() != spec_.input_dim())
    throw ShapeError("input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                     std::to_string(spec_.input_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
    cache->parameter_count = parameter_count();
  }
  Eigen::MatrixXd x = inputs;
  const std::size_t layers = spec_.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const int fan_in = spec_.layer_widths[l];
    const int fan_out = spec_.layer_widths[l + 1];
    const double* base = params_.data() + offsets_[l];
    Eigen::Map<const RowMajor> w(base, fan_out, fan_in);
    Eigen::Map<const Eigen::VectorXd> b(base + fan_in * fan_out, fan_out);
    Eigen::MatrixXd z = w * x;
    z.colwise() += b;
    apply_activation(l + 1 == layers ? spec_.output_activation : spec_.hidden_activation, z);
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->outputs.push_back(z);
    }
    x = std::move(z);
  }
  return x;
}

Gradients Network::backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const {
  return backprop(cache, output_grad, true);
}

Eigen::MatrixXd Network::input_gradient(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const {
  return backprop(cache, output_grad, false).input;
}

Gradients Network::backprop(const ForwardCache& cache, const Eigen::MatrixXd& output_grad, bool with_params) const {
  const std::size_t layers = spec_.layer_count();
  if (cache.empty() || cache.inputs.size() != layers || cache.parameter_count != parameter_count())
    throw UsageError("backward called without a matching forward pass");
  if (output_grad.rows() != spec_.output_dim() || output_grad.cols() != cache.outputs.back().cols())
    throw ShapeError("output gradient shape does not match forward pass");

  Gradients g;
  if (with_params) g.parameters = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t l = layers; l-- > 0;) {
    const int fan_in = spec_.layer_widths[l];
    const int fan_out = spec_.layer_widths[l + 1];
    apply_activation_grad(l + 1 == layers ? spec_.output_activation : spec_.hidden_activation,
                          cache.outputs[l], delta);
    if (with_params) {
      double* gbase = g.parameters.data() + offsets_[l];
      Eigen::Map<RowMajor> gw(gbase, fan_out, fan_in);
      Eigen::Map<Eigen::VectorXd> gb(gbase + fan_in * fan_out, fan_out);
      gw.noalias() = delta * cache.inputs[l].transpose();
      gb = delta.rowwise().sum();
    }
    Eigen::Map<const RowMajor> w(params_.data() + offsets_[l], fan_out, fan_in);
    delta = w.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

OptimizerState OptimizerState::for_network(const Network& net, double lr) {
  OptimizerState s;
  s.first_moment = Eigen::VectorXd::Zero(net.parameters().size());
  s.second_moment = Eigen::VectorXd::Zero(net.parameters().size());
  s.lr = lr;
  return s;
}

void adam_step(Network& net, const Eigen::VectorXd& grads, OptimizerState& opt) {
  auto& p = net.parameters();
  if (grads.size() != p.size()) throw ShapeError("gradient length does not match parameters");
  if (opt.first_moment.size() != p.size() || opt.second_moment.size() != p.size())
    throw ShapeError("optimizer moments do not match parameters");
  for (Eigen::Index i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw NumericError("non-finite gradient at component " + std::to_string(i));

  ++opt.step_count;
  const double t = static_cast<double>(opt.step_count);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  opt.first_moment = opt.beta1 * opt.first_moment + (1.0 - opt.beta1) * grads;
  opt.second_moment = opt.beta2 * opt.second_moment + (1.0 - opt.beta2) * grads.cwiseProduct(grads);
  p.array() -= opt.lr * (opt.first_moment.array() / bc1) /
               ((opt.second_moment.array() / bc2).sqrt() + opt.eps);
}

void soft_update(Network& target, const Network& online, double tau) {
  if (!(target.spec() == online.spec())) throw ShapeError("soft_update between different specs");
  if (tau < 0.0 || tau > 1.0) throw ParameterError("tau must lie in [0, 1]");
  if (tau == 1.0) {
    target.parameters() = online.parameters();
    return;
  }
  target.parameters() = tau * online.parameters() + (1.0 - tau) * target.parameters();
}

double max_relative_error(const std::function<double(const Eigen::VectorXd&)>& loss,
                          const Eigen::VectorXd& at, const Eigen::VectorXd& analytic, double eps) {
  if (analytic.size() != at.size()) throw ShapeError("analytic gradient length mismatch");
  double worst = 0.0;
  Eigen::VectorXd probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    probe[i] = at[i] + eps;
    const double up = loss(probe);
    probe[i] = at[i] - eps;
    const double down = loss(probe);
    probe[i] = at[i];
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

double grad_check(const Network& net, std::span<const double> input, double eps, const BackwardFn& backward) {
  const Eigen::MatrixXd x = to_column(input);
  ForwardCache cache;
  const Eigen::MatrixXd y = net.forward_batch(x, &cache);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(y.rows(), y.cols());
  const Gradients g = backward ? backward(net, cache, ones) : net.backward(cache, ones);

  Network probe = net;
  auto loss = [&](const Eigen::VectorXd& p) {
    probe.parameters() = p;
    return probe.forward_batch(x).sum();
  };
  return max_relative_error(loss, net.parameters(), g.parameters, eps);
}

void write_network(std::ostream& out, const Network& net) {
  const auto& spec = net.spec();
  put_u64(out, spec.layer_widths.size() + 2);
  for (int w : spec.layer_widths) put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(w)));
  put_u64(out, static_cast<std::uint64_t>(spec.hidden_activation));
  put_u64(out, static_cast<std::uint64_t>(spec.output_activation));
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i)
    put_u64(out, std::bit_cast<std::uint64_t>(net.parameters()[i]));
}

Network read_network(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  if (n < 4 || n > 1024) throw ParseError("implausible spec length in network snapshot");
  NetworkSpec spec;
  for (std::uint64_t i = 0; i + 2 < n; ++i)
    spec.layer_widths.push_back(static_cast<int>(static_cast<std::int64_t>(get_u64(in))));
  auto act = [](std::uint64_t code) {
    if (code > 2) throw ParseError("unknown activation code in network snapshot");
    return static_cast<Activation>(code);
  };
  spec.hidden_activation = act(get_u64(in));
  spec.output_activation = act(get_u64(in));
  try {
    spec.validate();
  } catch (const ShapeError& e) {
    throw ParseError(std::string("bad spec in network snapshot: ") + e.what());
  }
  Network net(spec);
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i)
    net.parameters()[i] = std::bit_cast<double>(get_u64(in));
  return net;
}

void save_network(const std::string& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open '" + path + "' for writing");
  write_network(out, net);
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint '" + path + "'");
  return read_network(in);
}

Eigen::MatrixXd to_column(std::span<const double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

}  // namespace dws
