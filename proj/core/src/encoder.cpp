#include "age/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "age/error.hpp"
#include "age/random.hpp"

namespace age {
namespace {

Vector apply_leaky(const Vector& z, double slope) {
  return z.unaryExpr([slope](double x) { return leaky_relu(x, slope); });
}

void check_net(const Mlp& net) {
  if (net.weights.size() != kEncoderDepth || net.biases.size() != kEncoderDepth) {
    throw ShapeError("encoder network must have five layers");
  }
}

}  // namespace

double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    n += static_cast<std::size_t>(weights[k].size() + biases[k].size());
  }
  return n;
}

Mlp Mlp::zeros(std::size_t input, std::size_t hidden, std::size_t output) {
  Mlp net;
  std::size_t fan_in = input;
  for (std::size_t k = 0; k < kEncoderDepth; ++k) {
    const std::size_t fan_out = k + 1 == kEncoderDepth ? output : hidden;
    net.weights.push_back(Matrix::Zero(static_cast<Eigen::Index>(fan_out),
                                       static_cast<Eigen::Index>(fan_in)));
    net.biases.push_back(Vector::Zero(static_cast<Eigen::Index>(fan_out)));
    fan_in = fan_out;
  }
  return net;
}

Mlp Mlp::zeros_like(const Mlp& other) {
  Mlp net;
  for (std::size_t k = 0; k < other.weights.size(); ++k) {
    net.weights.push_back(Matrix::Zero(other.weights[k].rows(), other.weights[k].cols()));
    net.biases.push_back(Vector::Zero(other.biases[k].size()));
  }
  return net;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& net : nets) n += net.parameter_count();
  return n;
}

EncoderParams init_params(const LayerGrouping& grouping, const EncoderDims& dims,
                          std::uint64_t seed) {
  if (dims.dim == 0 || dims.hidden == 0 || dims.code_size == 0) {
    throw ConfigError("encoder dims must be positive");
  }
  EncoderParams params{grouping, dims, {}};
  for (std::size_t g = 0; g < grouping.group_count(); ++g) {
    Rng rng(derive_seed(seed, g));
    Mlp net = Mlp::zeros(grouping.group_size(g) * dims.dim, dims.hidden, dims.code_size);
    for (auto& w : net.weights) {
      // Kaiming-style: std = sqrt(2 / (fan_in (1 + slope^2))), uniform
      // half-width sqrt(3) std.
      const double fan_in = static_cast<double>(w.cols());
      const double std_dev =
          std::sqrt(2.0 / (fan_in * (1.0 + dims.leak_slope * dims.leak_slope)));
      const double half_width = std::sqrt(3.0) * std_dev;
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-half_width, half_width);
      }
    }
    params.nets.push_back(std::move(net));
  }
  return params;
}

Vector group_slice(const DeltaCode& delta, const LayerGrouping& grouping, std::size_t group) {
  if (delta.layers() != grouping.layer_count()) {
    throw ShapeError("delta has " + std::to_string(delta.layers()) + " layers, grouping expects " +
                     std::to_string(grouping.layer_count()));
  }
  const auto [begin, end] = grouping.range(group);
  const auto dim = static_cast<Eigen::Index>(delta.dim());
  Vector v((static_cast<Eigen::Index>(end - begin)) * dim);
  for (std::size_t l = begin; l < end; ++l) {
    v.segment(static_cast<Eigen::Index>(l - begin) * dim, dim) = delta.layer(l);
  }
  return v;
}

std::pair<Vector, ForwardCache> mlp_forward(const Mlp& net, const Vector& input,
                                            double leak_slope) {
  check_net(net);
  if (static_cast<std::size_t>(input.size()) != net.input_size()) {
    throw ShapeError("encoder input has length " + std::to_string(input.size()) + ", expected " +
                     std::to_string(net.input_size()));
  }
  ForwardCache cache;
  cache.input = input;
  cache.activations.push_back(input);
  for (std::size_t k = 0; k < kEncoderDepth; ++k) {
    Vector z = net.weights[k] * cache.activations.back() + net.biases[k];
    if (k + 1 < kEncoderDepth) cache.activations.push_back(apply_leaky(z, leak_slope));
    cache.pre_activations.push_back(std::move(z));
  }
  Vector out = cache.pre_activations.back();
  return {std::move(out), std::move(cache)};
}

std::pair<Vector, ForwardCache> mlp_forward(const EncoderParams& params, const DeltaCode& delta,
                                            std::size_t group) {
  if (group >= params.nets.size()) throw RangeError("group index out of range");
  if (delta.dim() != params.dims.dim) throw ShapeError("delta dim does not match encoder");
  auto result =
      mlp_forward(params.nets[group], group_slice(delta, params.grouping, group), params.dims.leak_slope);
  result.second.group = group;
  return result;
}

BackwardResult mlp_backward(const Mlp& net, const ForwardCache& cache, const Vector& grad_output,
                            double leak_slope) {
  check_net(net);
  if (cache.pre_activations.size() != kEncoderDepth ||
      cache.activations.size() != kEncoderDepth ||
      static_cast<std::size_t>(cache.input.size()) != net.input_size()) {
    throw ShapeError("forward cache does not match the network");
  }
  for (std::size_t k = 0; k < kEncoderDepth; ++k) {
    if (cache.pre_activations[k].size() != net.weights[k].rows()) {
      throw ShapeError("forward cache does not match the network");
    }
  }
  if (static_cast<std::size_t>(grad_output.size()) != net.output_size()) {
    throw ShapeError("output gradient has wrong length");
  }
  BackwardResult result{Mlp::zeros_like(net), {}};
  Vector g = grad_output;
  for (std::size_t k = kEncoderDepth; k-- > 0;) {
    result.gradients.weights[k].noalias() = g * cache.activations[k].transpose();
    result.gradients.biases[k] = g;
    Vector upstream = net.weights[k].transpose() * g;
    if (k > 0) {
      const Vector& z = cache.pre_activations[k - 1];
      for (Eigen::Index i = 0; i < upstream.size(); ++i) {
        if (!(z(i) > 0.0)) upstream(i) *= leak_slope;
      }
    }
    g = std::move(upstream);
  }
  result.grad_input = std::move(g);
  return result;
}

BackwardResult mlp_backward(const EncoderParams& params, const ForwardCache& cache,
                            const Vector& grad_output) {
  if (cache.group >= params.nets.size()) throw ShapeError("cache refers to an unknown group");
  return mlp_backward(params.nets[cache.group], cache, grad_output, params.dims.leak_slope);
}

std::pair<Matrix, BatchForwardCache> mlp_forward_batch(const Mlp& net, const Matrix& inputs,
                                                       double leak_slope) {
  check_net(net);
  if (static_cast<std::size_t>(inputs.rows()) != net.input_size()) {
    throw ShapeError("encoder batch has " + std::to_string(inputs.rows()) + " rows, expected " +
                     std::to_string(net.input_size()));
  }
  BatchForwardCache cache;
  cache.activations.push_back(inputs);
  for (std::size_t k = 0; k < kEncoderDepth; ++k) {
    Matrix z = net.weights[k] * cache.activations.back();
    z.colwise() += net.biases[k];
    if (k + 1 < kEncoderDepth) {
      cache.activations.push_back(
          z.unaryExpr([leak_slope](double x) { return leaky_relu(x, leak_slope); }));
    }
    cache.pre_activations.push_back(std::move(z));
  }
  Matrix out = cache.pre_activations.back();
  return {std::move(out), std::move(cache)};
}

Mlp mlp_backward_batch(const Mlp& net, const BatchForwardCache& cache, const Matrix& grad_outputs,
                       double leak_slope) {
  check_net(net);
  if (cache.pre_activations.size() != kEncoderDepth ||
      grad_outputs.rows() != cache.pre_activations.back().rows() ||
      grad_outputs.cols() != cache.pre_activations.back().cols()) {
    throw ShapeError("batch cache does not match the output gradient");
  }
  Mlp grads = Mlp::zeros_like(net);
  Matrix g = grad_outputs;
  for (std::size_t k = kEncoderDepth; k-- > 0;) {
    grads.weights[k].noalias() = g * cache.activations[k].transpose();
    grads.biases[k] = g.rowwise().sum();
    if (k == 0) break;
    Matrix upstream = net.weights[k].transpose() * g;
    const Matrix& z = cache.pre_activations[k - 1];
    for (Eigen::Index j = 0; j < upstream.cols(); ++j) {
      for (Eigen::Index i = 0; i < upstream.rows(); ++i) {
        if (!(z(i, j) > 0.0)) upstream(i, j) *= leak_slope;
      }
    }
    g = std::move(upstream);
  }
  return grads;
}

SparseCode encode(const EncoderParams& params, const DeltaCode& delta) {
  SparseCode code;
  for (std::size_t g = 0; g < params.nets.size(); ++g) {
    code.groups.push_back(mlp_forward(params, delta, g).first);
  }
  return code;
}

double gradient_relative_error(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  if (diff == 0.0) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
}

double finite_diff_check(const Mlp& net, const Vector& input, double eps, double leak_slope) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw RangeError("finite-difference step must be in (0, 1e-2]");
  auto probe = [&](const Mlp& m, const Vector& x) {
    return mlp_forward(m, x, leak_slope).first.sum();
  };
  const auto [out, cache] = mlp_forward(net, input, leak_slope);
  const auto analytic =
      mlp_backward(net, cache, Vector::Ones(out.size()), leak_slope);

  double worst = 0.0;
  Mlp work = net;
  auto check_entry = [&](double& slot, double grad) {
    const double saved = slot;
    slot = saved + eps;
    const double plus = probe(work, input);
    slot = saved - eps;
    const double minus = probe(work, input);
    slot = saved;
    worst = std::max(worst, gradient_relative_error(grad, (plus - minus) / (2.0 * eps)));
  };
  for (std::size_t k = 0; k < kEncoderDepth; ++k) {
    for (Eigen::Index i = 0; i < work.weights[k].size(); ++i) {
      check_entry(work.weights[k].data()[i], analytic.gradients.weights[k].data()[i]);
    }
    for (Eigen::Index i = 0; i < work.biases[k].size(); ++i) {
      check_entry(work.biases[k](i), analytic.gradients.biases[k](i));
    }
  }
  Vector x = input;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x(i);
    x(i) = saved + eps;
    const double plus = probe(net, x);
    x(i) = saved - eps;
    const double minus = probe(net, x);
    x(i) = saved;
    worst = std::max(worst, gradient_relative_error(analytic.grad_input(i), (plus - minus) / (2.0 * eps)));
  }
  return worst;
}

}  // namespace age
