#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "age/dictionary.hpp"
#include "age/latent.hpp"

namespace age {

inline constexpr std::size_t kEncoderDepth = 5;

// One five-layer perceptron: input -> h -> h -> h -> h -> output. Leaky
// rectifier after the first four layers, linear output.
struct Mlp {
  std::vector<Matrix> weights;  // kEncoderDepth entries
  std::vector<Vector> biases;

  std::size_t input_size() const { return static_cast<std::size_t>(weights.front().cols()); }
  std::size_t output_size() const { return static_cast<std::size_t>(weights.back().rows()); }
  std::size_t parameter_count() const;

  static Mlp zeros(std::size_t input, std::size_t hidden, std::size_t output);
  static Mlp zeros_like(const Mlp& other);

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

struct EncoderDims {
  std::size_t dim = 0;          // latent dim per layer
  std::size_t hidden = 256;
  std::size_t code_size = 100;  // l
  double leak_slope = 0.2;

  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

// One independent encoder per layer group; group g reads the flattened
// Delta-w rows of its layers.
struct EncoderParams {
  LayerGrouping grouping;
  EncoderDims dims;
  std::vector<Mlp> nets;

  std::size_t parameter_count() const;
  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

using EncoderGradients = std::vector<Mlp>;

struct ForwardCache {
  std::size_t group = 0;
  Vector input;
  std::vector<Vector> pre_activations;  // z_1..z_5
  std::vector<Vector> activations;      // a_0 = input, a_k = phi(z_k) for k < 5
};

struct BackwardResult {
  Mlp gradients;  // for the cached group's network
  Vector grad_input;
};

EncoderParams init_params(const LayerGrouping& grouping, const EncoderDims& dims,
                          std::uint64_t seed);

double leaky_relu(double x, double slope);

// Rows of `delta` belonging to `group`, flattened layer-major.
Vector group_slice(const DeltaCode& delta, const LayerGrouping& grouping, std::size_t group);

std::pair<Vector, ForwardCache> mlp_forward(const Mlp& net, const Vector& input, double leak_slope);
std::pair<Vector, ForwardCache> mlp_forward(const EncoderParams& params, const DeltaCode& delta,
                                            std::size_t group);

// Reverse-mode gradients of <output, grad_output>. The rectifier's derivative
// at exactly zero is the leak slope.
BackwardResult mlp_backward(const Mlp& net, const ForwardCache& cache, const Vector& grad_output,
                            double leak_slope);
BackwardResult mlp_backward(const EncoderParams& params, const ForwardCache& cache,
                            const Vector& grad_output);

// Column-batched variants: column j of `inputs` is one sample. Gradients are
// summed over the batch.
struct BatchForwardCache {
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;
};
std::pair<Matrix, BatchForwardCache> mlp_forward_batch(const Mlp& net, const Matrix& inputs,
                                                       double leak_slope);
Mlp mlp_backward_batch(const Mlp& net, const BatchForwardCache& cache, const Matrix& grad_outputs,
                       double leak_slope);

// Encodes every group of `delta`.
SparseCode encode(const EncoderParams& params, const DeltaCode& delta);

// Worst relative error between the analytic gradient of sum(outputs) and
// central differences with step `eps`, over every weight, bias and input
// entry. Entries where both sides vanish count as zero error.
double finite_diff_check(const Mlp& net, const Vector& input, double eps, double leak_slope);

// Relative error |a - b| / max(|a|, |b|, floor); 0 when both are zero.
inline constexpr double kGradientFloor = 1e-6;
double gradient_relative_error(double analytic, double numeric);

}  // namespace age
