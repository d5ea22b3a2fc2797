#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "oodkit/linalg.hpp"

namespace ood {

struct DenseLayer {
  Matrix weight;  // out × in
  Vector bias;    // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// tanh feed-forward stack followed by a linear softmax head. The last
/// hidden activation is the representation h scored by every detector.
struct EncoderParams {
  std::vector<DenseLayer> layers;
  Matrix softmax_weights;  // C × d, row j is w_j
  Vector softmax_bias;     // C

  std::size_t input_dim() const;
  std::size_t rep_dim() const { return softmax_weights.cols(); }
  std::size_t num_classes() const { return softmax_weights.rows(); }

  /// Same shapes, all entries zero. Used for gradients and Adam moments.
  EncoderParams zeros_like() const;
  std::size_t parameter_count() const;

  /// Every tensor in a fixed order: layer weights and biases, then the head.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

using ParamGrads = EncoderParams;

/// Glorot-uniform weights, zero biases. hidden_dims may be empty, in which
/// case a single layer maps input_dim → rep_dim.
EncoderParams init_params(std::size_t input_dim, std::span<const std::size_t> hidden_dims,
                          std::size_t rep_dim, std::size_t num_classes, std::uint64_t seed);

inline constexpr double kMinRepNorm = 1e-30;

struct ForwardRecord {
  std::vector<Vector> activations;      // [0] is the input, [k+1] = tanh(pre[k])
  std::vector<Vector> pre_activations;  // one per layer
  Vector h;
  double h_norm = 0.0;
  /// Unit-norm h. Left empty when ‖h‖ ≤ kMinRepNorm; use unit_rep() to
  /// access it with a DegenerateRepresentation error in that case.
  Vector z;
  Vector logits;
  Vector probs;

  bool degenerate() const noexcept { return z.empty(); }
  const Vector& unit_rep() const;
};

Vector softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> values);

ForwardRecord forward(const EncoderParams& params, std::span<const double> x);

/// Upstream gradient for one example. An empty vector stands for zero.
struct UpstreamGrad {
  Vector logits;
  Vector h;
  Vector z;
};

/// Backpropagates a batch of upstream gradients through the head, the
/// normalization z = h/‖h‖ and the tanh stack; returns the summed parameter
/// gradients.
ParamGrads backward(const EncoderParams& params, std::span<const ForwardRecord> records,
                    std::span<const UpstreamGrad> grads);

struct AdamState {
  double lr = 1e-3;
  std::size_t total_steps = 1;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(double lr, std::size_t total_steps) : lr(lr), total_steps(total_steps) {}

  /// lr · (1 − step/T) for the upcoming step.
  double effective_rate() const;
};

/// One Adam update with linear decay of the rate to zero at total_steps.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);
void adam_step(AdamState& state, EncoderParams& params, const ParamGrads& grads);

nlohmann::json params_to_json(const EncoderParams& params);
EncoderParams params_from_json(const nlohmann::json& j);

}  // namespace ood
