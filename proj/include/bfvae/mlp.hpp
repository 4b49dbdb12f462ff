#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bfvae/autodiff.hpp"
#include "bfvae/rng.hpp"
#include "bfvae/tensor.hpp"

namespace bfvae::nn {

enum class ActivationKind { ReLU, LeakyReLU, Sigmoid, Identity };

struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  double slope = 0.01;  // LeakyReLU only

  static Activation relu() { return {ActivationKind::ReLU, 0.0}; }
  static Activation leaky_relu(double slope) { return {ActivationKind::LeakyReLU, slope}; }
  static Activation sigmoid() { return {ActivationKind::Sigmoid, 0.0}; }
  static Activation identity() { return {ActivationKind::Identity, 0.0}; }
};

/// Fully connected stack. Hidden layers use `activation` followed by dropout
/// (training passes only); the last layer uses `output_activation`.
struct MlpSpec {
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::relu();
  Activation output_activation = Activation::identity();
  double dropout_rate = 0.0;
  /// Negative-slope argument of the Kaiming gain √(2/(1+a²)) for hidden
  /// layers; 0 uses the activation's own slope.
  double kaiming_a = 0.0;

  std::size_t input_width() const { return layer_widths.front(); }
  std::size_t output_width() const { return layer_widths.back(); }
  std::size_t num_layers() const { return layer_widths.size() - 1; }
  void validate() const;
};

/// Named parameter tensors in a fixed order.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor2> values;

  std::size_t size() const noexcept { return values.size(); }
  void add(std::string name, Tensor2 value) {
    names.push_back(std::move(name));
    values.push_back(std::move(value));
  }
  std::size_t scalar_count() const;
  /// Concatenation, preserving order.
  static ParamSet join(const ParamSet& a, const ParamSet& b);
};

/// Kaiming-uniform weights for hidden layers, Xavier-uniform for the output
/// layer, zero biases. Layer l stores "<prefix>l.weight" (in×out) and
/// "<prefix>l.bias" (1×out).
ParamSet mlp_init(const MlpSpec& spec, Rng& rng, const std::string& prefix);

/// Places every tensor on the tape; trainable tensors accumulate gradients.
std::vector<Var> bind(Tape& tape, const ParamSet& params, bool trainable);
/// Gradients of bound parameters after Tape::backward (zeros when untouched).
ParamSet collect_grads(const ParamSet& params, std::span<const Var> vars);

/// Recorded forward pass; gradients of any scalar of the output flow back to
/// `params` and `input`. Dropout is the identity when `training` is false.
Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, Var input, bool training, Rng& rng);

/// Inference-only forward pass (no tape, no dropout).
Tensor2 mlp_infer(const MlpSpec& spec, const ParamSet& params, const Tensor2& input);

Var apply_activation(Var x, const Activation& act);

}  // namespace bfvae::nn
