#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bfvae/mlp.hpp"

namespace bfvae::nn {

struct AdamState {
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor2> first_moment;
  std::vector<Tensor2> second_moment;

  /// Zero moments shaped like `params`.
  static AdamState for_params(const ParamSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                              double eps = 1e-8);
};

/// One bias-corrected Adam update. Takes ownership of params and state and
/// returns the updated pair; a non-finite gradient throws DivergenceError
/// naming the offending tensor.
std::pair<ParamSet, AdamState> adam_step(ParamSet params, AdamState state, const ParamSet& grads);

/// Plain gradient descent p ← p − lr·g with the same finiteness check.
ParamSet sgd_step(ParamSet params, const ParamSet& grads, double lr);

}  // namespace bfvae::nn
