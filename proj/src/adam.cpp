#include "bfvae/adam.hpp"

#include <cmath>

namespace bfvae::nn {

AdamState AdamState::for_params(const ParamSet& params, double lr, double beta1, double beta2, double eps) {
  if (!(lr > 0.0)) throw ConfigError("Adam: learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("Adam: betas must lie in (0,1)");
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const auto& v : params.values) {
    s.first_moment.emplace_back(v.rows(), v.cols());
    s.second_moment.emplace_back(v.rows(), v.cols());
  }
  return s;
}

std::pair<ParamSet, AdamState> adam_step(ParamSet params, AdamState state, const ParamSet& grads) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size())
    throw DimensionError("adam_step: parameter/gradient/state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params.values[i], grads.values[i], "adam_step");
    if (!grads.values[i].all_finite()) throw DivergenceError("non-finite gradient in " + params.names[i]);
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.values[i].data();
    auto g = grads.values[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
  return {std::move(params), std::move(state)};
}

ParamSet sgd_step(ParamSet params, const ParamSet& grads, double lr) {
  if (grads.size() != params.size()) throw DimensionError("sgd_step: parameter/gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params.values[i], grads.values[i], "sgd_step");
    if (!grads.values[i].all_finite()) throw DivergenceError("non-finite gradient in " + params.names[i]);
    auto p = params.values[i].data();
    auto g = grads.values[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
  return params;
}

}  // namespace bfvae::nn
