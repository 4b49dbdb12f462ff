#pragma once

#include <functional>
#include <span>

#include "bfvae/autodiff.hpp"
#include "bfvae/mlp.hpp"

namespace bfvae::nn {

/// Builds a 1x1 scalar on `tape` from the bound parameter variables.
using ScalarGraph = std::function<Var(Tape& tape, std::span<const Var> params)>;

/// Max over all scalar parameters of |analytic − central difference| / max(1, |analytic|).
double grad_check(const ScalarGraph& f, const ParamSet& params, double h = 1e-5);

}  // namespace bfvae::nn
