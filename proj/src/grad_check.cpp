#include "bfvae/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace bfvae::nn {

namespace {

double evaluate(const ScalarGraph& f, const ParamSet& params) {
  Tape tape;
  auto vars = bind(tape, params, false);
  return f(tape, vars).scalar();
}

}  // namespace

double grad_check(const ScalarGraph& f, const ParamSet& params, double h) {
  Tape tape;
  auto vars = bind(tape, params, true);
  Var out = f(tape, vars);
  tape.backward(out);
  const ParamSet analytic = collect_grads(params, vars);

  double worst = 0.0;
  ParamSet probe = params;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    auto values = probe.values[t].data();
    const auto grads = analytic.values[t].data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + h;
      const double up = evaluate(f, probe);
      values[j] = saved - h;
      const double down = evaluate(f, probe);
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(grads[j] - numeric) / std::max(1.0, std::abs(grads[j]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace bfvae::nn
