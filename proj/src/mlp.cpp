#include "bfvae/mlp.hpp"

#include <cmath>

namespace bfvae::nn {

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) throw ConfigError("MlpSpec: need at least input and output widths");
  for (auto w : layer_widths)
    if (w == 0) throw ConfigError("MlpSpec: zero layer width");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("MlpSpec: dropout_rate must be in [0,1)");
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

ParamSet ParamSet::join(const ParamSet& a, const ParamSet& b) {
  ParamSet out = a;
  for (std::size_t i = 0; i < b.size(); ++i) out.add(b.names[i], b.values[i]);
  return out;
}

ParamSet mlp_init(const MlpSpec& spec, Rng& rng, const std::string& prefix) {
  spec.validate();
  ParamSet p;
  const std::size_t layers = spec.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec.layer_widths[l];
    const std::size_t out = spec.layer_widths[l + 1];
    const bool hidden = l + 1 < layers;
    const Activation& act = hidden ? spec.activation : spec.output_activation;
    double bound = 0.0;
    if (hidden && (act.kind == ActivationKind::ReLU || act.kind == ActivationKind::LeakyReLU)) {
      double slope = act.kind == ActivationKind::LeakyReLU ? act.slope : 0.0;
      if (spec.kaiming_a > 0.0) slope = spec.kaiming_a;
      const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
      bound = gain * std::sqrt(3.0 / static_cast<double>(in));
    } else {
      bound = std::sqrt(6.0 / static_cast<double>(in + out));
    }
    p.add(prefix + std::to_string(l) + ".weight", uniform(in, out, -bound, bound, rng));
    p.add(prefix + std::to_string(l) + ".bias", Tensor2(1, out));
  }
  return p;
}

std::vector<Var> bind(Tape& tape, const ParamSet& params, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& v : params.values) vars.push_back(trainable ? tape.parameter(v) : tape.constant(v));
  return vars;
}

ParamSet collect_grads(const ParamSet& params, std::span<const Var> vars) {
  ParamSet g;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor2& gr = vars[i].grad();
    g.add(params.names[i], gr.size() == params.values[i].size()
                               ? gr
                               : Tensor2(params.values[i].rows(), params.values[i].cols()));
  }
  return g;
}

Var apply_activation(Var x, const Activation& act) {
  switch (act.kind) {
    case ActivationKind::ReLU:
      return relu(x);
    case ActivationKind::LeakyReLU:
      return leaky_relu(x, act.slope);
    case ActivationKind::Sigmoid:
      return sigmoid(x);
    case ActivationKind::Identity:
      return x;
  }
  return x;
}

namespace {

void check_input(const MlpSpec& spec, std::size_t params, std::size_t cols) {
  if (params != 2 * spec.num_layers()) throw DimensionError("mlp: parameter count does not match spec");
  if (cols != spec.input_width()) {
    throw DimensionError("mlp: input has " + std::to_string(cols) + " columns, spec expects " +
                         std::to_string(spec.input_width()));
  }
}

double activate(double x, const Activation& act) {
  switch (act.kind) {
    case ActivationKind::ReLU:
      return x > 0.0 ? x : 0.0;
    case ActivationKind::LeakyReLU:
      return x > 0.0 ? x : act.slope * x;
    case ActivationKind::Sigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case ActivationKind::Identity:
      return x;
  }
  return x;
}

}  // namespace

Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, Var input, bool training, Rng& rng) {
  check_input(spec, params.size(), input.cols());
  const std::size_t layers = spec.num_layers();
  Var h = input;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add_row(matmul(h, params[2 * l]), params[2 * l + 1]);
    const bool hidden = l + 1 < layers;
    h = apply_activation(h, hidden ? spec.activation : spec.output_activation);
    if (hidden && training && spec.dropout_rate > 0.0) {
      const double keep = 1.0 - spec.dropout_rate;
      std::bernoulli_distribution bd(keep);
      Tensor2 mask(h.rows(), h.cols());
      for (double& m : mask.data()) m = bd(rng) ? 1.0 / keep : 0.0;
      h = mul_const(h, mask);
    }
  }
  return h;
}

Tensor2 mlp_infer(const MlpSpec& spec, const ParamSet& params, const Tensor2& input) {
  check_input(spec, params.size(), input.cols());
  const std::size_t layers = spec.num_layers();
  RowMajorMatrix h = input.eigen();
  for (std::size_t l = 0; l < layers; ++l) {
    RowMajorMatrix next = h * params.values[2 * l].eigen();
    next.rowwise() += params.values[2 * l + 1].eigen().row(0);
    const Activation& act = (l + 1 < layers) ? spec.activation : spec.output_activation;
    if (act.kind != ActivationKind::Identity) next = next.unaryExpr([&act](double x) { return activate(x, act); });
    h = std::move(next);
  }
  return Tensor2::from_eigen(h);
}

}  // namespace bfvae::nn
