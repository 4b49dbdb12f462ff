#include "bfvae/fvh_lt.hpp"

#include <cmath>

#include "bfvae/error.hpp"

namespace bfvae::fvh {

void TraversalSpec::validate() const {
  if (steps < 2) throw ConfigError("traversal: steps must be at least 2 to compute a variance");
  if (!(param > 0.0) || !std::isfinite(param)) throw ConfigError("traversal: range parameter must be positive");
}

std::pair<double, double> TraversalSpec::range(double mu, double sigma) const {
  switch (strategy) {
    case RangeStrategy::FixedRange:
      return {-param, param};
    case RangeStrategy::PosteriorScaled:
      return {mu - param * sigma, mu + param * sigma};
    case RangeStrategy::PosteriorCentered:
      return {mu - param, mu + param};
  }
  return {0.0, 0.0};
}

std::string strategy_name(RangeStrategy s) {
  switch (s) {
    case RangeStrategy::FixedRange:
      return "fixed";
    case RangeStrategy::PosteriorScaled:
      return "posterior-scaled";
    case RangeStrategy::PosteriorCentered:
      return "posterior-centered";
  }
  return "unknown";
}

std::optional<RangeStrategy> parse_strategy(const std::string& name) {
  for (auto s : {RangeStrategy::FixedRange, RangeStrategy::PosteriorScaled, RangeStrategy::PosteriorCentered})
    if (strategy_name(s) == name) return s;
  return std::nullopt;
}

nlohmann::json traversal_to_json(const TraversalSpec& t) {
  return {{"strategy", strategy_name(t.strategy)}, {"param", t.param}, {"steps", t.steps}};
}

TraversalSpec traversal_from_json(const nlohmann::json& j) {
  TraversalSpec t;
  const auto name = j.value("strategy", strategy_name(t.strategy));
  const auto s = parse_strategy(name);
  if (!s) throw ConfigError("traversal: unknown strategy '" + name + "'");
  t.strategy = *s;
  t.param = j.value("param", t.param);
  t.steps = j.value("steps", t.steps);
  return t;
}

std::vector<double> grid(double lo, double hi, std::size_t steps) {
  if (steps < 2) throw ConfigError("traversal: steps must be at least 2");
  std::vector<double> g(steps);
  const double step = (hi - lo) / static_cast<double>(steps - 1);
  for (std::size_t l = 0; l < steps; ++l) g[l] = lo + step * static_cast<double>(l);
  g.back() = hi;
  return g;
}

std::vector<double> column_variance(const Tensor2& block) {
  const std::size_t n = block.rows();
  if (n < 2) throw ConfigError("variance needs at least 2 rows");
  std::vector<double> out(block.cols());
  for (std::size_t j = 0; j < block.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t l = 0; l < n; ++l) mean += block(l, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t l = 0; l < n; ++l) ss += (block(l, j) - mean) * (block(l, j) - mean);
    out[j] = ss / static_cast<double>(n - 1);
  }
  return out;
}

namespace {

void check_inputs(const vae::VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                  const TraversalSpec& spec) {
  spec.validate();
  if (x.cols() != model.feature_dim) throw DimensionError("fvh-lt: data width does not match the model");
  if (model.conditional && (!condition || condition->rows() != x.rows()))
    throw DimensionError("fvh-lt: conditional model needs one condition value per row");
}

/// Latent block (L rows) for traversing dim k of sample i.
Tensor2 latent_block(const vae::VaeModel& model, std::span<const double> mu, std::span<const double> log_var,
                     std::optional<double> condition, std::size_t i, std::size_t k, const TraversalSpec& spec,
                     Rng& rng) {
  const std::size_t dims = model.latent_dim;
  if (k >= dims) throw DimensionError("traversal: latent index out of range");
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> base(dims);
  for (std::size_t d = 0; d < dims; ++d) base[d] = mu[d] + std::exp(0.5 * log_var[d]) * nd(rng);
  const auto [lo, hi] = spec.range(mu[k], std::exp(0.5 * log_var[k]));
  if (!(hi - lo > 0.0) || !std::isfinite(hi - lo)) throw DegenerateRangeError(i, k);
  const auto g = grid(lo, hi, spec.steps);
  Tensor2 z(spec.steps, model.decoder_input_width());
  for (std::size_t l = 0; l < spec.steps; ++l) {
    for (std::size_t d = 0; d < dims; ++d) z(l, d) = base[d];
    z(l, k) = g[l];
    if (condition) z(l, dims) = *condition;
  }
  return z;
}

Tensor2 mean_over_samples(const Tensor2& per_sample, std::size_t k, std::size_t p) {
  // per_sample: n × (K·p); column-wise pairwise means.
  Tensor2 out(k, p);
  std::vector<double> col(per_sample.rows());
  for (std::size_t c = 0; c < k * p; ++c) {
    for (std::size_t i = 0; i < per_sample.rows(); ++i) col[i] = per_sample(i, c);
    out(c / p, c % p) = per_sample.rows() == 0 ? 0.0 : pairwise_sum(col) / static_cast<double>(col.size());
  }
  return out;
}

AssociationMatrix finish(const vae::VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                         Tensor2 values) {
  AssociationMatrix a;
  a.kind = AssociationKind::FvhLtVariance;
  a.values = std::move(values);
  const auto stats = vae::posterior_stats(model, x, condition);
  a.mean_kl = stats.mean_kl();
  if (model.latent_dim >= 2) a.informative = gas::split_informative(a.mean_kl).informative;
  return a;
}

}  // namespace

Tensor2 traverse_dimension(const vae::VaeModel& model, std::span<const double> mu, std::span<const double> log_var,
                           std::optional<double> condition, std::size_t i, std::size_t k, const TraversalSpec& spec,
                           Rng& rng) {
  spec.validate();
  if (mu.size() != model.latent_dim || log_var.size() != model.latent_dim)
    throw DimensionError("traversal: posterior row width does not match latent dim");
  if (model.conditional != condition.has_value())
    throw ConfigError("traversal: condition value must be given exactly for conditional models");
  return vae::decode(model, latent_block(model, mu, log_var, condition, i, k, spec, rng));
}

AssociationMatrix fvh_lt_run(const vae::VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                             const TraversalSpec& spec, std::uint64_t seed) {
  check_inputs(model, x, condition, spec);
  const std::size_t n = x.rows();
  const std::size_t dims = model.latent_dim;
  const std::size_t p = model.feature_dim;
  const std::size_t steps = spec.steps;
  Rng unused(0);
  const auto enc = vae::encode(model, x, model.conditional ? condition : std::nullopt, true, unused);

  Tensor2 per_sample(n, dims * p);
  std::optional<DegenerateRangeError> failure;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      std::optional<double> c;
      if (model.conditional) c = (*condition)(i, 0);
      Tensor2 z(dims * steps, model.decoder_input_width());
      for (std::size_t k = 0; k < dims; ++k) {
        Rng rng(derive_seed(seed, {i, k}));
        const Tensor2 block = latent_block(model, enc.mu.row(i), enc.log_var.row(i), c, i, k, spec, rng);
        std::copy(block.data().begin(), block.data().end(), z.row(k * steps).begin());
      }
      const Tensor2 decoded = vae::decode(model, z);
      for (std::size_t k = 0; k < dims; ++k) {
        const auto var = column_variance(decoded.slice_rows(k * steps, steps));
        std::copy(var.begin(), var.end(), per_sample.row(i).begin() + static_cast<std::ptrdiff_t>(k * p));
      }
    } catch (const DegenerateRangeError& e) {
#pragma omp critical
      {
        if (!failure || e.sample() < failure->sample()) failure = e;
      }
    }
  }
  if (failure) throw *failure;
  return finish(model, x, condition, mean_over_samples(per_sample, dims, p));
}

AssociationMatrix fvh_lt_run_reference(const vae::VaeModel& model, const Tensor2& x,
                                       const std::optional<Tensor2>& condition, const TraversalSpec& spec,
                                       std::uint64_t seed) {
  check_inputs(model, x, condition, spec);
  const std::size_t n = x.rows();
  const std::size_t dims = model.latent_dim;
  const std::size_t p = model.feature_dim;
  Tensor2 sum(dims, p);
  for (std::size_t i = 0; i < n; ++i) {
    Rng unused(0);
    std::optional<Tensor2> ci;
    if (model.conditional) ci = condition->slice_rows(i, 1);
    const auto enc = vae::encode(model, x.slice_rows(i, 1), ci, true, unused);
    for (std::size_t k = 0; k < dims; ++k) {
      Rng rng(derive_seed(seed, {i, k}));
      std::optional<double> c;
      if (ci) c = (*ci)(0, 0);
      const Tensor2 z = latent_block(model, enc.mu.row(0), enc.log_var.row(0), c, i, k, spec, rng);
      Tensor2 decoded(spec.steps, p);
      for (std::size_t l = 0; l < spec.steps; ++l) {
        const Tensor2 one = vae::decode(model, z.slice_rows(l, 1));
        std::copy(one.data().begin(), one.data().end(), decoded.row(l).begin());
      }
      const auto var = column_variance(decoded);
      for (std::size_t j = 0; j < p; ++j) sum(k, j) += var[j];
    }
  }
  if (n > 0)
    for (double& v : sum.data()) v /= static_cast<double>(n);
  return finish(model, x, condition, std::move(sum));
}

AssociationMatrix fvh_lt_aggregate(std::span<const AssociationMatrix> runs, const gas::AlignmentMapping& mapping) {
  return gas::aggregate_aligned(runs, mapping);
}

std::vector<double> cvae_quality_traversal(const vae::VaeModel& model, const Tensor2& x, const Tensor2& condition,
                                           double y_lo, double y_hi, std::size_t steps, std::uint64_t seed) {
  if (!model.conditional) throw ConfigError("quality traversal requires a conditional model");
  if (condition.rows() != x.rows() || condition.cols() != 1)
    throw DimensionError("quality traversal: condition must be n x 1");
  if (!(y_hi > y_lo)) throw ConfigError("quality traversal: label range is degenerate");
  const std::size_t n = x.rows();
  const std::size_t dims = model.latent_dim;
  const std::size_t p = model.feature_dim;
  Rng unused(0);
  const auto enc = vae::encode(model, x, condition, true, unused);
  const auto g = grid(y_lo, y_hi, steps);

  Tensor2 per_sample(n, p);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i, dims}));
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor2 z(steps, dims + 1);
    std::vector<double> base(dims);
    for (std::size_t d = 0; d < dims; ++d) base[d] = enc.mu(i, d) + std::exp(0.5 * enc.log_var(i, d)) * nd(rng);
    for (std::size_t l = 0; l < steps; ++l) {
      for (std::size_t d = 0; d < dims; ++d) z(l, d) = base[d];
      z(l, dims) = g[l];
    }
    const auto var = column_variance(vae::decode(model, z));
    std::copy(var.begin(), var.end(), per_sample.row(i).begin());
  }
  const Tensor2 mean = mean_over_samples(per_sample, 1, p);
  return {mean.data().begin(), mean.data().end()};
}

}  // namespace bfvae::fvh
