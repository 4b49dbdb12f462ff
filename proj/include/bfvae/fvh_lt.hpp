#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfvae/association.hpp"
#include "bfvae/gas.hpp"
#include "bfvae/vae.hpp"

namespace bfvae::fvh {

enum class RangeStrategy { FixedRange, PosteriorScaled, PosteriorCentered };

/// Traversal grid: L equally spaced points over [−a, a], [μ − cσ, μ + cσ] or
/// [μ − a, μ + a] depending on the strategy; `param` is a or c.
struct TraversalSpec {
  RangeStrategy strategy = RangeStrategy::FixedRange;
  double param = 15.0;
  std::size_t steps = 21;

  static TraversalSpec fixed(double a, std::size_t steps = 21) { return {RangeStrategy::FixedRange, a, steps}; }
  static TraversalSpec posterior_scaled(double c, std::size_t steps = 21) {
    return {RangeStrategy::PosteriorScaled, c, steps};
  }
  static TraversalSpec centered(double a, std::size_t steps = 21) {
    return {RangeStrategy::PosteriorCentered, a, steps};
  }

  void validate() const;
  /// Resolved endpoints for a posterior (μ, σ).
  std::pair<double, double> range(double mu, double sigma) const;
};

std::string strategy_name(RangeStrategy s);
std::optional<RangeStrategy> parse_strategy(const std::string& name);
nlohmann::json traversal_to_json(const TraversalSpec& t);
TraversalSpec traversal_from_json(const nlohmann::json& j);

/// L equally spaced points from lo to hi inclusive.
std::vector<double> grid(double lo, double hi, std::size_t steps);

/// Unbiased (divisor L−1) variance of each column of an L×p block.
std::vector<double> column_variance(const Tensor2& block);

/// Decoded rows (L×p) for sample `i` while dim k sweeps the grid. The other
/// dims sit at one posterior draw from `rng`; μ and log σ² are the sample's
/// posterior row. Throws DegenerateRangeError(i, k) on a zero-width range.
Tensor2 traverse_dimension(const vae::VaeModel& model, std::span<const double> mu, std::span<const double> log_var,
                           std::optional<double> condition, std::size_t i, std::size_t k, const TraversalSpec& spec,
                           Rng& rng);

/// Per-run variance matrix (K×p): entry (k, j) is the mean over samples of the
/// traversal variance of feature j under dim k. The posterior draw for (i, k)
/// comes from the stream derive_seed(seed, {i, k}), so results do not depend
/// on the thread count. Uses OpenMP over samples.
AssociationMatrix fvh_lt_run(const vae::VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                             const TraversalSpec& spec, std::uint64_t seed);

/// Serial reference: decodes one grid point at a time with naive loops.
/// Matches fvh_lt_run to ~1e-12; kept for tests and the benchmark.
AssociationMatrix fvh_lt_run_reference(const vae::VaeModel& model, const Tensor2& x,
                                       const std::optional<Tensor2>& condition, const TraversalSpec& spec,
                                       std::uint64_t seed);

AssociationMatrix fvh_lt_aggregate(std::span<const AssociationMatrix> runs, const gas::AlignmentMapping& mapping);

/// Sweeps the conditioning variable over [y_lo, y_hi] with the latent code
/// fixed at one posterior draw per sample; returns the mean per-feature
/// traversal variance (length p). Throws ConfigError for unconditional models.
std::vector<double> cvae_quality_traversal(const vae::VaeModel& model, const Tensor2& x, const Tensor2& condition,
                                           double y_lo, double y_hi, std::size_t steps, std::uint64_t seed);

}  // namespace bfvae::fvh
