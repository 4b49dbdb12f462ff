#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfvae/association.hpp"
#include "bfvae/datagen.hpp"
#include "bfvae/vae.hpp"

namespace bfvae::metrics {

enum class Degenerate { None, AllZero, DominantRow };
std::string degenerate_name(Degenerate d);

struct LsdiReport {
  double value = 0.0;
  Degenerate degenerate = Degenerate::None;
  /// Ratio form evaluated regardless of the degenerate rules (0 for a zero matrix).
  double ratio = 0.0;
  /// Per unordered pair (i < j, row-major), ‖|A_i| − |A_j|‖₁ / (‖A_i‖₁ + ‖A_j‖₁), 0 for two zero rows.
  std::vector<double> pair_contributions;
};

/// Latent-space disentanglement index of a K×p matrix; reads only |A|.
LsdiReport lsdi(const Tensor2& a);
inline LsdiReport lsdi(const AssociationMatrix& a) { return lsdi(a.values); }

struct ScoreReport {
  double accuracy = 0.0;
  double chance = 0.0;
  std::size_t train_votes = 0;
  std::size_t test_votes = 0;
};

struct HigginsOptions {
  std::size_t votes = 1000;
  std::size_t train_votes = 800;
  std::size_t pairs_per_vote = 64;
  std::size_t max_iters = 5000;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

/// Maps a batch of standardized observations (m×p) to latent codes (m×K).
using Encoder = std::function<Tensor2(const Tensor2&)>;

/// Votes: a factor chosen uniformly is shared within each of M pairs while all
/// other factors are redrawn; the vote's feature is the mean |z₁ − z₂|. A
/// multinomial logistic regression (full-batch gradient descent) is fit on the
/// training votes and scored on the rest.
ScoreReport higgins_score(const data::FactorSampler& sampler, const Encoder& encoder, const HigginsOptions& options);
/// Encoder = deterministic posterior mean. Conditional models are unsupported.
ScoreReport higgins_score(const data::FactorSampler& sampler, const vae::VaeModel& model, const HigginsOptions& options);

/// Multinomial logistic regression used by the score (exposed for tests).
struct LinearClassifier {
  Tensor2 weights;  // (d+1)×classes, last row is the bias
  std::vector<double> mean;
  std::vector<double> scale;

  static LinearClassifier fit(const Tensor2& features, std::span<const std::size_t> labels, std::size_t classes,
                              std::size_t max_iters, double learning_rate);
  std::vector<std::size_t> predict(const Tensor2& features) const;
};

struct FdrReport {
  double fdr = 0.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  /// Assigned factor for each informative latent dim (nullopt elsewhere).
  std::vector<std::optional<std::size_t>> assignment;
};

/// Each informative dim goes to the factor with the largest summed |A| over the
/// factor's block; it is a true positive iff it is the unique best such dim for
/// that factor. fdr = FP / max(1, FP + TP), recall = factors with a TP / K₀.
FdrReport informative_fdr(const AssociationMatrix& a, const data::FactorGroundTruth& truth);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};

Histogram histogram(std::span<const double> values, std::size_t bins);

struct KlSummary {
  std::vector<double> mean_kl;
  std::vector<Histogram> mu;        // per latent dim
  std::vector<Histogram> variance;  // per latent dim, of σ²
};

KlSummary kl_summary(const vae::PosteriorStats& stats, std::size_t bins = 20);

nlohmann::json lsdi_to_json(const LsdiReport& r);
nlohmann::json score_to_json(const ScoreReport& r);
nlohmann::json fdr_to_json(const FdrReport& r);
nlohmann::json kl_summary_to_json(const KlSummary& s);

}  // namespace bfvae::metrics
