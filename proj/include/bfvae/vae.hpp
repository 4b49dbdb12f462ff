#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfvae/adam.hpp"
#include "bfvae/autodiff.hpp"
#include "bfvae/datagen.hpp"
#include "bfvae/mlp.hpp"

namespace bfvae::vae {

enum class Variant { BfVae, BetaVae, FactorVae, VanillaVae, DipVaeI, DipVaeII };

std::string variant_name(Variant v);
std::optional<Variant> parse_variant(const std::string& name);

/// How the reconstruction term reduces over features: FeatureSum is the
/// unit-variance Gaussian log-likelihood, FeatureMean is per-element MSE.
enum class ReconReduction { FeatureSum, FeatureMean };
std::string reduction_name(ReconReduction r);
std::optional<ReconReduction> parse_reduction(const std::string& name);

/// Objective hyperparameters. Baselines are special cases of the unified
/// objective: normalized() pins the coefficients each variant fixes.
struct ObjectiveSpec {
  Variant variant = Variant::BfVae;
  double beta = 1.0;
  double gamma = 0.0;
  double capacity = 0.0;
  double lambda_od = 1.0;
  double lambda_d = 1.0;
  ReconReduction reduction = ReconReduction::FeatureSum;

  static ObjectiveSpec bf_vae(double beta, double gamma, double capacity = 0.0);
  static ObjectiveSpec beta_vae(double beta);
  static ObjectiveSpec factor_vae(double gamma);
  static ObjectiveSpec vanilla();
  static ObjectiveSpec dip_vae_i(double lambda_od, double lambda_d);
  static ObjectiveSpec dip_vae_ii(double lambda_od, double lambda_d);

  ObjectiveSpec normalized() const;
  bool is_dip() const { return variant == Variant::DipVaeI || variant == Variant::DipVaeII; }
  bool uses_discriminator() const;
  void validate() const;
};

struct Architecture {
  std::vector<std::size_t> encoder_hidden{256, 128, 64};
  std::vector<std::size_t> decoder_hidden{64, 128, 256};
  double dropout = 0.2;
  std::size_t disc_hidden_layers = 5;
  std::size_t disc_width = 256;
  double disc_slope = 0.2;
  /// Kaiming gain argument for hidden layers; √5 is the nn.Linear default of
  /// common frameworks and keeps initial posteriors close to the prior.
  double init_kaiming_a = 2.23606797749979;
};

/// Encoder (x or x‖y → 2K: means then log-variances), decoder (z or z‖y → p)
/// and, for TC-penalized objectives, the density-ratio discriminator (z → 2 logits).
struct VaeModel {
  ObjectiveSpec objective;
  Architecture arch;
  std::size_t latent_dim = 0;
  std::size_t feature_dim = 0;
  bool conditional = false;
  nn::MlpSpec encoder_spec;
  nn::MlpSpec decoder_spec;
  nn::MlpSpec disc_spec;
  nn::ParamSet encoder;
  nn::ParamSet decoder;
  std::optional<nn::ParamSet> discriminator;

  static VaeModel create(const ObjectiveSpec& objective, const Architecture& arch, std::size_t feature_dim,
                         std::size_t latent_dim, bool conditional, Rng& rng);
  std::size_t encoder_input_width() const { return feature_dim + (conditional ? 1 : 0); }
  std::size_t decoder_input_width() const { return latent_dim + (conditional ? 1 : 0); }
};

struct PosteriorStats {
  Tensor2 mu;
  Tensor2 log_var;
  Tensor2 kl_per_dim;

  /// Column means of kl_per_dim.
  std::vector<double> mean_kl() const;
};

struct TrainedVae {
  VaeModel model;
  PosteriorStats stats;
  std::vector<double> loss_trace;
  std::vector<double> disc_loss_trace;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// ½(μ² + σ² − log σ² − 1) per entry.
Tensor2 gaussian_kl_per_dim(const Tensor2& mu, const Tensor2& log_var);

/// Mean over rows of the per-row squared error summed over features
/// (FeatureMean further divides by the feature count).
double reconstruction_loss(const Tensor2& x, const Tensor2& x_hat,
                           ReconReduction reduction = ReconReduction::FeatureSum);
nn::Var reconstruction_loss(nn::Var x, nn::Var x_hat, ReconReduction reduction = ReconReduction::FeatureSum);
nn::Var kl_per_dim(nn::Var mu, nn::Var log_var);

/// Independently permutes every column across rows. Needs at least 2 rows.
Tensor2 permute_dims(const Tensor2& z, Rng& rng);

struct TcTerms {
  nn::Var disc_loss;    // two-logit cross-entropy, real = class 0, permuted = class 1
  nn::Var tc_estimate;  // mean over batch of (logit_real − logit_perm) on z
};
TcTerms tc_discriminator_loss(const nn::MlpSpec& disc_spec, std::span<const nn::Var> disc, nn::Var z,
                              nn::Var z_perm, Rng& rng);
/// Density-ratio TC estimate only (what the VAE step penalizes).
nn::Var tc_estimate(const nn::MlpSpec& disc_spec, std::span<const nn::Var> disc, nn::Var z, Rng& rng);

struct DipPenalties {
  nn::Var offdiag;  // Σ_{j≠j'} Cov²_{jj'}
  nn::Var diag;     // Σ_j (Cov_jj − 1)²
};
/// Penalties on the biased batch covariance of μ (DIP-I) or of z, i.e.
/// Cov(μ) + diag(mean σ²) (DIP-II).
DipPenalties dip_penalties(nn::Var mu, nn::Var log_var, Variant variant);

struct ObjectiveTerms {
  nn::Var loss;
  nn::Var reconstruction;
  nn::Var kl;  // batch mean of per-sample KL summed over dims
  std::optional<nn::Var> capacity_term;
  std::optional<nn::Var> tc;
  std::optional<nn::Var> dip_offdiag;
  std::optional<nn::Var> dip_diag;
  nn::Var z;
  nn::Var mu;
  nn::Var log_var;
};

/// Bound parameter handles for one objective evaluation.
struct BoundModel {
  std::vector<nn::Var> encoder;
  std::vector<nn::Var> decoder;
  std::vector<nn::Var> discriminator;
};

/// Records the full objective for a batch. `noise` is the n×K draw for the
/// reparameterization; `condition` (n×1) is required for conditional models.
/// Discriminator handles, when present, enter only through the TC term.
ObjectiveTerms objective_graph(const VaeModel& model, const BoundModel& bound, nn::Var x,
                               std::optional<nn::Var> condition, const Tensor2& noise, bool training, Rng& rng,
                               double capacity_override = -1.0);

/// Scalar objective on a batch with given noise (training=false disables dropout).
double objective_value(const VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                       const Tensor2& noise, bool training, Rng& rng);

struct Encoding {
  Tensor2 mu;
  Tensor2 log_var;
  std::optional<Tensor2> z;
};
/// Deterministic encoder pass (dropout off). With deterministic=false also
/// draws z = μ + σ⊙ε.
Encoding encode(const VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                bool deterministic, Rng& rng);
/// Decoder mean for z (n×K) or z‖y (n×(K+1)) for conditional models.
Tensor2 decode(const VaeModel& model, const Tensor2& z);

/// Encoder/decoder optimizer; the discriminator always uses Adam.
enum class Optimizer { Adam, Sgd };
std::string optimizer_name(Optimizer o);
std::optional<Optimizer> parse_optimizer(const std::string& name);

struct TrainConfig {
  ObjectiveSpec objective;
  Architecture arch;
  std::size_t latent_dim = 5;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  double disc_lr = 0.0;  // 0 means same as lr
  Optimizer optimizer = Optimizer::Adam;
  double capacity_ramp_fraction = 0.0;
  bool conditional = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mini-batch training on the dataset's training rows; alternates a VAE step
/// and a discriminator step when the objective penalizes TC. Final posterior
/// statistics come from a deterministic full pass with dropout off.
TrainedVae train_vae(const TrainConfig& config, const data::TabularDataset& dataset);

/// Posterior statistics of `x` (rows) under the model, dropout off.
PosteriorStats posterior_stats(const VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition);

/// Conditioning column for the given dataset rows, as an n×1 tensor.
std::optional<Tensor2> condition_column(const data::TabularDataset& ds, std::span<const std::size_t> rows,
                                        bool conditional);

nlohmann::json objective_to_json(const ObjectiveSpec& s);
ObjectiveSpec objective_from_json(const nlohmann::json& j);
nlohmann::json architecture_to_json(const Architecture& a);
Architecture architecture_from_json(const nlohmann::json& j);

/// Versioned JSON checkpoint: objective, architecture, shapes, every parameter
/// tensor, run seed and loss traces.
nlohmann::json checkpoint_to_json(const TrainedVae& trained);
/// Restores model, seed and traces; PosteriorStats are left empty.
TrainedVae checkpoint_from_json(const nlohmann::json& j);

}  // namespace bfvae::vae
