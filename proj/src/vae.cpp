#include "bfvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bfvae/error.hpp"

namespace bfvae::vae {

using nn::Var;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::BfVae:
      return "bfvae";
    case Variant::BetaVae:
      return "beta-vae";
    case Variant::FactorVae:
      return "factor-vae";
    case Variant::VanillaVae:
      return "vanilla-vae";
    case Variant::DipVaeI:
      return "dip-vae-i";
    case Variant::DipVaeII:
      return "dip-vae-ii";
  }
  return "unknown";
}

std::optional<Variant> parse_variant(const std::string& name) {
  for (auto v : {Variant::BfVae, Variant::BetaVae, Variant::FactorVae, Variant::VanillaVae, Variant::DipVaeI,
                 Variant::DipVaeII})
    if (variant_name(v) == name) return v;
  return std::nullopt;
}

std::string reduction_name(ReconReduction r) { return r == ReconReduction::FeatureSum ? "sum" : "mean"; }

std::optional<ReconReduction> parse_reduction(const std::string& name) {
  if (name == "sum") return ReconReduction::FeatureSum;
  if (name == "mean") return ReconReduction::FeatureMean;
  return std::nullopt;
}

ObjectiveSpec ObjectiveSpec::bf_vae(double beta, double gamma, double capacity) {
  return {Variant::BfVae, beta, gamma, capacity, 0.0, 0.0, ReconReduction::FeatureSum};
}
ObjectiveSpec ObjectiveSpec::beta_vae(double beta) { return {Variant::BetaVae, beta, 0.0, 0.0, 0.0, 0.0, ReconReduction::FeatureSum}; }
ObjectiveSpec ObjectiveSpec::factor_vae(double gamma) { return {Variant::FactorVae, 1.0, gamma, 0.0, 0.0, 0.0, ReconReduction::FeatureSum}; }
ObjectiveSpec ObjectiveSpec::vanilla() { return {Variant::VanillaVae, 1.0, 0.0, 0.0, 0.0, 0.0, ReconReduction::FeatureSum}; }
ObjectiveSpec ObjectiveSpec::dip_vae_i(double lambda_od, double lambda_d) {
  return {Variant::DipVaeI, 1.0, 0.0, 0.0, lambda_od, lambda_d, ReconReduction::FeatureSum};
}
ObjectiveSpec ObjectiveSpec::dip_vae_ii(double lambda_od, double lambda_d) {
  return {Variant::DipVaeII, 1.0, 0.0, 0.0, lambda_od, lambda_d, ReconReduction::FeatureSum};
}

ObjectiveSpec ObjectiveSpec::normalized() const {
  ObjectiveSpec s = *this;
  switch (variant) {
    case Variant::BfVae:
      break;
    case Variant::BetaVae:
      s.gamma = 0.0;
      s.capacity = 0.0;
      break;
    case Variant::FactorVae:
      s.beta = 1.0;
      s.capacity = 0.0;
      break;
    case Variant::VanillaVae:
      s.beta = 1.0;
      s.gamma = 0.0;
      s.capacity = 0.0;
      break;
    case Variant::DipVaeI:
    case Variant::DipVaeII:
      s.beta = 1.0;
      s.gamma = 0.0;
      s.capacity = 0.0;
      break;
  }
  return s;
}

bool ObjectiveSpec::uses_discriminator() const {
  const auto s = normalized();
  return (s.variant == Variant::BfVae || s.variant == Variant::FactorVae) && s.gamma > 0.0;
}

void ObjectiveSpec::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("objective: ") + name + " must be a non-negative number");
  };
  nonneg(beta, "beta");
  nonneg(gamma, "gamma");
  nonneg(capacity, "capacity");
  nonneg(lambda_od, "lambda_od");
  nonneg(lambda_d, "lambda_d");
}

VaeModel VaeModel::create(const ObjectiveSpec& objective, const Architecture& arch, std::size_t feature_dim,
                          std::size_t latent_dim, bool conditional, Rng& rng) {
  if (latent_dim == 0 || feature_dim == 0) throw ConfigError("VaeModel: latent and feature dims must be positive");
  objective.validate();
  VaeModel m;
  m.objective = objective.normalized();
  m.arch = arch;
  m.latent_dim = latent_dim;
  m.feature_dim = feature_dim;
  m.conditional = conditional;

  m.encoder_spec.layer_widths.push_back(m.encoder_input_width());
  for (auto w : arch.encoder_hidden) m.encoder_spec.layer_widths.push_back(w);
  m.encoder_spec.layer_widths.push_back(2 * latent_dim);
  m.encoder_spec.activation = nn::Activation::relu();
  m.encoder_spec.dropout_rate = arch.dropout;

  m.decoder_spec.layer_widths.push_back(m.decoder_input_width());
  for (auto w : arch.decoder_hidden) m.decoder_spec.layer_widths.push_back(w);
  m.decoder_spec.layer_widths.push_back(feature_dim);
  m.decoder_spec.activation = nn::Activation::relu();
  m.decoder_spec.dropout_rate = arch.dropout;

  m.disc_spec.layer_widths.push_back(latent_dim);
  for (std::size_t l = 0; l < arch.disc_hidden_layers; ++l) m.disc_spec.layer_widths.push_back(arch.disc_width);
  m.disc_spec.layer_widths.push_back(2);
  m.disc_spec.activation = nn::Activation::leaky_relu(arch.disc_slope);
  m.disc_spec.dropout_rate = 0.0;
  m.encoder_spec.kaiming_a = m.decoder_spec.kaiming_a = m.disc_spec.kaiming_a = arch.init_kaiming_a;

  m.encoder = nn::mlp_init(m.encoder_spec, rng, "encoder.");
  m.decoder = nn::mlp_init(m.decoder_spec, rng, "decoder.");
  if (m.objective.uses_discriminator()) m.discriminator = nn::mlp_init(m.disc_spec, rng, "disc.");
  return m;
}

std::vector<double> PosteriorStats::mean_kl() const {
  std::vector<double> out(kl_per_dim.cols(), 0.0);
  if (kl_per_dim.rows() == 0) return out;
  std::vector<double> col(kl_per_dim.rows());
  for (std::size_t k = 0; k < kl_per_dim.cols(); ++k) {
    for (std::size_t i = 0; i < kl_per_dim.rows(); ++i) col[i] = kl_per_dim(i, k);
    out[k] = pairwise_sum(col) / static_cast<double>(col.size());
  }
  return out;
}

Tensor2 gaussian_kl_per_dim(const Tensor2& mu, const Tensor2& log_var) {
  require_same_shape(mu, log_var, "gaussian_kl_per_dim");
  Tensor2 out(mu.rows(), mu.cols());
  const auto m = mu.data();
  const auto lv = log_var.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    // expm1(lv) − lv = σ² − 1 − log σ², accurate near the prior.
    const double v = 0.5 * (m[i] * m[i] + std::expm1(lv[i]) - lv[i]);
    o[i] = v > 0.0 ? v : 0.0;
  }
  return out;
}

double reconstruction_loss(const Tensor2& x, const Tensor2& x_hat, ReconReduction reduction) {
  require_same_shape(x, x_hat, "reconstruction_loss");
  if (x.rows() == 0) return 0.0;
  std::vector<double> per_row(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double d = x(i, j) - x_hat(i, j);
      s += d * d;
    }
    per_row[i] = s;
  }
  const double per_feature = reduction == ReconReduction::FeatureMean ? static_cast<double>(x.cols()) : 1.0;
  return pairwise_sum(per_row) / static_cast<double>(x.rows()) / per_feature;
}

Var reconstruction_loss(Var x, Var x_hat, ReconReduction reduction) {
  require_same_shape(x.value(), x_hat.value(), "reconstruction_loss");
  double denom = static_cast<double>(x.rows());
  if (reduction == ReconReduction::FeatureMean) denom *= static_cast<double>(x.cols());
  return nn::scale(nn::sum(nn::square(nn::sub(x, x_hat))), 1.0 / denom);
}

Var kl_per_dim(Var mu, Var log_var) {
  // ½(μ² + exp(lv) − lv − 1)
  Var inner = nn::add_scalar(nn::sub(nn::add(nn::square(mu), nn::exp(log_var)), log_var), -1.0);
  return nn::scale(inner, 0.5);
}

Tensor2 permute_dims(const Tensor2& z, Rng& rng) {
  if (z.rows() < 2) throw ConfigError("permute_dims: batch size must be at least 2");
  Tensor2 out(z.rows(), z.cols());
  std::vector<std::size_t> order(z.rows());
  for (std::size_t k = 0; k < z.cols(); ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < z.rows(); ++i) out(i, k) = z(order[i], k);
  }
  return out;
}

namespace {

Var logit_gap(Var logits) { return nn::sub(nn::slice_cols(logits, 0, 1), nn::slice_cols(logits, 1, 1)); }

}  // namespace

Var tc_estimate(const nn::MlpSpec& disc_spec, std::span<const Var> disc, Var z, Rng& rng) {
  Var logits = nn::mlp_forward(disc_spec, disc, z, false, rng);
  return nn::mean(logit_gap(logits));
}

TcTerms tc_discriminator_loss(const nn::MlpSpec& disc_spec, std::span<const Var> disc, Var z, Var z_perm,
                              Rng& rng) {
  if (z.rows() < 2) throw ConfigError("tc_discriminator_loss: batch size must be at least 2");
  Var real = nn::mlp_forward(disc_spec, disc, z, false, rng);
  Var perm = nn::mlp_forward(disc_spec, disc, z_perm, false, rng);
  Var gap_real = logit_gap(real);
  Var gap_perm = logit_gap(perm);
  // CE(class 0) = softplus(l1 − l0); CE(class 1) = softplus(l0 − l1).
  Var ce_real = nn::mean(nn::softplus(nn::scale(gap_real, -1.0)));
  Var ce_perm = nn::mean(nn::softplus(gap_perm));
  return {nn::scale(nn::add(ce_real, ce_perm), 0.5), nn::mean(gap_real)};
}

DipPenalties dip_penalties(Var mu, Var log_var, Variant variant) {
  const std::size_t k = mu.cols();
  const double inv_n = 1.0 / static_cast<double>(mu.rows());
  Var centered = nn::sub_row(mu, nn::col_mean(mu));
  Var cov = nn::scale(nn::matmul_tn(centered, centered), inv_n);
  Tensor2 off_mask(k, k, 1.0);
  for (std::size_t j = 0; j < k; ++j) off_mask(j, j) = 0.0;
  Var offdiag = nn::sum(nn::square(nn::mul_const(cov, off_mask)));
  Var diag = nn::col_mean(nn::square(centered));
  if (variant == Variant::DipVaeII) diag = nn::add(diag, nn::col_mean(nn::exp(log_var)));
  Var diag_pen = nn::sum(nn::square(nn::add_scalar(diag, -1.0)));
  return {offdiag, diag_pen};
}

ObjectiveTerms objective_graph(const VaeModel& model, const BoundModel& bound, Var x,
                               std::optional<Var> condition, const Tensor2& noise, bool training, Rng& rng,
                               double capacity_override) {
  const std::size_t k = model.latent_dim;
  if (x.cols() != model.feature_dim) throw DimensionError("objective: batch width does not match feature_dim");
  if (model.conditional && !condition) throw ConfigError("objective: conditional model needs a condition column");
  if (noise.rows() != x.rows() || noise.cols() != k) throw DimensionError("objective: noise must be n x K");

  Var enc_in = model.conditional ? nn::concat_cols(x, *condition) : x;
  Var head = nn::mlp_forward(model.encoder_spec, bound.encoder, enc_in, training, rng);
  Var mu = nn::slice_cols(head, 0, k);
  Var log_var = nn::slice_cols(head, k, k);
  Var sigma = nn::exp(nn::scale(log_var, 0.5));
  Var z = nn::add(mu, nn::mul_const(sigma, noise));
  Var dec_in = model.conditional ? nn::concat_cols(z, *condition) : z;
  Var x_hat = nn::mlp_forward(model.decoder_spec, bound.decoder, dec_in, training, rng);

  ObjectiveTerms t;
  t.z = z;
  t.mu = mu;
  t.log_var = log_var;
  t.reconstruction = reconstruction_loss(x, x_hat, model.objective.reduction);
  Var kl_dims = kl_per_dim(mu, log_var);
  Var kl_rows = nn::row_sum(kl_dims);
  t.kl = nn::scale(nn::sum(kl_rows), 1.0 / static_cast<double>(x.rows()));

  const ObjectiveSpec& spec = model.objective;
  if (spec.is_dip()) {
    auto pen = dip_penalties(mu, log_var, spec.variant);
    t.dip_offdiag = pen.offdiag;
    t.dip_diag = pen.diag;
    t.loss = nn::add(nn::add(t.reconstruction, t.kl),
                     nn::add(nn::scale(pen.offdiag, spec.lambda_od), nn::scale(pen.diag, spec.lambda_d)));
    return t;
  }

  const double capacity = capacity_override >= 0.0 ? capacity_override : spec.capacity;
  Var gap = nn::abs(nn::add_scalar(kl_rows, -capacity));
  t.capacity_term = nn::scale(nn::mean(gap), spec.beta);
  t.loss = nn::add(t.reconstruction, *t.capacity_term);
  if (spec.uses_discriminator()) {
    if (bound.discriminator.empty()) throw ConfigError("objective: TC term needs discriminator parameters");
    t.tc = tc_estimate(model.disc_spec, bound.discriminator, z, rng);
    t.loss = nn::add(t.loss, nn::scale(*t.tc, spec.gamma));
  }
  return t;
}

double objective_value(const VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                       const Tensor2& noise, bool training, Rng& rng) {
  nn::Tape tape;
  BoundModel b{nn::bind(tape, model.encoder, false), nn::bind(tape, model.decoder, false), {}};
  if (model.discriminator) b.discriminator = nn::bind(tape, *model.discriminator, false);
  std::optional<Var> c;
  if (condition) c = tape.constant(*condition);
  return objective_graph(model, b, tape.constant(x), c, noise, training, rng).loss.scalar();
}

Encoding encode(const VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                bool deterministic, Rng& rng) {
  if (x.cols() != model.feature_dim) throw DimensionError("encode: input width does not match feature_dim");
  Tensor2 input = x;
  if (model.conditional) {
    if (!condition || condition->rows() != x.rows() || condition->cols() != 1)
      throw DimensionError("encode: conditional model needs an n x 1 condition");
    input = Tensor2(x.rows(), x.cols() + 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) input(i, j) = x(i, j);
      input(i, x.cols()) = (*condition)(i, 0);
    }
  }
  const Tensor2 head = nn::mlp_infer(model.encoder_spec, model.encoder, input);
  Encoding e;
  e.mu = head.slice_cols(0, model.latent_dim);
  e.log_var = head.slice_cols(model.latent_dim, model.latent_dim);
  if (deterministic) {
    e.z = e.mu;
  } else {
    Tensor2 eps = standard_normal(x.rows(), model.latent_dim, rng);
    Tensor2 z(x.rows(), model.latent_dim);
    for (std::size_t i = 0; i < z.size(); ++i)
      z.data()[i] = e.mu.data()[i] + std::exp(0.5 * e.log_var.data()[i]) * eps.data()[i];
    e.z = std::move(z);
  }
  return e;
}

Tensor2 decode(const VaeModel& model, const Tensor2& z) {
  if (z.cols() != model.decoder_input_width()) {
    throw DimensionError("decode: latent width " + std::to_string(z.cols()) + " but decoder expects " +
                         std::to_string(model.decoder_input_width()));
  }
  return nn::mlp_infer(model.decoder_spec, model.decoder, z);
}

PosteriorStats posterior_stats(const VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition) {
  Rng unused(0);
  Encoding e = encode(model, x, condition, true, unused);
  PosteriorStats s;
  s.kl_per_dim = gaussian_kl_per_dim(e.mu, e.log_var);
  s.mu = std::move(e.mu);
  s.log_var = std::move(e.log_var);
  return s;
}

std::optional<Tensor2> condition_column(const data::TabularDataset& ds, std::span<const std::size_t> rows,
                                        bool conditional) {
  if (!conditional) return std::nullopt;
  if (!ds.y) throw ConfigError("conditional model requires a dataset label column");
  Tensor2 c(rows.size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) c(i, 0) = (*ds.y)[rows[i]];
  return c;
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

std::optional<Optimizer> parse_optimizer(const std::string& name) {
  if (name == "adam") return Optimizer::Adam;
  if (name == "sgd") return Optimizer::Sgd;
  return std::nullopt;
}

void TrainConfig::validate() const {
  objective.validate();
  if (latent_dim < 1) throw ConfigError("train: latent_dim must be at least 1");
  if (batch_size < 2) throw ConfigError("train: batch_size must be at least 2");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (!(disc_lr >= 0.0)) throw ConfigError("train: disc_lr must be non-negative");
  if (!(capacity_ramp_fraction >= 0.0 && capacity_ramp_fraction <= 1.0))
    throw ConfigError("train: capacity_ramp_fraction must lie in [0,1]");
  if (!(arch.dropout >= 0.0 && arch.dropout < 1.0)) throw ConfigError("train: dropout must lie in [0,1)");
}

TrainedVae train_vae(const TrainConfig& config, const data::TabularDataset& dataset) {
  config.validate();
  Rng rng(config.seed);
  TrainedVae out;
  out.seed = config.seed;
  out.model = VaeModel::create(config.objective, config.arch, dataset.num_features(), config.latent_dim,
                               config.conditional, rng);
  VaeModel& model = out.model;

  const Tensor2 x_train = dataset.train_x();
  const auto cond_train = condition_column(dataset, dataset.train_rows, config.conditional);
  const std::size_t n = x_train.rows();
  const bool with_disc = model.objective.uses_discriminator();

  auto enc_opt = nn::AdamState::for_params(model.encoder, config.lr);
  auto dec_opt = nn::AdamState::for_params(model.decoder, config.lr);
  std::optional<nn::AdamState> disc_opt;
  if (with_disc) disc_opt = nn::AdamState::for_params(*model.discriminator, config.disc_lr > 0.0 ? config.disc_lr : config.lr);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double capacity = model.objective.capacity;
    if (config.capacity_ramp_fraction > 0.0) {
      const double progress = static_cast<double>(epoch) / (config.capacity_ramp_fraction * static_cast<double>(config.epochs));
      capacity *= std::min(1.0, progress);
    }
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> batch_losses;
    std::vector<double> disc_losses;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start + 2 <= n; start += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, n - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      const Tensor2 xb = x_train.gather_rows(idx);
      std::optional<Tensor2> cb;
      if (cond_train) cb = cond_train->gather_rows(idx);
      const Tensor2 noise = standard_normal(count, model.latent_dim, rng);

      Tensor2 z_detached;
      {
        nn::Tape tape;
        BoundModel b{nn::bind(tape, model.encoder, true), nn::bind(tape, model.decoder, true), {}};
        if (with_disc) b.discriminator = nn::bind(tape, *model.discriminator, false);
        std::optional<Var> cv;
        if (cb) cv = tape.constant(*cb);
        auto terms = objective_graph(model, b, tape.constant(xb), cv, noise, true, rng, capacity);
        const double loss = terms.loss.scalar();
        if (!std::isfinite(loss)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch_index));
        }
        batch_losses.push_back(loss);
        tape.backward(terms.loss);
        auto g_enc = nn::collect_grads(model.encoder, b.encoder);
        auto g_dec = nn::collect_grads(model.decoder, b.decoder);
        if (config.optimizer == Optimizer::Sgd) {
          model.encoder = nn::sgd_step(std::move(model.encoder), g_enc, config.lr);
          model.decoder = nn::sgd_step(std::move(model.decoder), g_dec, config.lr);
        } else {
          std::tie(model.encoder, enc_opt) = nn::adam_step(std::move(model.encoder), std::move(enc_opt), g_enc);
          std::tie(model.decoder, dec_opt) = nn::adam_step(std::move(model.decoder), std::move(dec_opt), g_dec);
        }
        if (with_disc) z_detached = terms.z.value();
      }

      if (with_disc) {
        const Tensor2 z_perm = permute_dims(z_detached, rng);
        nn::Tape tape;
        auto d = nn::bind(tape, *model.discriminator, true);
        auto terms = tc_discriminator_loss(model.disc_spec, d, tape.constant(z_detached), tape.constant(z_perm), rng);
        const double dl = terms.disc_loss.scalar();
        if (!std::isfinite(dl)) {
          throw DivergenceError("non-finite discriminator loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch_index));
        }
        disc_losses.push_back(dl);
        tape.backward(terms.disc_loss);
        auto g = nn::collect_grads(*model.discriminator, d);
        std::tie(*model.discriminator, *disc_opt) =
            nn::adam_step(std::move(*model.discriminator), std::move(*disc_opt), g);
      }
    }
    out.loss_trace.push_back(batch_losses.empty() ? 0.0 : pairwise_sum(batch_losses) / static_cast<double>(batch_losses.size()));
    if (with_disc)
      out.disc_loss_trace.push_back(disc_losses.empty() ? 0.0 : pairwise_sum(disc_losses) / static_cast<double>(disc_losses.size()));
  }

  out.stats = posterior_stats(model, x_train, cond_train);
  const auto mkl = out.stats.mean_kl();
  if (!mkl.empty() && std::all_of(mkl.begin(), mkl.end(), [](double v) { return v < 0.01; }))
    out.warnings.push_back("posterior collapse: every latent dimension has mean KL < 0.01");
  return out;
}

nlohmann::json objective_to_json(const ObjectiveSpec& s) {
  return {{"variant", variant_name(s.variant)}, {"beta", s.beta},           {"gamma", s.gamma},
          {"capacity", s.capacity},             {"lambda_od", s.lambda_od}, {"lambda_d", s.lambda_d},
          {"reduction", reduction_name(s.reduction)}};
}

ObjectiveSpec objective_from_json(const nlohmann::json& j) {
  ObjectiveSpec s;
  const auto v = parse_variant(j.at("variant").get<std::string>());
  if (!v) throw ConfigError("unknown objective variant '" + j.at("variant").get<std::string>() + "'");
  s.variant = *v;
  s.beta = j.value("beta", s.beta);
  s.gamma = j.value("gamma", s.gamma);
  s.capacity = j.value("capacity", s.capacity);
  s.lambda_od = j.value("lambda_od", s.lambda_od);
  s.lambda_d = j.value("lambda_d", s.lambda_d);
  const auto red = parse_reduction(j.value("reduction", std::string("sum")));
  if (!red) throw ConfigError("objective: reduction must be 'sum' or 'mean'");
  s.reduction = *red;
  return s;
}

nlohmann::json architecture_to_json(const Architecture& a) {
  return {{"encoder_hidden", a.encoder_hidden}, {"decoder_hidden", a.decoder_hidden},
          {"dropout", a.dropout},               {"disc_hidden_layers", a.disc_hidden_layers},
          {"disc_width", a.disc_width},         {"disc_slope", a.disc_slope},
          {"init_kaiming_a", a.init_kaiming_a}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  a.encoder_hidden = j.value("encoder_hidden", a.encoder_hidden);
  a.decoder_hidden = j.value("decoder_hidden", a.decoder_hidden);
  a.dropout = j.value("dropout", a.dropout);
  a.disc_hidden_layers = j.value("disc_hidden_layers", a.disc_hidden_layers);
  a.disc_width = j.value("disc_width", a.disc_width);
  a.disc_slope = j.value("disc_slope", a.disc_slope);
  a.init_kaiming_a = j.value("init_kaiming_a", a.init_kaiming_a);
  return a;
}

namespace {

nlohmann::json params_to_json(const nn::ParamSet& p) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto d = p.values[i].data();
    arr.push_back({{"name", p.names[i]},
                   {"rows", p.values[i].rows()},
                   {"cols", p.values[i].cols()},
                   {"data", std::vector<double>(d.begin(), d.end())}});
  }
  return arr;
}

void params_from_json(const nlohmann::json& arr, nn::ParamSet& target, const char* what) {
  if (!arr.is_array() || arr.size() != target.size())
    throw IntegrityError(std::string("checkpoint: ") + what + " tensor count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto& t = arr[i];
    const auto rows = t.at("rows").get<std::size_t>();
    const auto cols = t.at("cols").get<std::size_t>();
    auto data = t.at("data").get<std::vector<double>>();
    if (t.at("name").get<std::string>() != target.names[i] || rows != target.values[i].rows() ||
        cols != target.values[i].cols() || data.size() != rows * cols)
      throw IntegrityError(std::string("checkpoint: ") + what + " tensor '" + target.names[i] + "' shape mismatch");
    target.values[i] = Tensor2(rows, cols, std::move(data));
  }
}

}  // namespace

nlohmann::json checkpoint_to_json(const TrainedVae& trained) {
  const VaeModel& m = trained.model;
  nlohmann::json j;
  j["format"] = "bfvae-checkpoint";
  j["version"] = 1;
  j["objective"] = objective_to_json(m.objective);
  j["architecture"] = architecture_to_json(m.arch);
  j["latent_dim"] = m.latent_dim;
  j["feature_dim"] = m.feature_dim;
  j["conditional"] = m.conditional;
  j["seed"] = trained.seed;
  j["loss_trace"] = trained.loss_trace;
  j["disc_loss_trace"] = trained.disc_loss_trace;
  j["encoder"] = params_to_json(m.encoder);
  j["decoder"] = params_to_json(m.decoder);
  if (m.discriminator) j["discriminator"] = params_to_json(*m.discriminator);
  return j;
}

TrainedVae checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "bfvae-checkpoint") throw IntegrityError("checkpoint: wrong format tag");
    if (j.at("version").get<int>() != 1) throw IntegrityError("checkpoint: unsupported version");
    TrainedVae t;
    Rng rng(0);
    t.model = VaeModel::create(objective_from_json(j.at("objective")), architecture_from_json(j.at("architecture")),
                               j.at("feature_dim").get<std::size_t>(), j.at("latent_dim").get<std::size_t>(),
                               j.at("conditional").get<bool>(), rng);
    params_from_json(j.at("encoder"), t.model.encoder, "encoder");
    params_from_json(j.at("decoder"), t.model.decoder, "decoder");
    if (t.model.discriminator) params_from_json(j.at("discriminator"), *t.model.discriminator, "discriminator");
    t.seed = j.at("seed").get<std::uint64_t>();
    t.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    t.disc_loss_trace = j.value("disc_loss_trace", std::vector<double>{});
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace bfvae::vae
