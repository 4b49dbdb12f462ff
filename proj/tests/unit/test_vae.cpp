#include <doctest.h>

#include <cmath>

#include "bfvae/adam.hpp"
#include "bfvae/error.hpp"
#include "bfvae/grad_check.hpp"
#include "bfvae/vae.hpp"
#include "helpers.hpp"

using namespace bfvae;
using namespace bfvae::vae;
using nn::Tape;
using nn::Var;

namespace {

/// Loss as a function of all model parameters (encoder ‖ decoder ‖ disc).
double objective_grad_error(const ObjectiveSpec& spec, bool conditional) {
  Rng rng(17);
  const std::size_t p = 5, k = 3, n = 8;
  VaeModel model = VaeModel::create(spec, testutil::tiny_arch(), p, k, conditional, rng);
  const Tensor2 x = testutil::randn(n, p, 1);
  const Tensor2 noise = testutil::randn(n, k, 2);
  const Tensor2 cond = testutil::randn(n, 1, 3);
  nn::ParamSet all = nn::ParamSet::join(model.encoder, model.decoder);
  if (model.discriminator) all = nn::ParamSet::join(all, *model.discriminator);
  const std::size_t ne = model.encoder.size(), nd = model.decoder.size();
  nn::ScalarGraph f = [&](Tape& tape, std::span<const Var> v) {
    BoundModel b;
    b.encoder.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(ne));
    b.decoder.assign(v.begin() + static_cast<std::ptrdiff_t>(ne), v.begin() + static_cast<std::ptrdiff_t>(ne + nd));
    b.discriminator.assign(v.begin() + static_cast<std::ptrdiff_t>(ne + nd), v.end());
    std::optional<Var> c;
    if (conditional) c = tape.constant(cond);
    Rng r(0);
    return objective_graph(model, b, tape.constant(x), c, noise, false, r).loss;
  };
  return nn::grad_check(f, all);
}

VaeModel with_params_of(const ObjectiveSpec& spec, const VaeModel& src) {
  Rng rng(0);
  VaeModel m = VaeModel::create(spec, src.arch, src.feature_dim, src.latent_dim, src.conditional, rng);
  m.encoder = src.encoder;
  m.decoder = src.decoder;
  return m;
}

}  // namespace

TEST_CASE("gaussian KL closed form") {
  CHECK(gaussian_kl_per_dim(Tensor2(1, 1, 0.0), Tensor2(1, 1, 0.0))(0, 0) == 0.0);
  CHECK(gaussian_kl_per_dim(Tensor2(1, 1, 1.0), Tensor2(1, 1, 0.0))(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  const Tensor2 mu = testutil::randn(10, 4, 5);
  const Tensor2 lv = testutil::randn(10, 4, 6);
  const Tensor2 kl = gaussian_kl_per_dim(mu, lv);
  for (std::size_t i = 0; i < kl.size(); ++i) {
    const double m = mu.data()[i], v = std::exp(lv.data()[i]);
    CHECK(kl.data()[i] >= 0.0);
    CHECK(std::abs(kl.data()[i] - 0.5 * (m * m + v - std::log(v) - 1.0)) < 1e-10);
  }
}

TEST_CASE("gaussian KL matches Monte Carlo at mu=0.3, var=0.2") {
  const double m = 0.3, v = 0.2;
  Rng rng(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  double acc = 0.0;
  const int draws = 100000;
  for (int s = 0; s < draws; ++s) {
    const double z = m + std::sqrt(v) * nd(rng);
    acc += -0.5 * std::log(v) - 0.5 * (z - m) * (z - m) / v + 0.5 * z * z;
  }
  const double mc = acc / draws;
  const double exact = gaussian_kl_per_dim(Tensor2(1, 1, m), Tensor2(1, 1, std::log(v)))(0, 0);
  CHECK(std::abs(mc - exact) / exact < 0.01);
}

TEST_CASE("reconstruction loss examples") {
  CHECK(reconstruction_loss(Tensor2(2, 2, 1.0), Tensor2(2, 2, 1.0)) == 0.0);
  CHECK(reconstruction_loss(Tensor2(1, 2), Tensor2(1, 2, 1.0)) == 2.0);
  CHECK(reconstruction_loss(Tensor2::from_rows({{1, 0}, {0, 2}}), Tensor2(2, 2)) == 2.5);
  CHECK(reconstruction_loss(Tensor2::from_rows({{1, 0}, {0, 2}}), Tensor2(2, 2), ReconReduction::FeatureMean) == 1.25);
  Tape t;
  CHECK(reconstruction_loss(t.constant(Tensor2::from_rows({{1, 0}, {0, 2}})), t.constant(Tensor2(2, 2))).scalar() == 2.5);
}

TEST_CASE("variant normalization pins coefficients") {
  auto b = ObjectiveSpec{Variant::BetaVae, 4.0, 0.7, 2.0, 1, 1}.normalized();
  CHECK(b.gamma == 0.0);
  CHECK(b.capacity == 0.0);
  auto f = ObjectiveSpec{Variant::FactorVae, 4.0, 0.7, 2.0, 1, 1}.normalized();
  CHECK(f.beta == 1.0);
  CHECK(f.capacity == 0.0);
  auto v = ObjectiveSpec{Variant::VanillaVae, 4.0, 0.7, 2.0, 1, 1}.normalized();
  CHECK((v.beta == 1.0 && v.gamma == 0.0 && v.capacity == 0.0));
  CHECK(ObjectiveSpec::bf_vae(1e-3, 0.3).uses_discriminator());
  CHECK_FALSE(ObjectiveSpec::bf_vae(1e-3, 0.0).uses_discriminator());
  CHECK_FALSE(ObjectiveSpec::beta_vae(2.0).uses_discriminator());
  CHECK_THROWS_AS(ObjectiveSpec::bf_vae(-1.0, 0.3).validate(), ConfigError);
  CHECK(parse_variant("dip-vae-ii") == Variant::DipVaeII);
  CHECK_FALSE(parse_variant("nope"));
}

TEST_CASE("every objective variant has exact gradients") {
  for (const auto& spec : {ObjectiveSpec::bf_vae(0.5, 0.3, 0.7), ObjectiveSpec::beta_vae(4.0), ObjectiveSpec::factor_vae(0.5),
                           ObjectiveSpec::vanilla(), ObjectiveSpec::dip_vae_i(2.0, 3.0), ObjectiveSpec::dip_vae_ii(2.0, 3.0)}) {
    CAPTURE(variant_name(spec.variant));
    CHECK(objective_grad_error(spec, false) < 1e-4);
  }
  CHECK(objective_grad_error(ObjectiveSpec::bf_vae(0.5, 0.3), true) < 1e-4);
  auto mean_red = ObjectiveSpec::bf_vae(0.5, 0.3);
  mean_red.reduction = ReconReduction::FeatureMean;
  CHECK(objective_grad_error(mean_red, false) < 1e-4);
}

TEST_CASE("special cases of the unified objective coincide") {
  Rng rng(4);
  const std::size_t p = 6, k = 3;
  VaeModel bf = VaeModel::create(ObjectiveSpec::bf_vae(0.7, 0.0, 0.0), testutil::tiny_arch(), p, k, false, rng);
  const Tensor2 x = testutil::randn(8, p, 9);
  const Tensor2 noise = testutil::randn(8, k, 10);
  Rng r1(0), r2(0);
  const double a = objective_value(bf, x, std::nullopt, noise, false, r1);
  const double b = objective_value(with_params_of(ObjectiveSpec::beta_vae(0.7), bf), x, std::nullopt, noise, false, r2);
  CHECK(std::abs(a - b) < 1e-12);

  VaeModel bf1 = with_params_of(ObjectiveSpec::bf_vae(1.0, 0.0, 0.0), bf);
  Rng r3(0), r4(0);
  CHECK(std::abs(objective_value(bf1, x, std::nullopt, noise, false, r3) -
                 objective_value(with_params_of(ObjectiveSpec::vanilla(), bf), x, std::nullopt, noise, false, r4)) < 1e-12);

  // β = γ = 0 leaves only the reconstruction term.
  VaeModel bf0 = with_params_of(ObjectiveSpec::bf_vae(0.0, 0.0), bf);
  Tape tape;
  BoundModel bound{nn::bind(tape, bf0.encoder, false), nn::bind(tape, bf0.decoder, false), {}};
  Rng r5(0);
  auto terms = objective_graph(bf0, bound, tape.constant(x), std::nullopt, noise, false, r5);
  CHECK(terms.loss.scalar() == terms.reconstruction.scalar());
}

TEST_CASE("capacity term vanishes when per-sample KL equals C and is never negative") {
  Rng rng(6);
  VaeModel m = VaeModel::create(ObjectiveSpec::bf_vae(1.0, 0.0), testutil::tiny_arch(), 4, 2, false, rng);
  const Tensor2 x = testutil::randn(1, 4, 1);
  const Tensor2 noise = testutil::randn(1, 2, 2);
  Tape tape;
  BoundModel b{nn::bind(tape, m.encoder, false), nn::bind(tape, m.decoder, false), {}};
  Rng r(0);
  auto t0 = objective_graph(m, b, tape.constant(x), std::nullopt, noise, false, r);
  CHECK(t0.capacity_term->scalar() >= 0.0);
  const double kl = t0.kl.scalar();
  auto t1 = objective_graph(m, b, tape.constant(x), std::nullopt, noise, false, r, kl);
  CHECK(std::abs(t1.capacity_term->scalar()) < 1e-12);
}

TEST_CASE("DIP penalties vanish at identity covariance") {
  Tape tape;
  Var mu = tape.constant(Tensor2::from_rows({{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}));
  Var lv = tape.constant(Tensor2(4, 2, -40.0));
  auto p1 = dip_penalties(mu, lv, Variant::DipVaeI);
  CHECK(p1.offdiag.scalar() == 0.0);
  CHECK(p1.diag.scalar() == 0.0);
  auto p2 = dip_penalties(mu, lv, Variant::DipVaeII);
  CHECK(p2.offdiag.scalar() == 0.0);
  CHECK(p2.diag.scalar() < 1e-15);
  // DIP-II adds the mean posterior variance to the diagonal: σ² = 1 → (2 − 1)² per dim.
  auto p3 = dip_penalties(mu, tape.constant(Tensor2(4, 2, 0.0)), Variant::DipVaeII);
  CHECK(p3.diag.scalar() == doctest::Approx(2.0));
}

TEST_CASE("zero-weight discriminator gives zero TC estimate") {
  Rng rng(3);
  VaeModel m = VaeModel::create(ObjectiveSpec::factor_vae(1.0), testutil::tiny_arch(), 4, 3, false, rng);
  for (auto& v : m.discriminator->values)
    for (double& e : v.data()) e = 0.0;
  Tape tape;
  auto d = nn::bind(tape, *m.discriminator, false);
  const Tensor2 z = testutil::randn(16, 3, 4);
  Rng r(1);
  auto terms = tc_discriminator_loss(m.disc_spec, d, tape.constant(z), tape.constant(permute_dims(z, r)), r);
  CHECK(terms.tc_estimate.scalar() == 0.0);
  CHECK(terms.disc_loss.scalar() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("permute_dims permutes each column and rejects tiny batches") {
  const Tensor2 z = testutil::randn(20, 3, 5);
  Rng rng(2);
  const Tensor2 zp = permute_dims(z, rng);
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < 20; ++i) {
      a.push_back(z(i, k));
      b.push_back(zp(i, k));
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK_THROWS_AS(permute_dims(Tensor2(1, 3), rng), ConfigError);
}

namespace {

/// Trains only a discriminator on fixed samples; returns (accuracy, tc_estimate) on fresh draws.
std::pair<double, double> train_disc(const std::function<Tensor2(std::size_t, Rng&)>& sampler, std::size_t k) {
  Rng rng(21);
  Architecture arch = testutil::tiny_arch();
  arch.disc_width = 32;
  VaeModel m = VaeModel::create(ObjectiveSpec::factor_vae(1.0), arch, 2, k, false, rng);
  auto opt = nn::AdamState::for_params(*m.discriminator, 3e-3);
  for (int it = 0; it < 1500; ++it) {
    const Tensor2 z = sampler(64, rng);
    const Tensor2 zp = permute_dims(z, rng);
    Tape tape;
    auto d = nn::bind(tape, *m.discriminator, true);
    auto t = tc_discriminator_loss(m.disc_spec, d, tape.constant(z), tape.constant(zp), rng);
    tape.backward(t.disc_loss);
    auto g = nn::collect_grads(*m.discriminator, d);
    std::tie(*m.discriminator, opt) = nn::adam_step(std::move(*m.discriminator), std::move(opt), g);
  }
  const Tensor2 z = sampler(1000, rng);
  const Tensor2 zp = permute_dims(z, rng);
  const Tensor2 lr = nn::mlp_infer(m.disc_spec, *m.discriminator, z);
  const Tensor2 lp = nn::mlp_infer(m.disc_spec, *m.discriminator, zp);
  double correct = 0.0, tc = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) {
    correct += lr(i, 0) > lr(i, 1);
    correct += lp(i, 1) > lp(i, 0);
    tc += lr(i, 0) - lr(i, 1);
  }
  return {correct / 2000.0, tc / 1000.0};
}

}  // namespace

TEST_CASE("discriminator: K=1 gives no TC, correlated dims are detected") {
  auto [acc1, tc1] = train_disc([](std::size_t n, Rng& r) { return standard_normal(n, 1, r); }, 1);
  CHECK(std::abs(tc1) < 0.1);
  auto [acc2, tc2] = train_disc(
      [](std::size_t n, Rng& r) {
        Tensor2 z = standard_normal(n, 2, r);
        for (std::size_t i = 0; i < n; ++i) z(i, 1) = z(i, 0);
        return z;
      },
      2);
  CHECK(acc2 > 0.9);
  CHECK(tc2 > 0.0);
  (void)acc1;
}

TEST_CASE("VAE step leaves the discriminator untouched and vice versa") {
  Rng rng(8);
  VaeModel m = VaeModel::create(ObjectiveSpec::bf_vae(0.5, 0.5), testutil::tiny_arch(), 4, 2, false, rng);
  const Tensor2 x = testutil::randn(8, 4, 3);
  {
    Tape tape;
    BoundModel b{nn::bind(tape, m.encoder, true), nn::bind(tape, m.decoder, true), nn::bind(tape, *m.discriminator, false)};
    Rng r(0);
    auto t = objective_graph(m, b, tape.constant(x), std::nullopt, testutil::randn(8, 2, 4), true, r);
    tape.backward(t.loss);
    for (const auto& g : nn::collect_grads(*m.discriminator, b.discriminator).values) CHECK(g.max_abs() == 0.0);
    double enc = 0.0;
    for (const auto& g : nn::collect_grads(m.encoder, b.encoder).values) enc = std::max(enc, g.max_abs());
    CHECK(enc > 0.0);
  }
  {
    Tape tape;
    auto enc = nn::bind(tape, m.encoder, false);
    auto d = nn::bind(tape, *m.discriminator, true);
    Rng r(0);
    const Tensor2 z = encode(m, x, std::nullopt, false, r).z.value();
    auto t = tc_discriminator_loss(m.disc_spec, d, tape.constant(z), tape.constant(permute_dims(z, r)), r);
    tape.backward(t.disc_loss);
    for (const auto& g : nn::collect_grads(m.encoder, enc).values) CHECK(g.max_abs() == 0.0);
  }
}

TEST_CASE("encode and decode contracts") {
  Rng rng(12);
  VaeModel m = VaeModel::create(ObjectiveSpec::vanilla(), testutil::tiny_arch(), 4, 2, false, rng);
  const Tensor2 x = testutil::randn(3, 4, 1);
  Rng r(0);
  CHECK(encode(m, x, std::nullopt, true, r).mu == encode(m, x, std::nullopt, true, r).mu);
  CHECK(*encode(m, x, std::nullopt, true, r).z == encode(m, x, std::nullopt, true, r).mu);
  CHECK_THROWS_AS(encode(m, Tensor2(3, 5), std::nullopt, true, r), DimensionError);

  // Sample variance of z at a fixed input approaches σ².
  Tensor2 xs(10000, 4);
  for (std::size_t i = 0; i < 10000; ++i)
    for (std::size_t j = 0; j < 4; ++j) xs(i, j) = x(0, j);
  const auto e = encode(m, xs, std::nullopt, false, r);
  for (std::size_t k = 0; k < 2; ++k) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 10000; ++i) mean += (*e.z)(i, k);
    mean /= 10000.0;
    for (std::size_t i = 0; i < 10000; ++i) var += ((*e.z)(i, k) - mean) * ((*e.z)(i, k) - mean);
    var /= 9999.0;
    CHECK(std::abs(var / std::exp(e.log_var(0, k)) - 1.0) < 0.05);
  }

  const Tensor2 z = testutil::randn(5, 2, 3);
  CHECK(decode(m, z) == decode(m, z));
  CHECK_THROWS_AS(decode(m, Tensor2(5, 3)), DimensionError);
  auto& out_w = m.decoder.values[m.decoder.size() - 2];
  auto& out_b = m.decoder.values[m.decoder.size() - 1];
  for (double& v : out_w.data()) v = 0.0;
  for (std::size_t j = 0; j < 4; ++j) out_b(0, j) = static_cast<double>(j);
  const Tensor2 xh = decode(m, z);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(xh(i, j) == static_cast<double>(j));
}

TEST_CASE("conditional model widths") {
  Rng rng(1);
  VaeModel m = VaeModel::create(ObjectiveSpec::bf_vae(0.1, 0.1), testutil::tiny_arch(), 4, 3, true, rng);
  CHECK(m.encoder_spec.input_width() == 5);
  CHECK(m.encoder_spec.output_width() == 6);
  CHECK(m.decoder_spec.input_width() == 4);
  Rng r(0);
  CHECK_THROWS_AS(encode(m, Tensor2(2, 4), std::nullopt, true, r), DimensionError);
  CHECK(encode(m, Tensor2(2, 4), Tensor2(2, 1), true, r).mu.cols() == 3);
}

namespace {

data::TabularDataset small_dataset(std::size_t n, std::uint64_t seed) {
  data::FaConfig c;
  c.n = n;
  c.n_train = n;
  c.p = 6;
  c.blocks = {{0, 1, 2}, {3, 4, 5}};
  c.seed = seed;
  c.label = data::SyntheticLabel{};
  return data::gen_fa(c).first;
}

}  // namespace

TEST_CASE("zero epochs yields initialized model with statistics") {
  TrainConfig c;
  c.objective = ObjectiveSpec::bf_vae(0.1, 0.3);
  c.arch = testutil::tiny_arch();
  c.latent_dim = 2;
  c.epochs = 0;
  const auto ds = small_dataset(20, 1);
  auto t = train_vae(c, ds);
  CHECK(t.loss_trace.empty());
  CHECK(t.stats.mu.rows() == 20);
  CHECK(t.stats.kl_per_dim.cols() == 2);
  CHECK(t.stats.kl_per_dim == gaussian_kl_per_dim(t.stats.mu, t.stats.log_var));
}

TEST_CASE("training is deterministic per seed and records epoch losses") {
  TrainConfig c;
  c.objective = ObjectiveSpec::bf_vae(0.1, 0.3);
  c.arch = testutil::tiny_arch();
  c.latent_dim = 2;
  c.epochs = 3;
  c.seed = 5;
  const auto ds = small_dataset(40, 2);
  auto a = train_vae(c, ds);
  auto b = train_vae(c, ds);
  CHECK(a.loss_trace.size() == 3);
  CHECK(a.disc_loss_trace.size() == 3);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.stats.mu == b.stats.mu);
  c.seed = 6;
  CHECK_FALSE(train_vae(c, ds).loss_trace == a.loss_trace);
}

TEST_CASE("training validates configuration") {
  TrainConfig c;
  c.batch_size = 1;
  CHECK_THROWS_AS(train_vae(c, small_dataset(10, 1)), ConfigError);
  TrainConfig d;
  d.conditional = true;
  auto ds = small_dataset(10, 1);
  ds.y.reset();
  d.arch = testutil::tiny_arch();
  d.epochs = 1;
  CHECK_THROWS_AS(train_vae(d, ds), ConfigError);
}

TEST_CASE("divergent training reports epoch and batch") {
  TrainConfig c;
  c.objective = ObjectiveSpec::vanilla();
  c.arch = testutil::tiny_arch();
  c.latent_dim = 2;
  c.lr = 1e150;
  c.epochs = 50;
  try {
    (void)train_vae(c, small_dataset(32, 3));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip") {
  TrainConfig c;
  c.objective = ObjectiveSpec::bf_vae(0.1, 0.3);
  c.arch = testutil::tiny_arch();
  c.latent_dim = 2;
  c.epochs = 1;
  c.seed = 9;
  const auto ds = small_dataset(20, 1);
  auto t = train_vae(c, ds);
  auto j = checkpoint_to_json(t);
  auto back = checkpoint_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.seed == 9);
  CHECK(back.loss_trace == t.loss_trace);
  CHECK(back.model.encoder.values == t.model.encoder.values);
  CHECK(back.model.discriminator->values == t.model.discriminator->values);
  CHECK(posterior_stats(back.model, ds.train_x(), std::nullopt).mu == t.stats.mu);
  j["encoder"][0]["rows"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(j), IntegrityError);
  CHECK_THROWS_AS(checkpoint_from_json(nlohmann::json{{"format", "other"}}), IntegrityError);
}
