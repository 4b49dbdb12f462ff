#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "bfvae/datagen.hpp"
#include "bfvae/error.hpp"
#include "helpers.hpp"

using namespace bfvae;
using namespace bfvae::data;

namespace {

FaConfig small_config(std::size_t n, double noise, std::uint64_t seed) {
  FaConfig c;
  c.n = n;
  c.n_train = n;
  c.p = 6;
  const std::size_t sizes[] = {3, 3};
  c.blocks = contiguous_blocks(sizes);
  c.noise_std = noise;
  c.seed = seed;
  return c;
}

Eigen::MatrixXd to_eigen(const Tensor2& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t(i, j);
  return m;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  auto p = std::filesystem::temp_directory_path() / ("bfvae_test_" + name);
  std::ofstream f(p);
  f << content;
  return p;
}

}  // namespace

TEST_CASE("presets match the benchmark table") {
  const auto fa15 = preset(Preset::FA15);
  CHECK(fa15.n == 1000);
  CHECK(fa15.n_train == 800);
  CHECK(fa15.p == 15);
  REQUIRE(fa15.blocks.size() == 4);
  CHECK(fa15.blocks[0].size() == 4);
  CHECK(fa15.blocks[3].size() == 3);

  const auto fa24 = preset(Preset::FA24);
  CHECK(fa24.n == 10000);
  CHECK(fa24.n_train == 8000);
  CHECK(fa24.p == 24);
  CHECK(fa24.blocks.size() == 6);
  for (const auto& b : fa24.blocks) CHECK(b.size() == 4);

  const auto fa100 = preset(Preset::FA100);
  CHECK(fa100.n == 50000);
  CHECK(fa100.n_train == 40000);
  std::size_t total = 0;
  for (const auto& b : fa100.blocks) total += b.size();
  CHECK(total == 100);
  CHECK(fa100.blocks.size() == 6);

  for (auto p : {Preset::FA15, Preset::FA24, Preset::FA100}) {
    CHECK(preset(p).loading_lo == 0.5);
    CHECK(preset(p).loading_hi == 1.5);
    CHECK(preset(p).noise_std == 0.1);
  }
  CHECK(parse_preset("FA15") == Preset::FA15);
  CHECK_FALSE(parse_preset("fa16").has_value());
}

TEST_CASE("single noiseless factor with unit loadings gives identical columns") {
  FaConfig c;
  c.n = 50;
  c.n_train = 50;
  c.p = 4;
  c.blocks = {{0, 1, 2, 3}};
  c.loading_lo = c.loading_hi = 1.0;
  c.random_sign = false;
  c.noise_std = 0.0;
  const auto [ds, truth] = gen_fa(c);
  for (std::size_t i = 0; i < c.n; ++i)
    for (std::size_t j = 1; j < c.p; ++j) CHECK(ds.x(i, j) == doctest::Approx(ds.x(i, 0)).epsilon(1e-12));
}

TEST_CASE("empty dataset keeps a valid ground truth") {
  auto c = small_config(0, 0.1, 1);
  const auto [ds, truth] = gen_fa(c);
  CHECK(ds.x.rows() == 0);
  CHECK(truth.num_factors == 2);
  CHECK(truth.loadings.rows() == 6);
}

TEST_CASE("overlapping blocks are rejected") {
  auto c = small_config(10, 0.1, 1);
  c.blocks = {{0, 1, 2}, {2, 3}};
  CHECK_THROWS_AS(gen_fa(c), ConfigError);
}

TEST_CASE("loadings are nonzero exactly on the block support and lie in range") {
  const auto cfg = preset(Preset::FA15, 3);
  const auto [ds, truth] = gen_fa(cfg);
  for (std::size_t j = 0; j < cfg.p; ++j) {
    const auto owner = truth.factor_of(j);
    for (std::size_t f = 0; f < truth.num_factors; ++f) {
      const double l = std::abs(truth.loadings(j, f));
      if (owner && *owner == f) {
        CHECK(l >= 0.5);
        CHECK(l <= 1.5);
      } else {
        CHECK(l == 0.0);
      }
    }
  }
}

TEST_CASE("sample covariance matches the factor model") {
  // Raw covariance ΛΛᵀ + σ²I, compared after undoing the standardization.
  auto c = small_config(10000, 0.3, 5);
  const auto [ds, truth] = gen_fa(c);
  const Tensor2 raw = ds.standardization.invert(ds.x);
  Eigen::MatrixXd x = to_eigen(raw);
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(x.rows());
  const Eigen::MatrixXd l = to_eigen(truth.loadings);
  const Eigen::MatrixXd expected = l * l.transpose() + 0.09 * Eigen::MatrixXd::Identity(6, 6);
  CHECK((cov - expected).norm() / expected.norm() < 0.05);
}

TEST_CASE("generator determinism") {
  const auto a = gen_fa(preset(Preset::FA15, 11));
  const auto b = gen_fa(preset(Preset::FA15, 11));
  const auto c = gen_fa(preset(Preset::FA15, 12));
  CHECK(testutil::max_abs_diff(a.first.x, b.first.x) == 0.0);
  CHECK(testutil::max_abs_diff(a.second.loadings, b.second.loadings) == 0.0);
  CHECK(testutil::max_abs_diff(a.first.x, c.first.x) > 0.1);
}

TEST_CASE("training columns are standardized") {
  const auto [ds, truth] = gen_fa(preset(Preset::FA15, 2));
  const Tensor2 tr = ds.train_x();
  for (std::size_t j = 0; j < tr.cols(); ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < tr.rows(); ++i) m += tr(i, j);
    m /= static_cast<double>(tr.rows());
    for (std::size_t i = 0; i < tr.rows(); ++i) v += (tr(i, j) - m) * (tr(i, j) - m);
    v /= static_cast<double>(tr.rows());
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(std::sqrt(v) - 1.0) < 1e-10);
  }
  CHECK(ds.train_rows.size() == 800);
  CHECK(ds.test_rows.size() == 200);
}

TEST_CASE("least squares on the true factors recovers the loadings without noise") {
  auto c = small_config(200, 0.0, 9);
  FaConfig cfg = c;
  // Regenerate factors alongside: feature j = Λ_j f, so regress the raw
  // features on two reconstructed factor columns taken from block leaders.
  const auto [ds, truth] = gen_fa(cfg);
  const Eigen::MatrixXd raw = to_eigen(ds.standardization.invert(ds.x));
  Eigen::MatrixXd f(raw.rows(), 2);
  f.col(0) = raw.col(0) / truth.loadings(0, 0);
  f.col(1) = raw.col(3) / truth.loadings(3, 1);
  const Eigen::MatrixXd coef = f.colPivHouseholderQr().solve(raw);  // 2 × p
  for (std::size_t j = 0; j < 6; ++j)
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(coef(k, j) - truth.loadings(j, k)) < 1e-6);
}

TEST_CASE("sampler reproduces the generator's standardized units") {
  const auto [ds, truth] = gen_fa(preset(Preset::FA15, 4));
  FactorSampler s{truth, ds.standardization};
  Rng rng(1);
  const Tensor2 f = standard_normal(20000, truth.num_factors, rng);
  const Tensor2 x = s.sample(f, rng);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) m += x(i, j);
    // The raw model has zero mean, so the sampler's mean sits at -mean/std.
    const double expect = -ds.standardization.mean[j] / ds.standardization.stddev[j];
    CHECK(std::abs(m / static_cast<double>(x.rows()) - expect) < 0.03);
  }
}

TEST_CASE("csv parsing errors carry line numbers") {
  CHECK_THROWS_AS(parse_csv(""), ParseError);
  try {
    parse_csv("a,b\n1,2\n3\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  try {
    parse_csv("a,b\n1,x\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("constant csv columns are reported by name") {
  const auto p = temp_file("const.csv", "u,v\n1,2\n1,2\n1,2\n");
  try {
    load_csv(p, std::nullopt, 1.0, 0);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'u'") != std::string::npos);
    CHECK(msg.find("'v'") != std::string::npos);
  }
}

TEST_CASE("csv split is disjoint and standardizes on training rows") {
  std::string text = "a,b,y\n";
  for (int i = 0; i < 10; ++i) text += std::to_string(i) + "," + std::to_string(i * i) + "," + std::to_string(2 * i) + "\n";
  const auto p = temp_file("split.csv", text);
  const auto ds = load_csv(p, 2, 0.8, 3);
  CHECK(ds.train_rows.size() == 8);
  CHECK(ds.test_rows.size() == 2);
  std::set<std::size_t> all(ds.train_rows.begin(), ds.train_rows.end());
  for (auto r : ds.test_rows) CHECK(all.insert(r).second);
  CHECK(all.size() == 10);
  CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(ds.label_name == "y");
  REQUIRE(ds.y.has_value());

  const Tensor2 back = ds.standardization.invert(ds.x);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(std::abs(back(i, 0) - static_cast<double>(i)) < 1e-10);
    CHECK(std::abs(back(i, 1) - static_cast<double>(i * i)) < 1e-10);
    CHECK(std::abs((*ds.y)[i] * ds.label_std + ds.label_mean - 2.0 * static_cast<double>(i)) < 1e-10);
  }
}

TEST_CASE("csv round trip through the writer") {
  const auto [ds, truth] = gen_fa(preset(Preset::WineLike, 1));
  std::vector<std::string> header = ds.feature_names;
  header.push_back(ds.label_name);
  const auto p = std::filesystem::temp_directory_path() / "bfvae_test_roundtrip.csv";
  write_csv(p, header, raw_table(ds, true));
  const auto [h, table] = read_csv_file(p);
  CHECK(h == header);
  std::vector<std::size_t> rows(ds.train_rows);
  const auto back = make_dataset(h, table, ds.num_features(), rows);
  CHECK(testutil::max_abs_diff(back.x, ds.x) < 1e-10);
  for (std::size_t i = 0; i < ds.x.rows(); ++i) CHECK(std::abs((*back.y)[i] - (*ds.y)[i]) < 1e-10);
}

TEST_CASE("manifest carries the ground truth") {
  const auto cfg = preset(Preset::FA15, 6);
  const auto [ds, truth] = gen_fa(cfg);
  const auto m = manifest_json(cfg, ds, truth);
  CHECK(m["n"] == 1000);
  CHECK(m["train_rows"] == 800);
  const auto t = truth_from_json(m["ground_truth"]);
  CHECK(t.blocks == truth.blocks);
  CHECK(testutil::max_abs_diff(t.loadings, truth.loadings) == 0.0);
}

TEST_CASE("synthetic label is a linear function of two features") {
  const auto cfg = preset(Preset::WineLike, 2);
  const auto [ds, truth] = gen_fa(cfg);
  REQUIRE(ds.y.has_value());
  double num = 0.0, den = 0.0;
  for (auto r : ds.train_rows) {
    const double pred = ds.x(r, cfg.label->feature_a) + ds.x(r, cfg.label->feature_b);
    num += pred * (*ds.y)[r];
    den += pred * pred;
  }
  CHECK(num / std::sqrt(den * static_cast<double>(ds.train_rows.size())) > 0.99);
}
