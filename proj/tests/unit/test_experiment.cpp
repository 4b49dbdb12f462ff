#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bfvae/bundle.hpp"
#include "bfvae/error.hpp"
#include "bfvae/experiment.hpp"
#include "helpers.hpp"

using namespace bfvae;
namespace fs = std::filesystem;

namespace {

exp::ExperimentConfig tiny_config(std::size_t runs = 2) {
  auto c = exp::recipe("fa15-bfvae");
  c.name = "tiny";
  c.dataset.n = 200;
  c.train.epochs = 2;
  c.train.latent_dim = 3;
  c.train.arch = testutil::tiny_arch();
  c.runs = runs;
  c.higgins_options.votes = 50;
  c.higgins_options.train_votes = 40;
  c.higgins_options.pairs_per_vote = 8;
  c.higgins_options.max_iters = 100;
  c.dbsr.solver.max_iters = 500;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("bfvae_test_" + name);
  fs::remove_all(d);
  return d;
}

/// One shared tiny experiment for the bundle tests.
const std::pair<exp::ExperimentResult, exp::LoadedDataset>& shared_run() {
  static const auto r = [] {
    const auto c = tiny_config();
    auto ds = exp::load_dataset(c.dataset);
    auto res = exp::run_experiment(c, ds);
    return std::pair{std::move(res), std::move(ds)};
  }();
  return r;
}

}  // namespace

TEST_CASE("every recipe validates and round-trips through json") {
  for (const auto& name : exp::recipe_names()) {
    CAPTURE(name);
    auto c = exp::recipe(name);
    if (!c.dataset.preset) {
      // Real-data recipes need the user's CSV.
      CHECK_THROWS_AS(c.validate(), ConfigError);
      c.dataset.csv = "data.csv";
    }
    CHECK_NOTHROW(c.validate());
    const auto j = exp::config_to_json(c);
    CHECK(exp::config_to_json(exp::config_from_json(j)) == j);
  }
  CHECK_THROWS_AS(exp::recipe("fa15-mystery"), ConfigError);
}

TEST_CASE("FA15 bfVAE recipe hyperparameters") {
  const auto c = exp::recipe("fa15-bfvae");
  CHECK(c.train.objective.beta == 2e-3);
  CHECK(c.train.objective.gamma == 0.3);
  CHECK(c.train.latent_dim == 5);
  CHECK(c.train.epochs == 100);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.runs == 10);
  CHECK(c.rho == 0.5);
  CHECK(c.traversal.strategy == fvh::RangeStrategy::FixedRange);
  CHECK(c.traversal.param == 15.0);
  CHECK(exp::recipe("fa15-dip-vae-i").train.optimizer == vae::Optimizer::Sgd);
}

TEST_CASE("config patches overwrite only the keys present") {
  const auto base = tiny_config();
  const auto c = exp::config_from_json({{"training", {{"epochs", 7}}}, {"rho", 0.25}}, base);
  CHECK(c.train.epochs == 7);
  CHECK(c.rho == 0.25);
  CHECK(c.train.latent_dim == base.train.latent_dim);
  CHECK(c.name == base.name);
}

TEST_CASE("unknown or mistyped config keys are configuration errors") {
  CHECK_THROWS_AS(exp::config_from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(exp::config_from_json({{"training", {{"epochz", 1}}}}), ConfigError);
  CHECK_THROWS_AS(exp::config_from_json({{"training", {{"epochs", "many"}}}}), ConfigError);
  try {
    exp::config_from_json({{"dbsr", {{"lamda_d", 1}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lamda_d") != std::string::npos);
  }
}

TEST_CASE("validation lists every problem") {
  auto c = tiny_config();
  c.runs = 0;
  c.rho = 1.5;
  c.train.latent_dim = 1;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("runs") != std::string::npos);
    CHECK(msg.find("rho") != std::string::npos);
    CHECK(msg.find("latent") != std::string::npos);
  }
}

TEST_CASE("dataset fingerprints are stable and split-sensitive") {
  auto src = tiny_config().dataset;
  const auto a = exp::load_dataset(src);
  const auto b = exp::load_dataset(src);
  CHECK(a.fingerprint == b.fingerprint);
  REQUIRE(a.truth.has_value());
  src.data_seed = 1;
  CHECK(exp::load_dataset(src).fingerprint != a.fingerprint);
  CHECK(exp::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(exp::fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("single-run aggregate equals that run") {
  const auto c = tiny_config(1);
  const auto ds = exp::load_dataset(c.dataset);
  const auto r = exp::run_experiment(c, ds);
  REQUIRE(r.runs.size() == 1);
  REQUIRE(r.runs[0].ok());
  REQUIRE(r.fvh_aggregate.has_value());
  CHECK(testutil::max_abs_diff(r.fvh_aggregate->values, r.runs[0].fvh->values) == 0.0);
  CHECK(r.fvh_aggregate->mean_kl == r.runs[0].fvh->mean_kl);
  REQUIRE(r.dbsr_aggregate.has_value());
  CHECK(testutil::max_abs_diff(r.dbsr_aggregate->magnitude.values, r.runs[0].dbsr->magnitude.values) == 0.0);
}

TEST_CASE("experiments are deterministic and independent of the worker count") {
  const auto& [first, ds] = shared_run();
  const auto again = exp::run_experiment(first.config, ds, 2);
  CHECK(again.metrics.dump() == first.metrics.dump());
  REQUIRE(first.runs.size() == 2);
  CHECK(first.runs[0].seed == first.config.master_seed);
  CHECK(first.runs[1].seed == first.config.master_seed + 1);
  const auto& m = first.metrics;
  CHECK(m["format"] == "bfvae-metrics");
  CHECK(m["runs"] == 2);
  CHECK(m.contains("lsdi"));
  CHECK_FALSE(m.contains("timing"));
}

TEST_CASE("failing stages are recorded per run") {
  auto c = tiny_config(2);
  const auto ds = exp::load_dataset(c.dataset);
  // A learning rate this large drives the weights non-finite.
  c.train.lr = 1e30;
  const auto r = exp::run_experiment(c, ds);
  for (const auto& run : r.runs) {
    CHECK_FALSE(run.ok());
    CHECK(run.failed_stage == "train");
    CHECK_FALSE(run.error.empty());
  }
  CHECK(r.aligned_runs.empty());
  CHECK(r.metrics["failures"].size() == 2);
}

TEST_CASE("bundle write and read back") {
  const auto& [res, ds] = shared_run();
  const auto dir = scratch_dir("bundle");
  bundle::write_bundle(dir, res, ds);
  for (const char* f : {"bundle.json", "config.json", "dataset.json", "metrics.json", "timing.json",
                        "runs/run_000/status.json", "runs/run_001/fvh_lt.json", "alignment/fvh_lt.json",
                        "aggregate/fvh_lt.json", "aggregate/dbsr_magnitude.json"})
    CHECK(fs::exists(dir / f));
  const auto b = bundle::read_bundle(dir);
  CHECK(b.metrics == res.metrics);
  REQUIRE(b.fvh_lt.has_value());
  CHECK(testutil::max_abs_diff(b.fvh_lt->values, res.fvh_aggregate->values) < 1e-12);
  CHECK(b.feature_names == ds.data.feature_names);
  CHECK(b.dataset["fingerprint"] == ds.fingerprint);
  // Rewriting replaces the previous tree without leftovers.
  bundle::write_bundle(dir, res, ds);
  for (const auto& e : fs::directory_iterator(dir.parent_path()))
    CHECK(e.path().filename().string().find("bfvae_test_bundle.partial") == std::string::npos);
}

TEST_CASE("corrupted bundle files are integrity errors") {
  const auto& [res, ds] = shared_run();
  const auto dir = scratch_dir("corrupt");
  bundle::write_bundle(dir, res, ds);
  {
    std::ofstream f(dir / "aggregate" / "fvh_lt.json", std::ios::app);
    f << " ";
  }
  CHECK_THROWS_AS(bundle::read_bundle(dir), IntegrityError);
  bundle::write_bundle(dir, res, ds);
  fs::remove(dir / "metrics.json");
  CHECK_THROWS_AS(bundle::read_bundle(dir), IntegrityError);
}

TEST_CASE("report rendering is idempotent") {
  const auto& [res, ds] = shared_run();
  const auto dir = scratch_dir("report");
  bundle::write_bundle(dir, res, ds);
  const auto b = bundle::read_bundle(dir);
  const auto out = dir / "report";
  const auto files = bundle::render_report(b, bundle::ReportFormat::All, out);
  std::vector<std::string> first;
  for (const auto& f : files) first.push_back(slurp(f));
  const auto files2 = bundle::render_report(b, bundle::ReportFormat::All, out);
  REQUIRE(files2 == files);
  for (std::size_t i = 0; i < files.size(); ++i) CHECK(slurp(files2[i]) == first[i]);
  CHECK(fs::exists(out / "summary.txt"));
  CHECK(fs::exists(out / "fvh_lt.csv"));
  CHECK(fs::exists(out / "fvh_lt.svg"));
  CHECK(bundle::parse_format("svg") == bundle::ReportFormat::Svg);
  CHECK_FALSE(bundle::parse_format("png").has_value());
}

TEST_CASE("association csv layout") {
  AssociationMatrix a;
  a.values = Tensor2(2, 2, {1.5, 0.0, 0.0, 2.0});
  a.mean_kl = {1.0, 0.5};
  a.informative = {0};
  const std::vector<std::string> names{"x1", "x2"};
  const auto csv = bundle::association_csv(a, names);
  std::istringstream in(csv);
  std::string header, row0;
  std::getline(in, header);
  std::getline(in, row0);
  CHECK(header == "latent,kind,x1,x2,mean_kl,informative");
  CHECK(row0.rfind("0,", 0) == 0);
  CHECK(row0.find("1.5") != std::string::npos);
}

TEST_CASE("zero matrix heatmap is all white") {
  AssociationMatrix a;
  a.values = Tensor2(2, 3);
  a.mean_kl = {0.0, 0.0};
  const std::vector<std::string> names{"a", "b", "c"};
  const auto svg = bundle::heatmap_svg(a, names, "zero");
  CHECK(svg.find("<svg") != std::string::npos);
  auto count = [](const std::string& text, const std::string& what) {
    std::size_t n = 0;
    for (auto pos = text.find(what); pos != std::string::npos; pos = text.find(what, pos + 1)) ++n;
    return n;
  };
  CHECK(count(svg, "fill=\"#ffffff\" stroke") == 6);
  a.values(1, 2) = 4.0;
  a.values(0, 0) = 2.0;
  const auto one = bundle::heatmap_svg(a, names, "one");
  CHECK(count(one, "fill=\"#000000\"") == 1);
  CHECK(count(one, "fill=\"#808080\"") == 1);
}

TEST_CASE("compare refuses different datasets or latent sizes") {
  const auto& [res, ds] = shared_run();
  const auto d1 = scratch_dir("cmp1");
  bundle::write_bundle(d1, res, ds);
  auto b1 = bundle::read_bundle(d1);
  const std::vector<bundle::Bundle> same{b1, b1};
  const auto table = bundle::compare(same);
  CHECK(table.find("LSDI") != std::string::npos);
  auto b2 = b1;
  b2.dataset["fingerprint"] = "different";
  CHECK_THROWS_AS(bundle::compare(std::vector<bundle::Bundle>{b1, b2}), ConfigError);
  auto b3 = b1;
  b3.metrics["latent_dim"] = 9;
  CHECK_THROWS_AS(bundle::compare(std::vector<bundle::Bundle>{b1, b3}), ConfigError);
}
