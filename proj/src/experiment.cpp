#include "bfvae/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "bfvae/error.hpp"

namespace bfvae::exp {

using nlohmann::json;

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string dataset_fingerprint(const data::TabularDataset& ds) {
  std::string bytes;
  for (const auto& n : ds.feature_names) bytes += n + '\n';
  for (auto r : ds.train_rows) bytes += std::to_string(r) + ',';
  bytes += '\n';
  const auto v = ds.x.data();
  bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  if (ds.y) bytes.append(reinterpret_cast<const char*>(ds.y->data()), ds.y->size() * sizeof(double));
  return fnv1a_hex(bytes);
}

json read_json_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw ParseError("cannot open " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void DatasetSource::validate() const {
  if (preset && !csv.empty()) throw ConfigError("dataset: give either a preset or a csv path, not both");
  if (!preset && csv.empty()) throw ConfigError("dataset: a preset or a csv path is required");
  if (!csv.empty() && (n || n_train)) throw ConfigError("dataset: n / n_train only apply to presets");
  if (!manifest.empty() && csv.empty()) throw ConfigError("dataset: a manifest needs a csv path");
  if (!(split_fraction > 0.0 && split_fraction <= 1.0)) throw ConfigError("dataset: split_fraction must lie in (0,1]");
}

data::FaConfig preset_config(const DatasetSource& source) {
  if (!source.preset) throw ConfigError("dataset: not a preset source");
  auto c = data::preset(*source.preset, source.data_seed);
  if (source.n) {
    const double frac = static_cast<double>(c.n_train) / static_cast<double>(c.n);
    c.n = *source.n;
    c.n_train = static_cast<std::size_t>(std::llround(frac * static_cast<double>(c.n)));
  }
  if (source.n_train) c.n_train = *source.n_train;
  return c;
}

LoadedDataset load_dataset(const DatasetSource& source) {
  source.validate();
  LoadedDataset out;
  if (source.preset) {
    const auto cfg = preset_config(source);
    auto [ds, truth] = data::gen_fa(cfg);
    out.data = std::move(ds);
    out.truth = std::move(truth);
    out.description = cfg.name + " (seed " + std::to_string(cfg.seed) + ", n " + std::to_string(cfg.n) + ")";
  } else if (!source.manifest.empty()) {
    const json m = read_json_file(source.manifest);
    if (m.value("format", "") != "bfvae-dataset-manifest") throw ParseError("manifest: unrecognized format");
    auto [header, table] = data::read_csv_file(source.csv);
    std::optional<std::size_t> label_col;
    if (m.contains("label")) label_col = m["label"].at("column").get<std::size_t>();
    const auto n_train = m.at("train_rows").get<std::size_t>();
    if (n_train > table.rows()) throw ConfigError("manifest: more training rows than the csv holds");
    std::vector<std::size_t> rows(n_train);
    std::iota(rows.begin(), rows.end(), 0);
    out.data = data::make_dataset(header, table, label_col, std::move(rows));
    if (m.contains("feature_names") && m["feature_names"].get<std::vector<std::string>>() != out.data.feature_names)
      throw ConfigError("manifest: feature names do not match the csv header");
    if (m.contains("ground_truth")) out.truth = data::truth_from_json(m["ground_truth"]);
    out.description = source.csv.filename().string() + " (manifest " + m.value("preset", "custom") + ")";
  } else {
    std::optional<std::size_t> label_col;
    if (!source.label.empty()) {
      const auto [header, table] = data::read_csv_file(source.csv);
      const auto it = std::find(header.begin(), header.end(), source.label);
      if (it == header.end()) throw ConfigError("dataset: label column '" + source.label + "' not in the csv header");
      label_col = static_cast<std::size_t>(it - header.begin());
    }
    out.data = data::load_csv(source.csv, label_col, source.split_fraction, source.split_seed);
    out.description = source.csv.filename().string();
  }
  out.fingerprint = dataset_fingerprint(out.data);
  return out;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      problems.emplace_back(e.what());
    }
  };
  check([&] { dataset.validate(); });
  check([&] { train.validate(); });
  check([&] { traversal.validate(); });
  if (runs < 1) problems.emplace_back("runs: R must be at least 1");
  if (train.latent_dim < 2) problems.emplace_back("latent_dim: K must be at least 2");
  if (train.epochs < 1) problems.emplace_back("epochs: must be at least 1");
  if (!(rho >= 0.0 && rho <= 1.0)) problems.emplace_back("rho: must lie in [0,1]");
  if (dbsr.enabled) {
    if (!(dbsr.lambda_d >= 0.0)) problems.emplace_back("dbsr.lambda_d: must be non-negative");
    if (!(dbsr.lambda_b >= 0.0)) problems.emplace_back("dbsr.lambda_b: must be non-negative");
    if (dbsr.solver.max_iters < 1) problems.emplace_back("dbsr.max_iters: must be at least 1");
    if (!(dbsr.solver.tol > 0.0)) problems.emplace_back("dbsr.tol: must be positive");
  }
  if (quality.enabled) {
    if (!train.conditional) problems.emplace_back("quality: requires a conditional model");
    if (quality.steps < 2) problems.emplace_back("quality.steps: must be at least 2");
    if (quality.lo && quality.hi && !(*quality.hi > *quality.lo)) problems.emplace_back("quality: hi must exceed lo");
  }
  if (train.conditional && dataset.csv.empty() && dataset.preset && *dataset.preset != data::Preset::WineLike)
    problems.emplace_back("conditional: the dataset has no label column");
  if (train.conditional && !dataset.csv.empty() && dataset.label.empty() && dataset.manifest.empty())
    problems.emplace_back("conditional: set dataset.label to the label column");
  if (higgins) {
    const auto& h = higgins_options;
    if (h.votes < 2 || h.train_votes < 1 || h.train_votes >= h.votes)
      problems.emplace_back("higgins: need 1 <= train_votes < votes");
    if (h.pairs_per_vote < 1) problems.emplace_back("higgins.pairs_per_vote: must be at least 1");
    if (!(h.learning_rate > 0.0)) problems.emplace_back("higgins.learning_rate: must be positive");
  }
  if (!problems.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

json config_to_json(const ExperimentConfig& c) {
  json ds;
  ds["preset"] = c.dataset.preset ? json(data::preset_name(*c.dataset.preset)) : json(nullptr);
  ds["data_seed"] = c.dataset.data_seed;
  ds["n"] = c.dataset.n ? json(*c.dataset.n) : json(nullptr);
  ds["n_train"] = c.dataset.n_train ? json(*c.dataset.n_train) : json(nullptr);
  ds["csv"] = c.dataset.csv.string();
  ds["manifest"] = c.dataset.manifest.string();
  ds["label"] = c.dataset.label;
  ds["split_fraction"] = c.dataset.split_fraction;
  ds["split_seed"] = c.dataset.split_seed;
  const auto& t = c.train;
  json j;
  j["format"] = "bfvae-experiment";
  j["version"] = 1;
  j["name"] = c.name;
  j["dataset"] = ds;
  j["objective"] = vae::objective_to_json(t.objective);
  j["architecture"] = vae::architecture_to_json(t.arch);
  j["training"] = {{"latent_dim", t.latent_dim},
                   {"epochs", t.epochs},
                   {"batch_size", t.batch_size},
                   {"lr", t.lr},
                   {"disc_lr", t.disc_lr},
                   {"optimizer", vae::optimizer_name(t.optimizer)},
                   {"capacity_ramp_fraction", t.capacity_ramp_fraction},
                   {"conditional", t.conditional}};
  j["traversal"] = fvh::traversal_to_json(c.traversal);
  j["dbsr"] = {{"enabled", c.dbsr.enabled},
               {"lambda_d", c.dbsr.lambda_d},
               {"lambda_b", c.dbsr.lambda_b},
               {"max_iters", c.dbsr.solver.max_iters},
               {"tol", c.dbsr.solver.tol}};
  j["quality"] = {{"enabled", c.quality.enabled},
                  {"lo", c.quality.lo ? json(*c.quality.lo) : json(nullptr)},
                  {"hi", c.quality.hi ? json(*c.quality.hi) : json(nullptr)},
                  {"steps", c.quality.steps}};
  j["rho"] = c.rho;
  j["runs"] = c.runs;
  j["master_seed"] = c.master_seed;
  const auto& h = c.higgins_options;
  j["higgins"] = {{"enabled", c.higgins},
                  {"votes", h.votes},
                  {"train_votes", h.train_votes},
                  {"pairs_per_vote", h.pairs_per_vote},
                  {"max_iters", h.max_iters},
                  {"learning_rate", h.learning_rate}};
  j["output"] = c.output.string();
  return j;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
std::optional<T> opt_value(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

ExperimentConfig config_from_json(const json& patch, const ExperimentConfig& base) {
  json j = config_to_json(base);
  j.merge_patch(patch);
  try {
    check_keys(j, {"format", "version", "name", "dataset", "objective", "architecture", "training", "traversal", "dbsr",
                   "quality", "rho", "runs", "master_seed", "higgins", "output"},
               "config");
    if (j.value("format", "bfvae-experiment") != "bfvae-experiment") throw ConfigError("config: unrecognized format");
    ExperimentConfig c;
    c.name = j.at("name").get<std::string>();

    const auto& ds = j.at("dataset");
    check_keys(ds, {"preset", "data_seed", "n", "n_train", "csv", "manifest", "label", "split_fraction", "split_seed"},
               "dataset");
    if (auto p = opt_value<std::string>(ds, "preset")) {
      c.dataset.preset = data::parse_preset(*p);
      if (!c.dataset.preset) throw ConfigError("dataset: unknown preset '" + *p + "'");
    }
    c.dataset.data_seed = ds.value("data_seed", std::uint64_t{0});
    c.dataset.n = opt_value<std::size_t>(ds, "n");
    c.dataset.n_train = opt_value<std::size_t>(ds, "n_train");
    c.dataset.csv = ds.value("csv", std::string{});
    c.dataset.manifest = ds.value("manifest", std::string{});
    c.dataset.label = ds.value("label", std::string{});
    c.dataset.split_fraction = ds.value("split_fraction", 0.8);
    c.dataset.split_seed = ds.value("split_seed", std::uint64_t{0});

    check_keys(j.at("objective"), {"variant", "beta", "gamma", "capacity", "lambda_od", "lambda_d", "reduction"},
               "objective");
    c.train.objective = vae::objective_from_json(j.at("objective"));
    check_keys(j.at("architecture"), {"encoder_hidden", "decoder_hidden", "dropout", "disc_hidden_layers", "disc_width",
                                      "disc_slope", "init_kaiming_a"},
               "architecture");
    c.train.arch = vae::architecture_from_json(j.at("architecture"));

    const auto& t = j.at("training");
    check_keys(t, {"latent_dim", "epochs", "batch_size", "lr", "disc_lr", "optimizer", "capacity_ramp_fraction",
                   "conditional"},
               "training");
    c.train.latent_dim = t.at("latent_dim").get<std::size_t>();
    c.train.epochs = t.at("epochs").get<std::size_t>();
    c.train.batch_size = t.at("batch_size").get<std::size_t>();
    c.train.lr = t.at("lr").get<double>();
    c.train.disc_lr = t.at("disc_lr").get<double>();
    const auto opt = vae::parse_optimizer(t.at("optimizer").get<std::string>());
    if (!opt) throw ConfigError("training: unknown optimizer '" + t.at("optimizer").get<std::string>() + "'");
    c.train.optimizer = *opt;
    c.train.capacity_ramp_fraction = t.at("capacity_ramp_fraction").get<double>();
    c.train.conditional = t.at("conditional").get<bool>();

    check_keys(j.at("traversal"), {"strategy", "param", "steps"}, "traversal");
    c.traversal = fvh::traversal_from_json(j.at("traversal"));

    const auto& d = j.at("dbsr");
    check_keys(d, {"enabled", "lambda_d", "lambda_b", "max_iters", "tol"}, "dbsr");
    c.dbsr.enabled = d.at("enabled").get<bool>();
    c.dbsr.lambda_d = d.at("lambda_d").get<double>();
    c.dbsr.lambda_b = d.at("lambda_b").get<double>();
    c.dbsr.solver.max_iters = d.at("max_iters").get<std::size_t>();
    c.dbsr.solver.tol = d.at("tol").get<double>();

    const auto& q = j.at("quality");
    check_keys(q, {"enabled", "lo", "hi", "steps"}, "quality");
    c.quality.enabled = q.at("enabled").get<bool>();
    c.quality.lo = opt_value<double>(q, "lo");
    c.quality.hi = opt_value<double>(q, "hi");
    c.quality.steps = q.at("steps").get<std::size_t>();

    c.rho = j.at("rho").get<double>();
    c.runs = j.at("runs").get<std::size_t>();
    c.master_seed = j.at("master_seed").get<std::uint64_t>();

    const auto& h = j.at("higgins");
    check_keys(h, {"enabled", "votes", "train_votes", "pairs_per_vote", "max_iters", "learning_rate"}, "higgins");
    c.higgins = h.at("enabled").get<bool>();
    c.higgins_options.votes = h.at("votes").get<std::size_t>();
    c.higgins_options.train_votes = h.at("train_votes").get<std::size_t>();
    c.higgins_options.pairs_per_vote = h.at("pairs_per_vote").get<std::size_t>();
    c.higgins_options.max_iters = h.at("max_iters").get<std::size_t>();
    c.higgins_options.learning_rate = h.at("learning_rate").get<double>();
    c.output = j.at("output").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

namespace {

struct RecipeDef {
  const char* name;
  void (*apply)(ExperimentConfig&);
};

void fa15(ExperimentConfig& c, vae::ObjectiveSpec o, double lambda) {
  c.dataset.preset = data::Preset::FA15;
  c.train.objective = o;
  c.train.latent_dim = 5;
  c.train.epochs = 100;
  c.dbsr.lambda_d = c.dbsr.lambda_b = lambda;
}

vae::ObjectiveSpec mean_recon(vae::ObjectiveSpec o) {
  o.reduction = vae::ReconReduction::FeatureMean;
  return o;
}

const RecipeDef kRecipes[] = {
    {"fa15-bfvae", [](ExperimentConfig& c) { fa15(c, mean_recon(vae::ObjectiveSpec::bf_vae(2e-3, 0.3)), 0.1); }},
    {"fa15-bfvae-dbsr", [](ExperimentConfig& c) { fa15(c, mean_recon(vae::ObjectiveSpec::bf_vae(1e-3, 0.2)), 0.1); }},
    {"fa15-beta-vae", [](ExperimentConfig& c) { fa15(c, mean_recon(vae::ObjectiveSpec::beta_vae(2e-3)), 1e-2); }},
    {"fa15-beta-vae-dbsr", [](ExperimentConfig& c) { fa15(c, mean_recon(vae::ObjectiveSpec::beta_vae(1e-3)), 1e-2); }},
    {"fa15-factor-vae", [](ExperimentConfig& c) { fa15(c, mean_recon(vae::ObjectiveSpec::factor_vae(0.3)), 1e-4); }},
    {"fa15-factor-vae-dbsr",
     [](ExperimentConfig& c) { fa15(c, mean_recon(vae::ObjectiveSpec::factor_vae(0.2)), 1e-4); }},
    {"fa15-vanilla-vae", [](ExperimentConfig& c) { fa15(c, mean_recon(vae::ObjectiveSpec::vanilla()), 1e-4); }},
    {"fa15-dip-vae-i",
     [](ExperimentConfig& c) {
       fa15(c, mean_recon(vae::ObjectiveSpec::dip_vae_i(1.0, 1.0)), 1e-3);
       c.train.optimizer = vae::Optimizer::Sgd;
     }},
    {"fa15-dip-vae-ii",
     [](ExperimentConfig& c) {
       fa15(c, mean_recon(vae::ObjectiveSpec::dip_vae_ii(1.0, 1.0)), 5e-5);
       c.train.optimizer = vae::Optimizer::Sgd;
     }},
    {"fa24-bfvae",
     [](ExperimentConfig& c) {
       c.dataset.preset = data::Preset::FA24;
       c.train.objective = mean_recon(vae::ObjectiveSpec::bf_vae(2e-3, 0.25));
       c.train.latent_dim = 10;
       c.train.epochs = 100;
       c.dbsr.lambda_d = c.dbsr.lambda_b = 0.2;
     }},
    {"fa100-bfvae",
     [](ExperimentConfig& c) {
       c.dataset.preset = data::Preset::FA100;
       c.train.objective = mean_recon(vae::ObjectiveSpec::bf_vae(1e-4, 0.3));
       c.train.latent_dim = 10;
       c.train.epochs = 150;
       c.dbsr.lambda_d = c.dbsr.lambda_b = 0.3;
     }},
    {"fa100-bfvae-dbsr",
     [](ExperimentConfig& c) {
       c.dataset.preset = data::Preset::FA100;
       c.train.objective = mean_recon(vae::ObjectiveSpec::bf_vae(7e-4, 0.3));
       c.train.latent_dim = 10;
       c.train.epochs = 150;
       c.dbsr.lambda_d = c.dbsr.lambda_b = 0.3;
     }},
    {"wine-bfvae",
     [](ExperimentConfig& c) {
       c.train.objective = mean_recon(vae::ObjectiveSpec::bf_vae(2e-3, 0.3));
       c.train.latent_dim = 6;
       c.train.epochs = 75;
       c.dbsr.lambda_d = c.dbsr.lambda_b = 1e-2;
       c.higgins = false;
     }},
    {"wine-bfvae-dbsr",
     [](ExperimentConfig& c) {
       c.train.objective = mean_recon(vae::ObjectiveSpec::bf_vae(3e-3, 0.3));
       c.train.latent_dim = 6;
       c.train.epochs = 75;
       c.dbsr.lambda_d = c.dbsr.lambda_b = 1e-2;
       c.higgins = false;
     }},
    {"fifa-bfvae",
     [](ExperimentConfig& c) {
       c.train.objective = mean_recon(vae::ObjectiveSpec::bf_vae(1e-3, 0.3));
       c.train.latent_dim = 6;
       c.train.epochs = 800;
       c.train.batch_size = 8;
       c.train.lr = 5e-5;
       c.dbsr.lambda_d = c.dbsr.lambda_b = 1e-2;
       c.higgins = false;
     }},
    {"winelike-cvae",
     [](ExperimentConfig& c) {
       c.dataset.preset = data::Preset::WineLike;
       c.train.objective = mean_recon(vae::ObjectiveSpec::bf_vae(1e-2, 0.3));
       c.train.latent_dim = 6;
       c.train.epochs = 75;
       c.train.conditional = true;
       c.quality.enabled = true;
       c.dbsr.enabled = false;
       c.higgins = false;
     }},
};

}  // namespace

std::vector<std::string> recipe_names() {
  std::vector<std::string> out;
  for (const auto& r : kRecipes) out.emplace_back(r.name);
  return out;
}

ExperimentConfig recipe(const std::string& name) {
  for (const auto& r : kRecipes) {
    if (name != r.name) continue;
    ExperimentConfig c;
    c.name = name;
    c.train.batch_size = 16;
    c.train.lr = 1e-4;
    c.traversal = fvh::TraversalSpec::fixed(15.0);
    c.rho = 0.5;
    c.runs = 10;
    r.apply(c);
    return c;
  }
  throw ConfigError("unknown recipe '" + name + "'");
}

namespace {

void run_one(const ExperimentConfig& config, const LoadedDataset& dataset, RunResult& run) {
  const auto& ds = dataset.data;
  std::string stage = "train";
  try {
    auto t0 = std::chrono::steady_clock::now();
    auto tc = config.train;
    tc.seed = run.seed;
    run.trained = vae::train_vae(tc, ds);
    run.timing.train = seconds_since(t0);

    const Tensor2 x = ds.train_x();
    const auto cond = vae::condition_column(ds, ds.train_rows, tc.conditional);
    const auto& model = run.trained->model;

    stage = "fvh-lt";
    t0 = std::chrono::steady_clock::now();
    run.fvh = fvh::fvh_lt_run(model, x, cond, config.traversal, derive_seed(run.seed, {1}));
    run.timing.fvh_lt = seconds_since(t0);

    if (config.dbsr.enabled) {
      stage = "dbsr-ls";
      t0 = std::chrono::steady_clock::now();
      run.dbsr = dbsr::dbsr_run(model, x, cond, config.dbsr.lambda_d, config.dbsr.lambda_b, config.dbsr.solver);
      run.timing.dbsr = seconds_since(t0);
    }

    if (config.quality.enabled) {
      stage = "quality-traversal";
      t0 = std::chrono::steady_clock::now();
      const auto y = ds.train_y();
      const double lo = config.quality.lo.value_or(*std::min_element(y.begin(), y.end()));
      const double hi = config.quality.hi.value_or(*std::max_element(y.begin(), y.end()));
      run.quality = fvh::cvae_quality_traversal(model, x, *cond, lo, hi, config.quality.steps, derive_seed(run.seed, {2}));
      run.timing.quality = seconds_since(t0);
    }

    if (config.higgins && dataset.truth && !tc.conditional) {
      stage = "higgins";
      t0 = std::chrono::steady_clock::now();
      const data::FactorSampler sampler{*dataset.truth, ds.standardization};
      auto opts = config.higgins_options;
      opts.seed = derive_seed(run.seed, {3});
      run.higgins = metrics::higgins_score(sampler, model, opts);
      run.timing.higgins = seconds_since(t0);
    }
  } catch (const std::exception& e) {
    run.failed_stage = stage;
    run.error = e.what();
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const LoadedDataset& dataset, std::size_t jobs,
                                const Progress& progress) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.config = config;
  res.dataset_fingerprint = dataset.fingerprint;
  res.feature_names = dataset.data.feature_names;
  res.runs.resize(config.runs);
  for (std::size_t r = 0; r < config.runs; ++r) {
    res.runs[r].index = r;
    res.runs[r].seed = config.master_seed + r;
  }

  jobs = std::clamp<std::size_t>(jobs, 1, config.runs);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    if (jobs > 1) omp_set_num_threads(1);
    for (std::size_t r; (r = next.fetch_add(1)) < config.runs;) {
      run_one(config, dataset, res.runs[r]);
      if (progress) {
        const auto& run = res.runs[r];
        std::ostringstream msg;
        msg << "run " << r << " (seed " << run.seed << ")";
        if (run.ok())
          msg << " done in " << static_cast<long long>(run.timing.train + run.timing.fvh_lt + run.timing.dbsr +
                                                       run.timing.quality + run.timing.higgins + 0.5)
              << " s";
        else
          msg << " failed at " << run.failed_stage << ": " << run.error;
        std::lock_guard lock(log_mutex);
        progress(msg.str());
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker);
  }

  std::vector<AssociationMatrix> fvh_runs;
  std::vector<dbsr::DbsrRun> dbsr_runs;
  std::vector<std::vector<double>> quality_runs;
  for (const auto& run : res.runs) {
    if (!run.ok()) continue;
    res.aligned_runs.push_back(run.index);
    fvh_runs.push_back(*run.fvh);
    if (run.dbsr) dbsr_runs.push_back(*run.dbsr);
    if (run.quality) quality_runs.push_back(*run.quality);
  }
  if (!fvh_runs.empty()) {
    try {
      const std::uint64_t align_seed = derive_seed(config.master_seed, {0x47415300});
      res.fvh_mapping = gas::greedy_align(fvh_runs, config.rho, align_seed);
      res.fvh_aggregate = fvh::fvh_lt_aggregate(fvh_runs, *res.fvh_mapping);
      if (!dbsr_runs.empty()) res.dbsr_aggregate = dbsr::dbsr_aggregate(dbsr_runs, config.rho, align_seed);
      if (!quality_runs.empty()) {
        std::vector<double> q(quality_runs.front().size(), 0.0);
        for (const auto& v : quality_runs)
          for (std::size_t j = 0; j < q.size(); ++j) q[j] += v[j];
        for (double& v : q) v /= static_cast<double>(quality_runs.size());
        res.quality_aggregate = std::move(q);
      }
    } catch (const std::exception& e) {
      res.aggregation_error = e.what();
    }
  } else {
    res.aggregation_error = "no run completed";
  }
  res.metrics = metrics_report(res, dataset);
  res.seconds = seconds_since(t_start);
  return res;
}

json metrics_report(const ExperimentResult& res, const LoadedDataset& dataset) {
  json m;
  m["format"] = "bfvae-metrics";
  m["version"] = 1;
  m["experiment"] = res.config.name;
  m["variant"] = vae::variant_name(res.config.train.objective.variant);
  m["dataset"] = {{"fingerprint", res.dataset_fingerprint}, {"description", dataset.description}};
  m["latent_dim"] = res.config.train.latent_dim;
  m["runs"] = res.config.runs;
  m["aligned_runs"] = res.aligned_runs;

  json failures = json::array();
  json counts = json::array();
  json per_run_kl = json::array();
  json higgins_runs = json::array();
  json warnings = json::array();
  for (const auto& run : res.runs) {
    if (!run.ok()) failures.push_back({{"run", run.index}, {"stage", run.failed_stage}, {"error", run.error}});
    if (run.fvh) {
      counts.push_back(run.fvh->informative.size());
      per_run_kl.push_back(run.fvh->mean_kl);
    } else {
      counts.push_back(nullptr);
      per_run_kl.push_back(nullptr);
    }
    higgins_runs.push_back(run.higgins ? json(run.higgins->accuracy) : json(nullptr));
    if (run.trained)
      for (const auto& w : run.trained->warnings) warnings.push_back({{"run", run.index}, {"warning", w}});
  }
  m["failures"] = failures;
  m["warnings"] = warnings;
  m["informative_counts"] = counts;
  m["per_run_mean_kl"] = per_run_kl;
  if (!res.aggregation_error.empty()) m["aggregation_error"] = res.aggregation_error;

  json lsdi = json::object();
  json fdr = json::object();
  if (res.fvh_aggregate) {
    const auto& a = *res.fvh_aggregate;
    m["aggregated_mean_kl"] = a.mean_kl;
    m["aggregated_informative"] = a.informative;
    lsdi["fvh_lt"] = metrics::lsdi_to_json(metrics::lsdi(a));
    if (dataset.truth) fdr["fvh_lt"] = metrics::fdr_to_json(metrics::informative_fdr(a, *dataset.truth));
  }
  if (res.dbsr_aggregate) {
    const auto& a = res.dbsr_aggregate->magnitude;
    lsdi["dbsr_ls"] = metrics::lsdi_to_json(metrics::lsdi(a));
    if (dataset.truth) fdr["dbsr_ls"] = metrics::fdr_to_json(metrics::informative_fdr(a, *dataset.truth));
  }
  m["lsdi"] = lsdi;
  m["fdr"] = dataset.truth ? fdr : json(nullptr);

  std::vector<double> scores;
  for (const auto& run : res.runs)
    if (run.higgins) scores.push_back(run.higgins->accuracy);
  if (scores.empty()) {
    m["higgins"] = nullptr;
  } else {
    m["higgins"] = {{"mean", pairwise_sum(scores) / static_cast<double>(scores.size())},
                    {"min", *std::min_element(scores.begin(), scores.end())},
                    {"per_run", higgins_runs}};
  }
  if (res.quality_aggregate) {
    const auto& q = *res.quality_aggregate;
    std::vector<std::size_t> order(q.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q[a] > q[b]; });
    json ranked = json::array();
    for (auto j : order) ranked.push_back({{"feature", res.feature_names[j]}, {"index", j}, {"variance", q[j]}});
    m["quality_traversal"] = {{"variance", q}, {"ranking", ranked}};
  }
  return m;
}

}  // namespace bfvae::exp
