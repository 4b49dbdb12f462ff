// bfvae command-line driver: generate, run, report, compare.

#include <fstream>
#include <functional>
#include <memory>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bfvae/bundle.hpp"
#include "bfvae/datagen.hpp"
#include "bfvae/error.hpp"
#include "bfvae/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bfvae;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct GenerateArgs {
  std::string preset;
  std::uint64_t seed = 0;
  std::optional<std::size_t> n;
  std::optional<std::size_t> n_train;
  std::string out = ".";
};

int cmd_generate(const GenerateArgs& a) {
  exp::DatasetSource src;
  src.preset = data::parse_preset(a.preset);
  if (!src.preset) {
    std::cerr << "generate: unknown preset '" << a.preset << "' (fa15, fa24, fa100, winelike)\n";
    return kUsage;
  }
  src.data_seed = a.seed;
  src.n = a.n;
  src.n_train = a.n_train;
  const auto cfg = exp::preset_config(src);
  const auto [ds, truth] = data::gen_fa(cfg);
  std::vector<std::string> header = ds.feature_names;
  if (ds.y) header.push_back(ds.label_name);
  const fs::path out(a.out);
  fs::create_directories(out);
  const auto stem = cfg.name + "_seed" + std::to_string(cfg.seed);
  const fs::path csv = out / (stem + ".csv");
  const fs::path tmp = out / (stem + ".csv.tmp");
  data::write_csv(tmp, header, data::raw_table(ds, ds.y.has_value()));
  fs::rename(tmp, csv);
  bundle::write_file_atomic(out / (stem + ".manifest.json"), data::manifest_json(cfg, ds, truth).dump(1) + "\n");
  std::cout << csv.string() << "\n" << (out / (stem + ".manifest.json")).string() << "\n";
  return kOk;
}

// Flags that override config fields; unset flags leave the file/recipe value.
struct RunArgs {
  std::string config_file;
  std::string recipe;
  bool list_recipes = false;
  bool print_config = false;
  bool quiet = false;
  std::size_t jobs = 1;
  json patch = json::object();
  std::vector<std::function<void()>> apply;  // copy parsed flag values into `patch`
};

json& patch_at(json& root, const std::vector<std::string>& path) {
  json* cur = &root;
  for (const auto& k : path) cur = &(*cur)[k];
  return *cur;
}

template <class T>
void bind(CLI::App* app, RunArgs& args, const std::string& flag, std::vector<std::string> path, const std::string& help) {
  auto store = std::make_shared<T>();
  auto* opt = app->add_option(flag, *store, help);
  args.apply.emplace_back([store, opt, &args, path] {
    if (opt->count() > 0) patch_at(args.patch, path) = *store;
  });
}

void bind_flag(CLI::App* app, RunArgs& args, const std::string& flag, std::vector<std::string> path, bool value,
               const std::string& help) {
  app->add_flag_callback(
      flag,
      [&args, path, value] { patch_at(args.patch, path) = value; },
      help);
}

void add_run_options(CLI::App* run, RunArgs& a) {
  run->add_option("--config", a.config_file, "JSON experiment config");
  run->add_option("--recipe", a.recipe, "start from a named recipe (see --list-recipes)");
  run->add_flag("--list-recipes", a.list_recipes, "print recipe names and exit");
  run->add_flag("--print-config", a.print_config, "print the resolved config and exit");
  run->add_option("--jobs,-j", a.jobs, "parallel training runs")->check(CLI::PositiveNumber);
  run->add_flag("--quiet,-q", a.quiet, "no progress output");

  bind<std::string>(run, a, "--name", {"name"}, "experiment name");
  bind<std::string>(run, a, "--out,-o", {"output"}, "bundle directory");
  bind<std::string>(run, a, "--preset", {"dataset", "preset"}, "synthetic preset: fa15, fa24, fa100, winelike");
  bind<std::uint64_t>(run, a, "--data-seed", {"dataset", "data_seed"}, "generator seed for presets");
  bind<std::size_t>(run, a, "--n", {"dataset", "n"}, "preset row count override");
  bind<std::size_t>(run, a, "--n-train", {"dataset", "n_train"}, "preset training row override");
  bind<std::string>(run, a, "--csv", {"dataset", "csv"}, "CSV data file");
  bind<std::string>(run, a, "--manifest", {"dataset", "manifest"}, "manifest written by `generate`");
  bind<std::string>(run, a, "--label", {"dataset", "label"}, "CSV label column name");
  bind<double>(run, a, "--split", {"dataset", "split_fraction"}, "training fraction for plain CSV input");
  bind<std::uint64_t>(run, a, "--split-seed", {"dataset", "split_seed"}, "shuffle seed for the CSV split");

  bind<std::string>(run, a, "--variant", {"objective", "variant"},
                    "bfvae, beta-vae, factor-vae, vanilla-vae, dip-vae-i, dip-vae-ii");
  bind<double>(run, a, "--beta", {"objective", "beta"}, "KL weight");
  bind<double>(run, a, "--gamma", {"objective", "gamma"}, "total-correlation weight");
  bind<double>(run, a, "--capacity", {"objective", "capacity"}, "KL capacity C");
  bind<double>(run, a, "--lambda-od", {"objective", "lambda_od"}, "DIP off-diagonal weight");
  bind<double>(run, a, "--lambda-diag", {"objective", "lambda_d"}, "DIP diagonal weight");
  bind<std::string>(run, a, "--reduction", {"objective", "reduction"}, "reconstruction reduction: sum or mean");

  bind<std::size_t>(run, a, "--latent-dim,-k", {"training", "latent_dim"}, "latent dimensions K");
  bind<std::size_t>(run, a, "--epochs", {"training", "epochs"}, "training epochs");
  bind<std::size_t>(run, a, "--batch-size", {"training", "batch_size"}, "mini-batch size");
  bind<double>(run, a, "--lr", {"training", "lr"}, "learning rate");
  bind<double>(run, a, "--disc-lr", {"training", "disc_lr"}, "discriminator learning rate (0: same as --lr)");
  bind<std::string>(run, a, "--optimizer", {"training", "optimizer"}, "adam or sgd");
  bind<double>(run, a, "--capacity-ramp", {"training", "capacity_ramp_fraction"}, "fraction of epochs to ramp C");
  bind_flag(run, a, "--conditional", {"training", "conditional"}, true, "condition on the label column");

  bind<double>(run, a, "--dropout", {"architecture", "dropout"}, "dropout rate");
  bind<std::size_t>(run, a, "--disc-width", {"architecture", "disc_width"}, "discriminator layer width");
  bind<std::size_t>(run, a, "--disc-layers", {"architecture", "disc_hidden_layers"}, "discriminator hidden layers");

  bind<std::string>(run, a, "--traversal", {"traversal", "strategy"}, "fixed, posterior-scaled, posterior-centered");
  bind<double>(run, a, "--traversal-param", {"traversal", "param"}, "range half-width or sigma multiple");
  bind<std::size_t>(run, a, "--steps", {"traversal", "steps"}, "grid points per traversal");

  bind_flag(run, a, "--no-dbsr", {"dbsr", "enabled"}, false, "skip DBSR-LS");
  bind<double>(run, a, "--lambda-d", {"dbsr", "lambda_d"}, "DBSR-LS sparse penalty");
  bind<double>(run, a, "--lambda-b", {"dbsr", "lambda_b"}, "DBSR-LS block penalty");
  bind<std::size_t>(run, a, "--dbsr-iters", {"dbsr", "max_iters"}, "DBSR-LS iteration cap");

  bind_flag(run, a, "--quality", {"quality", "enabled"}, true, "sweep the conditioning label");
  bind<double>(run, a, "--quality-lo", {"quality", "lo"}, "label sweep start");
  bind<double>(run, a, "--quality-hi", {"quality", "hi"}, "label sweep end");

  bind<double>(run, a, "--rho", {"rho"}, "alignment correlation threshold");
  bind<std::size_t>(run, a, "--runs,-r", {"runs"}, "independent runs R");
  bind<std::uint64_t>(run, a, "--seed", {"master_seed"}, "master seed (run r uses seed + r)");
  bind_flag(run, a, "--no-higgins", {"higgins", "enabled"}, false, "skip the disentanglement score");
  bind<std::size_t>(run, a, "--higgins-votes", {"higgins", "votes"}, "score votes");
  bind<std::size_t>(run, a, "--higgins-train", {"higgins", "train_votes"}, "score training votes");
}

exp::ExperimentConfig resolve_config(const RunArgs& a) {
  exp::ExperimentConfig c;
  if (!a.recipe.empty()) c = exp::recipe(a.recipe);
  if (!a.config_file.empty()) {
    std::ifstream f(a.config_file);
    if (!f) throw ConfigError("cannot open config " + a.config_file);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw ConfigError(a.config_file + ": " + e.what());
    }
    c = exp::config_from_json(j, c);
  }
  return exp::config_from_json(a.patch, c);
}

int cmd_run(RunArgs& a) {
  for (auto& f : a.apply) f();
  if (a.patch.contains("dataset")) {
    // A CSV on the command line replaces the recipe's preset.
    auto& ds = a.patch["dataset"];
    if ((ds.contains("csv") && !ds.contains("preset")) || ds.value("preset", json()) == "") ds["preset"] = nullptr;
  }
  if (a.list_recipes) {
    for (const auto& n : exp::recipe_names()) std::cout << n << "\n";
    return kOk;
  }
  const auto config = resolve_config(a);
  config.validate();
  if (a.print_config) {
    std::cout << exp::config_to_json(config).dump(1) << "\n";
    return kOk;
  }
  const auto dataset = exp::load_dataset(config.dataset);
  exp::Progress progress;
  if (!a.quiet) progress = [](const std::string& s) { std::cerr << s << std::endl; };
  if (!a.quiet)
    std::cerr << config.name << ": " << config.runs << " run(s) on " << dataset.description << ", " << a.jobs
              << " job(s)\n";
  const auto result = exp::run_experiment(config, dataset, a.jobs, progress);
  bundle::write_bundle(config.output, result, dataset);
  const auto b = bundle::read_bundle(config.output);
  const bundle::Bundle one[] = {b};
  std::cout << bundle::summary_table(one);
  std::cout << "bundle: " << config.output.string() << "\n";
  std::size_t failed = 0;
  for (const auto& r : result.runs) failed += r.ok() ? 0 : 1;
  if (failed > 0 || !result.aggregation_error.empty()) {
    std::cerr << failed << " run(s) failed; see " << (config.output / "metrics.json").string() << "\n";
    return kRuntime;
  }
  return kOk;
}

int cmd_report(const std::string& dir, const std::string& format, std::string out) {
  const auto fmt = bundle::parse_format(format);
  if (!fmt) {
    std::cerr << "report: unknown format '" << format << "' (csv, svg, json, all)\n";
    return kUsage;
  }
  const auto b = bundle::read_bundle(dir);
  if (out.empty()) out = (fs::path(dir) / "report").string();
  for (const auto& p : bundle::render_report(b, *fmt, out)) std::cout << p.string() << "\n";
  return kOk;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<bundle::Bundle> bs;
  for (const auto& d : dirs) bs.push_back(bundle::read_bundle(d));
  const auto table = bundle::compare(bs);
  if (!out.empty()) bundle::write_file_atomic(out, table);
  std::cout << table;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled VAEs for tabular data: training, latent probing, alignment and metrics"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a synthetic dataset CSV and its manifest");
  g->add_option("--preset", gen.preset, "fa15, fa24, fa100, winelike")->required();
  g->add_option("--seed", gen.seed, "generator seed");
  g->add_option("--n", gen.n, "row count override");
  g->add_option("--n-train", gen.n_train, "training row override");
  g->add_option("--out,-o", gen.out, "output directory");

  RunArgs run;
  auto* r = app.add_subcommand("run", "train R models, probe, align, aggregate and write a bundle");
  add_run_options(r, run);

  std::string rep_dir, rep_format = "all", rep_out;
  auto* rep = app.add_subcommand("report", "render heatmaps, CSVs, metrics and a summary from a bundle");
  rep->add_option("bundle", rep_dir, "bundle directory")->required();
  rep->add_option("--format,-f", rep_format, "csv, svg, json or all");
  rep->add_option("--out,-o", rep_out, "output directory (default: <bundle>/report)");

  std::vector<std::string> cmp_dirs;
  std::string cmp_out;
  auto* cmp = app.add_subcommand("compare", "side-by-side metrics of bundles on the same dataset");
  cmp->add_option("bundles", cmp_dirs, "bundle directories")->required();
  cmp->add_option("--out,-o", cmp_out, "also write the table to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*r) return cmd_run(run);
    if (*rep) return cmd_report(rep_dir, rep_format, rep_out);
    if (*cmp) return cmd_compare(cmp_dirs, cmp_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
