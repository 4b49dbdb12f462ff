#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfvae/association.hpp"
#include "bfvae/datagen.hpp"
#include "bfvae/dbsr.hpp"
#include "bfvae/fvh_lt.hpp"
#include "bfvae/gas.hpp"
#include "bfvae/metrics.hpp"
#include "bfvae/vae.hpp"

namespace bfvae::exp {

/// Either a synthetic preset (optionally resized) or a CSV file. A CSV that
/// comes with a generator manifest keeps the generator's split and ground truth.
struct DatasetSource {
  std::optional<data::Preset> preset;
  std::uint64_t data_seed = 0;
  std::optional<std::size_t> n;
  std::optional<std::size_t> n_train;
  std::filesystem::path csv;
  std::filesystem::path manifest;
  std::string label;  // CSV label column name, empty for none
  double split_fraction = 0.8;
  std::uint64_t split_seed = 0;

  void validate() const;
};

struct LoadedDataset {
  data::TabularDataset data;
  std::optional<data::FactorGroundTruth> truth;
  std::string description;
  /// FNV-1a over feature names, split and standardized values (hex).
  std::string fingerprint;
};

LoadedDataset load_dataset(const DatasetSource& source);
/// Generator config a preset source resolves to (n / n_train overrides applied).
data::FaConfig preset_config(const DatasetSource& source);

std::string fnv1a_hex(std::string_view bytes);

struct DbsrSettings {
  bool enabled = true;
  double lambda_d = 0.1;
  double lambda_b = 0.1;
  dbsr::SolverOptions solver;
};

/// Sweep of the conditioning label for conditional models. Missing endpoints
/// default to the training label's min and max (standardized units).
struct QualitySettings {
  bool enabled = false;
  std::optional<double> lo;
  std::optional<double> hi;
  std::size_t steps = 21;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSource dataset;
  vae::TrainConfig train;  // train.seed is ignored: run r uses master_seed + r
  fvh::TraversalSpec traversal;
  DbsrSettings dbsr;
  QualitySettings quality;
  double rho = 0.5;
  std::size_t runs = 10;
  std::uint64_t master_seed = 0;
  bool higgins = true;
  metrics::HigginsOptions higgins_options;
  std::filesystem::path output = "bundle";

  /// Every problem at once, one per line, in a single ConfigError.
  void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& c);
/// Starts from `base` and overwrites the keys present in `j`; unknown keys are errors.
ExperimentConfig config_from_json(const nlohmann::json& j, const ExperimentConfig& base = {});

std::vector<std::string> recipe_names();
/// Hyperparameter recipes for the tabular experiments, by name (e.g. "fa15-bfvae").
ExperimentConfig recipe(const std::string& name);

struct RunTiming {
  double train = 0.0;
  double fvh_lt = 0.0;
  double dbsr = 0.0;
  double quality = 0.0;
  double higgins = 0.0;
};

struct RunResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::optional<vae::TrainedVae> trained;
  std::optional<AssociationMatrix> fvh;
  std::optional<dbsr::DbsrRun> dbsr;
  std::optional<std::vector<double>> quality;
  std::optional<metrics::ScoreReport> higgins;
  std::string failed_stage;  // empty when every stage finished
  std::string error;
  RunTiming timing;

  bool ok() const { return failed_stage.empty(); }
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string dataset_fingerprint;
  std::vector<std::string> feature_names;
  std::vector<RunResult> runs;
  std::vector<std::size_t> aligned_runs;  // indices of the runs that entered aggregation
  std::optional<gas::AlignmentMapping> fvh_mapping;
  std::optional<AssociationMatrix> fvh_aggregate;
  std::optional<dbsr::DbsrAggregate> dbsr_aggregate;
  std::optional<std::vector<double>> quality_aggregate;
  nlohmann::json metrics;
  std::string aggregation_error;
  double seconds = 0.0;
};

using Progress = std::function<void(const std::string&)>;

/// Trains `runs` models in a pool of `jobs` workers, probes each run, aligns
/// and aggregates, then computes the metrics report. A failing stage ends its
/// run; the error is recorded and the remaining runs still aggregate.
ExperimentResult run_experiment(const ExperimentConfig& config, const LoadedDataset& dataset, std::size_t jobs = 1,
                                const Progress& progress = {});

/// Everything except timing, so reruns compare byte-identically.
nlohmann::json metrics_report(const ExperimentResult& result, const LoadedDataset& dataset);

}  // namespace bfvae::exp
