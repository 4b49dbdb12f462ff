#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfvae/rng.hpp"
#include "bfvae/tensor.hpp"

namespace bfvae::data {

/// Per-column affine transform fitted on training rows: x̃ = (x − mean) / std,
/// with std the population (divisor n) standard deviation.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;

  /// Fits on the given rows; throws ConfigError listing every zero-std column.
  static Standardization fit(const Tensor2& x, std::span<const std::size_t> rows,
                             std::span<const std::string> names = {});
  Tensor2 apply(const Tensor2& raw) const;
  Tensor2 invert(const Tensor2& standardized) const;
};

/// Block factor-to-feature incidence of a synthetic dataset.
struct FactorGroundTruth {
  std::size_t num_factors = 0;
  std::vector<std::vector<std::size_t>> blocks;  // factor -> feature indices
  Tensor2 loadings;                              // p × num_factors
  double noise_std = 0.0;

  std::size_t num_features() const { return loadings.rows(); }
  /// Factor owning feature j, if any.
  std::optional<std::size_t> factor_of(std::size_t feature) const;
};

struct TabularDataset {
  Tensor2 x;  // standardized, all rows
  std::optional<std::vector<double>> y;  // standardized label
  std::vector<std::string> feature_names;
  std::string label_name;
  Standardization standardization;
  double label_mean = 0.0;
  double label_std = 1.0;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;

  std::size_t num_features() const { return x.cols(); }
  Tensor2 train_x() const { return x.gather_rows(train_rows); }
  std::vector<double> train_y() const;
};

/// Label y = w₁·x̃_{f₁} + w₂·x̃_{f₂} + N(0, noise²) on standardized features.
struct SyntheticLabel {
  std::size_t feature_a = 0;
  std::size_t feature_b = 1;
  double weight_a = 1.0;
  double weight_b = 1.0;
  double noise_std = 0.1;
};

struct FaConfig {
  std::string name = "custom";
  std::size_t n = 0;
  std::size_t n_train = 0;
  std::size_t p = 0;
  std::vector<std::vector<std::size_t>> blocks;
  double loading_lo = 0.5;
  double loading_hi = 1.5;
  double noise_std = 0.1;
  bool random_sign = true;
  std::uint64_t seed = 0;
  std::optional<SyntheticLabel> label;

  void validate() const;
};

enum class Preset { FA15, FA24, FA100, WineLike };

std::optional<Preset> parse_preset(const std::string& name);
std::string preset_name(Preset p);
/// `blocks_of_sizes({4,4,4,3})` -> contiguous blocks starting at feature 0.
std::vector<std::vector<std::size_t>> contiguous_blocks(std::span<const std::size_t> sizes);
FaConfig preset(Preset p, std::uint64_t seed = 0);

/// x = Λf + ε with f ~ N(0, I), nonzero loadings uniform on the configured
/// range with random sign; standardized on the first n_train rows.
std::pair<TabularDataset, FactorGroundTruth> gen_fa(const FaConfig& config);

/// Draws fresh observations from a known factor model in the dataset's
/// standardized units, for metrics that need factor control.
struct FactorSampler {
  FactorGroundTruth truth;
  Standardization standardization;

  /// factors: m × num_factors; returns m × p standardized observations.
  Tensor2 sample(const Tensor2& factors, Rng& rng) const;
};

/// Reads a header + numeric rows CSV. Rows are split by a seeded shuffle;
/// statistics come from the training rows only.
TabularDataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> label_column,
                        double split_fraction, std::uint64_t seed);

/// Builds a standardized dataset from a raw table; statistics come from
/// `train_rows`, every other row is a test row.
TabularDataset make_dataset(std::span<const std::string> header, const Tensor2& table,
                            std::optional<std::size_t> label_column, std::vector<std::size_t> train_rows);

std::pair<std::vector<std::string>, Tensor2> read_csv_file(const std::filesystem::path& path);

/// Parses CSV text (exposed for tests).
std::pair<std::vector<std::string>, Tensor2> parse_csv(const std::string& text);

void write_csv(const std::filesystem::path& path, std::span<const std::string> header, const Tensor2& values);
std::string format_double(double v);

/// Raw (original-unit) table with an optional trailing label column.
Tensor2 raw_table(const TabularDataset& ds, bool with_label);

nlohmann::json manifest_json(const FaConfig& config, const TabularDataset& ds, const FactorGroundTruth& truth);
FactorGroundTruth truth_from_json(const nlohmann::json& j);
nlohmann::json truth_to_json(const FactorGroundTruth& t);
nlohmann::json standardization_to_json(const Standardization& s);
Standardization standardization_from_json(const nlohmann::json& j);

}  // namespace bfvae::data
