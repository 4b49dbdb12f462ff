#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfvae/association.hpp"
#include "bfvae/experiment.hpp"

namespace bfvae::bundle {

/// Writes `content` next to `path` and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Directory layout:
///   bundle.json                 index with an FNV-1a hash per file
///   config.json dataset.json metrics.json timing.json
///   runs/run_NNN/{status,checkpoint,fvh_lt,dbsr,posterior,quality}.json
///   alignment/{fvh_lt,dbsr_ls}.json
///   aggregate/{fvh_lt,dbsr_magnitude,dbsr_signed,quality}.json
/// The tree is assembled in a sibling directory and renamed over `dir`.
void write_bundle(const std::filesystem::path& dir, const exp::ExperimentResult& result,
                  const exp::LoadedDataset& dataset);

struct Bundle {
  std::filesystem::path dir;
  nlohmann::json config;
  nlohmann::json dataset;
  nlohmann::json metrics;
  std::vector<std::string> feature_names;
  std::optional<AssociationMatrix> fvh_lt;
  std::optional<AssociationMatrix> dbsr_magnitude;
  std::optional<AssociationMatrix> dbsr_signed;

  std::string label() const;
};

/// Verifies every indexed file against its hash; throws IntegrityError.
Bundle read_bundle(const std::filesystem::path& dir);

/// Raw values, one row per latent dim: latent,kind,<features...>,mean_kl,informative.
std::string association_csv(const AssociationMatrix& a, std::span<const std::string> feature_names);

/// Grayscale heatmap of |A| scaled by its maximum (darkest = max, zero = white),
/// rows ordered by mean KL descending.
std::string heatmap_svg(const AssociationMatrix& a, std::span<const std::string> feature_names,
                        const std::string& title);

/// Plain-text table, one column per bundle: LSDI under both probes, Higgins,
/// FDR/recall and informative-dim counts.
std::string summary_table(std::span<const Bundle> bundles);

enum class ReportFormat { Csv, Svg, Json, All };
std::optional<ReportFormat> parse_format(const std::string& name);

/// Writes the requested artifacts plus summary.txt into `out_dir`; returns the paths written.
std::vector<std::filesystem::path> render_report(const Bundle& b, ReportFormat format,
                                                 const std::filesystem::path& out_dir);

/// Side-by-side table; throws ConfigError when datasets or K differ.
std::string compare(std::span<const Bundle> bundles);

}  // namespace bfvae::bundle
