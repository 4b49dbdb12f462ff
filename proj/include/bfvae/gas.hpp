#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfvae/association.hpp"

namespace bfvae::gas {

/// Two-level clustering of per-dim mean KL.
struct InformativeSplit {
  std::vector<std::size_t> informative;  // ascending
  double low_centroid = 0.0;
  double high_centroid = 0.0;
};

/// Exact 1-D 2-means over the K values (scan over sorted split points). The
/// higher cluster is informative; values all within 1e-6 give an empty set.
InformativeSplit split_informative(std::span<const double> mean_kl);

enum class MatchKind { Identity, Correlation, Random };

struct MatchEntry {
  std::size_t from = 0;  // latent index in the run
  std::size_t to = 0;    // latent index in the reference run
  MatchKind kind = MatchKind::Identity;
  double correlation = 0.0;
};

/// maps[r][j] is the reference index of run r's latent dim j.
struct AlignmentMapping {
  std::size_t reference_run = 0;
  std::vector<std::vector<std::size_t>> maps;
  std::vector<std::vector<MatchEntry>> matches;
  std::vector<InformativeSplit> splits;
};

/// Pearson correlation of two equal-length vectors; 0 if either is constant.
double pearson(std::span<const double> a, std::span<const double> b);

/// Greedy cross-run alignment against the run with the most informative dims.
/// Informative rows are matched by descending row correlation while it exceeds
/// rho (ties to the lexicographically smallest pair); every remaining dim is
/// paired by a shuffle seeded from `seed` and the run index.
AlignmentMapping greedy_align(std::span<const AssociationMatrix> runs, double rho, std::uint64_t seed);

/// Moves row j (and its KL and informative flag) to row map[j].
AssociationMatrix apply_mapping(const AssociationMatrix& a, std::span<const std::size_t> map);

std::vector<std::size_t> invert_mapping(std::span<const std::size_t> map);

/// Element-wise mean of the aligned runs (values and mean KL); the informative
/// set is re-derived from the averaged KL.
AssociationMatrix aggregate_aligned(std::span<const AssociationMatrix> runs, const AlignmentMapping& mapping);

nlohmann::json mapping_to_json(const AlignmentMapping& m);
AlignmentMapping mapping_from_json(const nlohmann::json& j);

}  // namespace bfvae::gas
