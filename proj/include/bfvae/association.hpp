#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfvae/tensor.hpp"

namespace bfvae {

enum class AssociationKind { FvhLtVariance, DbsrMagnitude, DbsrSigned };

std::string association_kind_name(AssociationKind k);

/// Latent-by-feature association matrix (K×p) with per-dim mean KL and the
/// informative dims (ascending indices).
struct AssociationMatrix {
  Tensor2 values;
  AssociationKind kind = AssociationKind::FvhLtVariance;
  std::vector<double> mean_kl;
  std::vector<std::size_t> informative;

  std::size_t latent_dim() const { return values.rows(); }
  std::size_t feature_dim() const { return values.cols(); }
  bool is_informative(std::size_t k) const;
  /// Shape and field consistency; throws DimensionError.
  void validate() const;
};

nlohmann::json association_to_json(const AssociationMatrix& a);
AssociationMatrix association_from_json(const nlohmann::json& j);

}  // namespace bfvae
