#include "bfvae/association.hpp"

#include <algorithm>

#include "bfvae/error.hpp"

namespace bfvae {

std::string association_kind_name(AssociationKind k) {
  switch (k) {
    case AssociationKind::FvhLtVariance:
      return "fvh-lt-variance";
    case AssociationKind::DbsrMagnitude:
      return "dbsr-magnitude";
    case AssociationKind::DbsrSigned:
      return "dbsr-signed";
  }
  return "unknown";
}

bool AssociationMatrix::is_informative(std::size_t k) const {
  return std::binary_search(informative.begin(), informative.end(), k);
}

void AssociationMatrix::validate() const {
  if (mean_kl.size() != values.rows())
    throw DimensionError("association matrix: mean_kl length " + std::to_string(mean_kl.size()) + " but " +
                         std::to_string(values.rows()) + " latent rows");
  if (!std::is_sorted(informative.begin(), informative.end()) ||
      std::adjacent_find(informative.begin(), informative.end()) != informative.end())
    throw DimensionError("association matrix: informative set must be strictly ascending");
  if (!informative.empty() && informative.back() >= values.rows())
    throw DimensionError("association matrix: informative index out of range");
}

nlohmann::json association_to_json(const AssociationMatrix& a) {
  return {{"kind", association_kind_name(a.kind)},
          {"values", a.values.to_rows()},
          {"mean_kl", a.mean_kl},
          {"informative", a.informative}};
}

AssociationMatrix association_from_json(const nlohmann::json& j) {
  AssociationMatrix a;
  const auto kind = j.at("kind").get<std::string>();
  bool found = false;
  for (auto k : {AssociationKind::FvhLtVariance, AssociationKind::DbsrMagnitude, AssociationKind::DbsrSigned}) {
    if (association_kind_name(k) == kind) {
      a.kind = k;
      found = true;
    }
  }
  if (!found) throw IntegrityError("association matrix: unknown kind '" + kind + "'");
  a.values = Tensor2::from_rows(j.at("values").get<std::vector<std::vector<double>>>());
  a.mean_kl = j.at("mean_kl").get<std::vector<double>>();
  a.informative = j.at("informative").get<std::vector<std::size_t>>();
  a.validate();
  return a;
}

}  // namespace bfvae
