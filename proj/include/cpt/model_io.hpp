#pragma once

// JSON persistence for trained trees together with the input standardization
// and the configuration that produced them.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpt/data.hpp"
#include "cpt/topology.hpp"
#include "cpt/train.hpp"
#include "cpt/tree.hpp"

namespace cpt {

inline constexpr int kModelFormatVersion = 1;

struct ModelDocument {
  TreeModel tree;                    ///< all leaves finalized
  std::vector<double> class_values;  ///< original label of each class index
  Standardizer standardizer;         ///< maps raw features to model inputs
  GrowthConfig growth;
  TrainConfig refine;

  /// Raw feature rows (bias appended) to model inputs.
  Dataset prepare(Dataset raw) const { return standardizer.apply(std::move(raw)); }
};

/// Throws StateError for unfinalized leaves and StructureError for invalid trees.
std::string to_json(const ModelDocument& doc);
/// Throws DataError for malformed documents and StructureError when the
/// decoded tree violates a structural invariant.
ModelDocument from_json(const std::string& text);

void save_model(const ModelDocument& doc, const std::filesystem::path& path);
ModelDocument load_model(const std::filesystem::path& path);

}  // namespace cpt
