#pragma once

// Greedy structure learning: fit a stump at a node, choose the hard threshold
// on its committee probability that minimizes child impurity, split the data
// and recurse on each side.

#include <span>

#include "cpt/data.hpp"
#include "cpt/objective.hpp"
#include "cpt/train.hpp"
#include "cpt/tree.hpp"

namespace cpt {

struct GrowthConfig {
  std::size_t max_depth = 2;
  std::size_t min_samples = 16;  ///< nodes with fewer training points become leaves
  /// Smallest accepted impurity decrease, weighted by the node's share of the
  /// training set and expressed as a fraction of the root impurity.
  double min_relative_gain = 0.01;
  TrainConfig stump_train;
};

void check_growth(const GrowthConfig& config);

/// Growth settings for a pipeline refined with `refine`: each stump is trained
/// with the same settings for a quarter of the epochs and no early stopping.
GrowthConfig growth_for(const TrainConfig& refine, std::size_t max_depth);

struct ThresholdChoice {
  double q_thr = 0.5;
  std::size_t split_index = 0;  ///< n0: number of points on the low side
  double score = 0.0;           ///< weighted impurity of the two sides
};

/// Exhaustive search over cut positions of the sorted probabilities, using
/// weighted entropy of the class labels. Cuts between equal probabilities are
/// not realizable and are skipped.
ThresholdChoice select_threshold(std::span<const double> probabilities, std::span<const std::size_t> classes,
                                 std::size_t class_count);
/// Same search with within-side variance (sum of squared deviations / N).
ThresholdChoice select_threshold(std::span<const double> probabilities, std::span<const double> targets);

/// Impurity of a whole node: label entropy, or population variance.
double node_impurity(const Dataset& data);

/// Greedy topology; the returned tree has unfinalized leaves and each branch's
/// p0 set to its chosen threshold.
TreeModel grow_tree(const Dataset& train, const Dataset& valid, const GrowthConfig& config, const PriorConfig& prior);

/// The full training pipeline: greedy growth, joint refinement of every node's
/// parameters with `refine`, then leaf finalization on the training set.
FitResult fit_tree(const Dataset& train, const Dataset& valid, const GrowthConfig& growth, const TrainConfig& refine);

}  // namespace cpt
