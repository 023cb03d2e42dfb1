#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpt/data.hpp"
#include "cpt/tree.hpp"

namespace cpt {

enum class MetricKind { acc, auc, rmse };

std::string to_string(MetricKind kind);
MetricKind metric_from_string(const std::string& name);

/// AUC for binary problems, ACC for multi-class, RMSE for regression.
MetricKind default_metric(const Task& task);

struct TreeStats {
  std::size_t depth = 0;
  std::size_t leaf_count = 0;
  /// Effective experts (r_i > 0.01 max r) per branch node, preorder.
  std::vector<std::size_t> effective_experts_per_node;
};

struct MetricReport {
  MetricKind metric_kind = MetricKind::acc;
  double value = 0.0;
  TreeStats tree_stats;
};

TreeStats tree_stats(const TreeModel& tree);

/// Mann-Whitney AUC with average ranks for ties; throws
/// UndefinedMetricError unless both labels are present.
double auc(std::span<const double> scores, std::span<const std::size_t> labels);
double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels);
double rmse(std::span<const double> predicted, std::span<const double> targets);

MetricReport evaluate(const TreeModel& tree, const Dataset& data, std::optional<MetricKind> kind = std::nullopt);

/// Larger-is-better score used for model selection: ACC, AUC or -RMSE.
double validation_score(const TreeModel& tree, const Dataset& data);

}  // namespace cpt
