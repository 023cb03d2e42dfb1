#include "cpt/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "cpt/errors.hpp"

namespace cpt {

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::acc: return "ACC";
    case MetricKind::auc: return "AUC";
    case MetricKind::rmse: return "RMSE";
  }
  return "?";
}

MetricKind metric_from_string(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "acc") return MetricKind::acc;
  if (s == "auc") return MetricKind::auc;
  if (s == "rmse") return MetricKind::rmse;
  throw std::invalid_argument("unknown metric '" + name + "'");
}

MetricKind default_metric(const Task& task) {
  if (!task.is_classification()) return MetricKind::rmse;
  return task.class_count == 2 ? MetricKind::auc : MetricKind::acc;
}

TreeStats tree_stats(const TreeModel& tree) {
  TreeStats s;
  s.depth = depth(tree);
  s.leaf_count = leaf_count(tree);
  for (std::size_t id : branch_ids(tree)) s.effective_experts_per_node.push_back(effective_expert_count(tree.branch(id)));
  return s;
}

double auc(std::span<const double> scores, std::span<const std::size_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("AUC needs both classes present");
  const double np = static_cast<double>(positives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels) {
  if (predicted.size() != labels.size() || labels.empty()) throw std::invalid_argument("accuracy needs aligned, nonempty inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double rmse(std::span<const double> predicted, std::span<const double> targets) {
  if (predicted.size() != targets.size() || targets.empty()) throw std::invalid_argument("rmse needs aligned, nonempty inputs");
  double ss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) ss += (predicted[i] - targets[i]) * (predicted[i] - targets[i]);
  return std::sqrt(ss / static_cast<double>(targets.size()));
}

MetricReport evaluate(const TreeModel& tree, const Dataset& data, std::optional<MetricKind> kind) {
  if (data.empty()) throw DataError("cannot evaluate on an empty dataset");
  if (data.cols != tree.input_size()) throw DimensionError("dataset dimension does not match the model");
  MetricReport report;
  report.metric_kind = kind.value_or(default_metric(tree.task));
  report.tree_stats = tree_stats(tree);
  const bool regression = !tree.task.is_classification();
  if (regression != (report.metric_kind == MetricKind::rmse)) {
    throw std::invalid_argument(to_string(report.metric_kind) + " is not defined for this task");
  }
  if (regression) {
    std::vector<double> predicted(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) predicted[i] = predict(tree, data.row(i)).value;
    report.value = rmse(predicted, data.targets);
  } else if (report.metric_kind == MetricKind::auc) {
    if (tree.task.class_count != 2) throw std::invalid_argument("AUC requires a binary task");
    std::vector<double> scores(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) scores[i] = predict(tree, data.row(i)).scores[1];
    report.value = auc(scores, data.classes);
  } else {
    std::vector<std::size_t> predicted(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) predicted[i] = predict(tree, data.row(i)).label;
    report.value = accuracy(predicted, data.classes);
  }
  return report;
}

double validation_score(const TreeModel& tree, const Dataset& data) {
  const MetricReport r = evaluate(tree, data);
  return r.metric_kind == MetricKind::rmse ? -r.value : r.value;
}

}  // namespace cpt
