#pragma once

// Convex polytope tree: binary tree whose branch nodes split with a noisy-OR
// committee of linear experts. A node sends x to its "high" child (d = 1)
// when the committee probability exceeds the node threshold p0; the region
// kept on the "low" side, {x : f(x) <= p0}, is a convex polytope.

#include <cmath>
#include <cstddef>
#include <span>
#include <variant>
#include <vector>

namespace cpt {

// ln(1 + e^z), piecewise so that neither branch overflows.
inline double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// Inverse of softplus for y > 0: ln(e^y - 1).
inline double softplus_inverse(double y) {
  if (y > 30.0) return y + std::log1p(-std::exp(-y));
  return std::log(std::expm1(y));
}

/// One polytope facet: a hyperplane beta (bias last) with importance r = exp(log_r).
struct Expert {
  std::vector<double> beta;
  double log_r = 0.0;

  double weight() const { return std::exp(log_r); }
};

struct BranchNode {
  std::vector<Expert> experts;
  /// p0 = logistic(logit_p0); f_lambda crosses 0.5 exactly where f = p0.
  double logit_p0 = 0.0;
  std::size_t low = 0;   ///< child for d = 0 (f_lambda <= 0.5)
  std::size_t high = 0;  ///< child for d = 1 (f_lambda > 0.5)

  double p0() const { return logistic(logit_p0); }
};

struct LeafNode {
  std::vector<double> class_distribution;  ///< classification only
  double mean_value = 0.0;                 ///< regression only
  std::size_t sample_count = 0;
  bool finalized = false;
};

using Node = std::variant<BranchNode, LeafNode>;

enum class TaskKind { classification, regression };

struct Task {
  TaskKind kind = TaskKind::classification;
  std::size_t class_count = 2;  ///< meaningful for classification only

  static Task classification(std::size_t classes) { return {TaskKind::classification, classes}; }
  static Task regression() { return {TaskKind::regression, 0}; }
  bool is_classification() const { return kind == TaskKind::classification; }
  bool operator==(const Task&) const = default;
};

/// Nodes are stored in preorder with the root at index 0; a branch's children
/// always have larger indices than the branch itself.
struct TreeModel {
  Task task;
  std::size_t feature_dim = 0;  ///< d; every feature vector has d + 1 entries
  double annealing_lambda = 1.0;
  std::vector<Node> nodes;

  std::size_t input_size() const { return feature_dim + 1; }
  bool is_leaf(std::size_t id) const { return std::holds_alternative<LeafNode>(nodes.at(id)); }
  const BranchNode& branch(std::size_t id) const { return std::get<BranchNode>(nodes.at(id)); }
  BranchNode& branch(std::size_t id) { return std::get<BranchNode>(nodes.at(id)); }
  const LeafNode& leaf(std::size_t id) const { return std::get<LeafNode>(nodes.at(id)); }
  LeafNode& leaf(std::size_t id) { return std::get<LeafNode>(nodes.at(id)); }
};

/// A tree consisting of a single unfinalized leaf.
TreeModel make_leaf_tree(Task task, std::size_t feature_dim);

/// Root branch with two unfinalized leaves.
TreeModel make_stump(Task task, std::size_t feature_dim, BranchNode root);

/// Builds `branch` over two subtrees; the result is in preorder.
TreeModel join_subtrees(BranchNode branch, const TreeModel& low, const TreeModel& high);

/// Throws StructureError naming the first violated invariant.
void validate(const TreeModel& tree);

std::vector<std::size_t> leaf_ids(const TreeModel& tree);
std::vector<std::size_t> branch_ids(const TreeModel& tree);
std::size_t leaf_count(const TreeModel& tree);
/// Number of branch nodes on the longest root-to-leaf path.
std::size_t depth(const TreeModel& tree);

/// g(x) = sum_i r_i ln(1 + exp(beta_i'x)) = -ln(1 - f(x)); convex in x.
double committee_log_complement(const BranchNode& node, std::span<const double> x);
/// Noisy-OR committee probability f(x) = 1 - exp(-g(x)).
double split_probability(const BranchNode& node, std::span<const double> x);
/// f_lambda(x) = 1 / (1 + ((1 - f) / (1 - p0))^lambda), evaluated as
/// logistic(lambda * (g(x) + ln(1 - p0))).
double annealed_probability(const BranchNode& node, std::span<const double> x, double lambda);

struct LeafProbability {
  std::size_t leaf = 0;
  double probability = 0.0;
};

/// P(leaf | x) for every leaf, in preorder.
std::vector<LeafProbability> leaf_arrival_probabilities(const TreeModel& tree,
                                                        std::span<const double> x, double lambda);

/// Hard routing: high child iff f_lambda(x) > 0.5, which is lambda-independent.
std::size_t route_deterministic(const TreeModel& tree, std::span<const double> x);

struct Prediction {
  std::vector<double> scores;  ///< class distribution (classification)
  std::size_t label = 0;       ///< argmax class (classification)
  double value = 0.0;          ///< leaf mean (regression)
};

Prediction predict(const TreeModel& tree, std::span<const double> x);

/// Experts with r_i > rel * max_i r_i.
std::size_t effective_expert_count(const BranchNode& node, double rel = 0.01);

// Flat parameter layout: for each branch node in preorder, for each expert
// beta[0..d] then log_r; then the node's logit_p0.
std::size_t parameter_count(const TreeModel& tree);
std::vector<double> gather_parameters(const TreeModel& tree);
void scatter_parameters(TreeModel& tree, std::span<const double> params);

}  // namespace cpt
