#include "cpt/tree.hpp"

#include <algorithm>
#include <string>

#include "cpt/errors.hpp"

namespace cpt {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

void check_input(const BranchNode& node, std::span<const double> x) {
  for (const auto& e : node.experts) {
    if (e.beta.size() != x.size()) {
      throw DimensionError("feature vector has " + std::to_string(x.size()) +
                           " entries, expert expects " + std::to_string(e.beta.size()));
    }
  }
}

// Copies `sub` into `out`, shifting child indices; returns the new root index.
std::size_t append_shifted(std::vector<Node>& out, const TreeModel& sub) {
  const std::size_t offset = out.size();
  for (const Node& n : sub.nodes) {
    Node copy = n;
    if (auto* b = std::get_if<BranchNode>(&copy)) {
      b->low += offset;
      b->high += offset;
    }
    out.push_back(std::move(copy));
  }
  return offset;
}

}  // namespace

TreeModel make_leaf_tree(Task task, std::size_t feature_dim) {
  TreeModel t;
  t.task = task;
  t.feature_dim = feature_dim;
  t.nodes.emplace_back(LeafNode{});
  return t;
}

TreeModel make_stump(Task task, std::size_t feature_dim, BranchNode root) {
  const TreeModel leaf = make_leaf_tree(task, feature_dim);
  return join_subtrees(std::move(root), leaf, leaf);
}

TreeModel join_subtrees(BranchNode branch, const TreeModel& low, const TreeModel& high) {
  if (!(low.task == high.task) || low.feature_dim != high.feature_dim) {
    throw StructureError("subtrees disagree on task or feature dimension");
  }
  TreeModel t;
  t.task = low.task;
  t.feature_dim = low.feature_dim;
  t.annealing_lambda = std::max(low.annealing_lambda, high.annealing_lambda);
  t.nodes.reserve(1 + low.nodes.size() + high.nodes.size());
  t.nodes.emplace_back(std::move(branch));
  const std::size_t lo = append_shifted(t.nodes, low);
  const std::size_t hi = append_shifted(t.nodes, high);
  auto& root = std::get<BranchNode>(t.nodes[0]);
  root.low = lo;
  root.high = hi;
  return t;
}

void validate(const TreeModel& tree) {
  if (tree.nodes.empty()) throw StructureError("tree has no nodes");
  if (tree.task.is_classification() && tree.task.class_count < 1) {
    throw StructureError("classification task needs at least one class");
  }
  std::vector<int> parents(tree.nodes.size(), 0);
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const auto* b = std::get_if<BranchNode>(&tree.nodes[id]);
    if (!b) {
      const auto& leaf = std::get<LeafNode>(tree.nodes[id]);
      if (leaf.finalized && tree.task.is_classification()) {
        if (leaf.class_distribution.size() != tree.task.class_count) {
          throw StructureError("leaf " + std::to_string(id) + ": distribution has wrong length");
        }
        double sum = 0.0;
        for (double p : leaf.class_distribution) {
          if (!(p >= 0.0)) throw StructureError("leaf " + std::to_string(id) + ": negative probability");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
          throw StructureError("leaf " + std::to_string(id) + ": distribution does not sum to 1");
        }
      }
      if (leaf.finalized && !std::isfinite(leaf.mean_value)) {
        throw StructureError("leaf " + std::to_string(id) + ": non-finite mean");
      }
      continue;
    }
    const std::string where = "node " + std::to_string(id) + ": ";
    if (b->low <= id || b->high <= id || b->low >= tree.nodes.size() ||
        b->high >= tree.nodes.size() || b->low == b->high) {
      throw StructureError(where + "invalid child reference");
    }
    ++parents[b->low];
    ++parents[b->high];
    if (b->experts.empty()) throw StructureError(where + "branch without experts");
    // Any finite logit maps to p0 strictly inside (0, 1), even where p0 rounds to 1.
    if (!std::isfinite(b->logit_p0)) throw StructureError(where + "p0 outside (0, 1)");
    for (const auto& e : b->experts) {
      if (e.beta.size() != tree.input_size()) throw StructureError(where + "expert dimension mismatch");
      const double r = e.weight();
      if (!std::isfinite(e.log_r) || !(r > 0.0) || !std::isfinite(r)) {
        throw StructureError(where + "expert weight r must be positive and finite");
      }
      for (double v : e.beta) {
        if (!std::isfinite(v)) throw StructureError(where + "non-finite expert coefficient");
      }
    }
  }
  if (parents[0] != 0) throw StructureError("root has a parent");
  for (std::size_t id = 1; id < parents.size(); ++id) {
    if (parents[id] != 1) throw StructureError("node " + std::to_string(id) + " is not reachable exactly once");
  }
}

std::vector<std::size_t> leaf_ids(const TreeModel& tree) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (tree.is_leaf(i)) ids.push_back(i);
  }
  return ids;
}

std::vector<std::size_t> branch_ids(const TreeModel& tree) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (!tree.is_leaf(i)) ids.push_back(i);
  }
  return ids;
}

std::size_t leaf_count(const TreeModel& tree) { return leaf_ids(tree).size(); }

std::size_t depth(const TreeModel& tree) {
  // Preorder: parents precede children, so one forward pass suffices.
  std::vector<std::size_t> level(tree.nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    if (const auto* b = std::get_if<BranchNode>(&tree.nodes[id])) {
      level[b->low] = level[b->high] = level[id] + 1;
      deepest = std::max(deepest, level[id] + 1);
    }
  }
  return deepest;
}

double committee_log_complement(const BranchNode& node, std::span<const double> x) {
  check_input(node, x);
  double g = 0.0;
  for (const auto& e : node.experts) g += e.weight() * softplus(dot(e.beta, x));
  return g;
}

double split_probability(const BranchNode& node, std::span<const double> x) {
  return -std::expm1(-committee_log_complement(node, x));
}

double annealed_probability(const BranchNode& node, std::span<const double> x, double lambda) {
  // ln(1 - p0) = -softplus(logit_p0)
  return logistic(lambda * (committee_log_complement(node, x) - softplus(node.logit_p0)));
}

std::vector<LeafProbability> leaf_arrival_probabilities(const TreeModel& tree,
                                                        std::span<const double> x, double lambda) {
  if (tree.nodes.empty()) throw StructureError("tree has no nodes");
  std::vector<double> reach(tree.nodes.size(), 0.0);
  reach[0] = 1.0;
  std::vector<LeafProbability> out;
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    if (const auto* b = std::get_if<BranchNode>(&tree.nodes[id])) {
      if (b->low <= id || b->high <= id || b->low >= tree.nodes.size() || b->high >= tree.nodes.size()) {
        throw StructureError("node " + std::to_string(id) + ": invalid child reference");
      }
      const double q = annealed_probability(*b, x, lambda);
      reach[b->high] = reach[id] * q;
      reach[b->low] = reach[id] * (1.0 - q);
    } else {
      out.push_back({id, reach[id]});
    }
  }
  return out;
}

std::size_t route_deterministic(const TreeModel& tree, std::span<const double> x) {
  std::size_t id = 0;
  while (const auto* b = std::get_if<BranchNode>(&tree.nodes.at(id))) {
    // f_lambda > 0.5  <=>  g(x) + ln(1 - p0) > 0
    id = committee_log_complement(*b, x) - softplus(b->logit_p0) > 0.0 ? b->high : b->low;
  }
  return id;
}

Prediction predict(const TreeModel& tree, std::span<const double> x) {
  const std::size_t id = route_deterministic(tree, x);
  const auto& leaf = tree.leaf(id);
  if (!leaf.finalized) throw StateError("leaf " + std::to_string(id) + " has not been finalized");
  Prediction p;
  if (tree.task.is_classification()) {
    p.scores = leaf.class_distribution;
    p.label = static_cast<std::size_t>(
        std::max_element(p.scores.begin(), p.scores.end()) - p.scores.begin());
  } else {
    p.value = leaf.mean_value;
  }
  return p;
}

std::size_t effective_expert_count(const BranchNode& node, double rel) {
  double max_r = 0.0;
  for (const auto& e : node.experts) max_r = std::max(max_r, e.weight());
  return static_cast<std::size_t>(std::count_if(node.experts.begin(), node.experts.end(),
                                                [&](const Expert& e) { return e.weight() > rel * max_r; }));
}

std::size_t parameter_count(const TreeModel& tree) {
  std::size_t n = 0;
  for (const Node& node : tree.nodes) {
    if (const auto* b = std::get_if<BranchNode>(&node)) n += b->experts.size() * (tree.input_size() + 1) + 1;
  }
  return n;
}

std::vector<double> gather_parameters(const TreeModel& tree) {
  std::vector<double> out;
  out.reserve(parameter_count(tree));
  for (const Node& node : tree.nodes) {
    const auto* b = std::get_if<BranchNode>(&node);
    if (!b) continue;
    for (const auto& e : b->experts) {
      out.insert(out.end(), e.beta.begin(), e.beta.end());
      out.push_back(e.log_r);
    }
    out.push_back(b->logit_p0);
  }
  return out;
}

void scatter_parameters(TreeModel& tree, std::span<const double> params) {
  if (params.size() != parameter_count(tree)) {
    throw DimensionError("parameter vector has " + std::to_string(params.size()) + " entries, tree has " +
                         std::to_string(parameter_count(tree)));
  }
  std::size_t k = 0;
  for (Node& node : tree.nodes) {
    auto* b = std::get_if<BranchNode>(&node);
    if (!b) continue;
    for (auto& e : b->experts) {
      for (double& v : e.beta) v = params[k++];
      e.log_r = params[k++];
    }
    b->logit_p0 = params[k++];
  }
}

}  // namespace cpt
