#pragma once

// Reference implementations used by the tests. They follow the textbook
// formulas directly (per-expert probabilities, explicit path products, dense
// probability matrices, cut-by-cut recounting) and share no code with the
// library beyond its data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "cpt/data.hpp"
#include "cpt/objective.hpp"
#include "cpt/tree.hpp"

namespace oracle {

using cpt::BranchNode;
using cpt::Dataset;
using cpt::TreeModel;

inline long double dot(const std::vector<double>& beta, std::span<const double> x) {
  long double s = 0.0L;
  for (std::size_t j = 0; j < beta.size(); ++j) s += static_cast<long double>(beta[j]) * x[j];
  return s;
}

// p_i = 1 - (1 + e^{beta'x})^{-r}
inline long double expert_yes(const cpt::Expert& e, std::span<const double> x) {
  const long double z = dot(e.beta, x);
  return 1.0L - std::pow(1.0L + std::exp(z), -std::exp(static_cast<long double>(e.log_r)));
}

// 1 - prod_i (1 - p_i)
inline long double committee(const BranchNode& node, std::span<const double> x) {
  long double no = 1.0L;
  for (const auto& e : node.experts) no *= 1.0L - expert_yes(e, x);
  return 1.0L - no;
}

// -ln prod_i (1 + e^{beta'x})^{-r}
inline long double log_complement(const BranchNode& node, std::span<const double> x) {
  long double prod = 1.0L;
  for (const auto& e : node.experts) prod *= std::pow(1.0L + std::exp(dot(e.beta, x)), -std::exp(static_cast<long double>(e.log_r)));
  return -std::log(prod);
}

inline long double annealed(const BranchNode& node, std::span<const double> x, double lambda) {
  const long double p0 = 1.0L / (1.0L + std::exp(-static_cast<long double>(node.logit_p0)));
  const long double ratio = (1.0L - committee(node, x)) / (1.0L - p0);
  return 1.0L / (1.0L + std::pow(ratio, static_cast<long double>(lambda)));
}

// Walks every root-to-leaf path and multiplies the edge factors.
inline void walk(const TreeModel& tree, std::size_t id, long double mass, std::span<const double> x, double lambda,
                 std::map<std::size_t, long double>& out) {
  if (tree.is_leaf(id)) {
    out[id] = mass;
    return;
  }
  const BranchNode& b = tree.branch(id);
  const long double q = annealed(b, x, lambda);
  walk(tree, b.high, mass * q, x, lambda, out);
  walk(tree, b.low, mass * (1.0L - q), x, lambda, out);
}

inline std::map<std::size_t, long double> leaf_probabilities(const TreeModel& tree, std::span<const double> x,
                                                             double lambda) {
  std::map<std::size_t, long double> out;
  walk(tree, 0, 1.0L, x, lambda, out);
  return out;
}

// Dense N x L matrix of arrival probabilities; columns follow leaf id order.
struct Dense {
  std::vector<std::size_t> leaves;
  std::vector<std::vector<long double>> p;  // p[n][l]
};

inline Dense dense(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows, double lambda) {
  Dense d;
  for (std::size_t n : rows) {
    const auto probs = leaf_probabilities(tree, data.row(n), lambda);
    if (d.leaves.empty()) {
      for (const auto& [leaf, _] : probs) d.leaves.push_back(leaf);
    }
    std::vector<long double> row;
    for (const auto& [_, v] : probs) row.push_back(v);
    d.p.push_back(std::move(row));
  }
  return d;
}

inline std::vector<long double> masses(const Dense& d) {
  std::vector<long double> m(d.leaves.size(), 0.0L);
  for (const auto& row : d.p) {
    for (std::size_t l = 0; l < row.size(); ++l) m[l] += row[l];
  }
  return m;
}

inline std::vector<std::vector<long double>> class_distributions(const Dense& d, const Dataset& data,
                                                                 std::span<const std::size_t> rows) {
  const long double eps = cpt::kLeafSmoothing;
  const std::size_t C = data.task.class_count;
  std::vector<std::vector<long double>> pi(d.leaves.size(), std::vector<long double>(C, 0.0L));
  std::vector<long double> m(d.leaves.size(), 0.0L);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t l = 0; l < d.leaves.size(); ++l) {
      pi[l][data.classes[rows[i]]] += d.p[i][l];
      m[l] += d.p[i][l];
    }
  }
  for (std::size_t l = 0; l < d.leaves.size(); ++l) {
    for (auto& v : pi[l]) v = (v + eps) / (m[l] + C * eps);
  }
  return pi;
}

inline long double entropy(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                           double lambda) {
  const Dense d = dense(tree, data, rows, lambda);
  const auto m = masses(d);
  const auto pi = class_distributions(d, data, rows);
  long double h = 0.0L;
  for (std::size_t l = 0; l < d.leaves.size(); ++l) {
    long double hl = 0.0L;
    for (long double v : pi[l]) hl -= v * std::log(v);
    h += m[l] / rows.size() * hl;
  }
  return h;
}

inline long double variance_objective(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                                      double lambda) {
  const Dense d = dense(tree, data, rows, lambda);
  long double total = 0.0L;
  for (std::size_t l = 0; l < d.leaves.size(); ++l) {
    long double s = 0.0L, m = 0.0L;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      s += d.p[i][l] * data.targets[rows[i]];
      m += d.p[i][l];
    }
    const long double mu = s / (m + cpt::kLeafSmoothing);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const long double r = data.targets[rows[i]] - mu;
      total += d.p[i][l] * r * r;
    }
  }
  return total;
}

inline long double penalty(const TreeModel& tree, const cpt::PriorConfig& prior) {
  long double total = 0.0L;
  for (const auto& node : tree.nodes) {
    if (!std::holds_alternative<BranchNode>(node)) continue;
    const auto& b = std::get<BranchNode>(node);
    const long double K = b.experts.size();
    for (const auto& e : b.experts) {
      const long double r = std::exp(static_cast<long double>(e.log_r));
      total += -(prior.gamma0 / K - 1.0L) * std::log(r) + prior.c0 * r;
      for (double beta : e.beta) total += (prior.a_beta + 0.5L) * std::log(1.0L + beta * beta / (2.0L * prior.b_beta));
    }
  }
  return total * prior.reg_weight.value_or(1.0);
}

inline double central_difference(const std::function<double(std::span<const double>)>& f, std::vector<double> params,
                                 std::size_t i, double h) {
  const double x = params[i];
  params[i] = x + h;
  const double up = f(params);
  params[i] = x - h;
  const double down = f(params);
  return (up - down) / (2.0 * h);
}

struct Cut {
  std::size_t n0 = 0;
  double score = 0.0;
};

// Every realizable cut, each side's impurity recomputed from scratch.
// Regression sums run upward from the smallest probability on the low side
// and downward from the largest on the high side.
inline std::vector<Cut> all_cuts(std::span<const double> p, const std::function<double(std::span<const std::size_t>, bool)>& side) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<Cut> cuts;
  const std::size_t N = p.size();
  for (std::size_t n0 = 1; n0 < N; ++n0) {
    if (p[order[n0 - 1]] == p[order[n0]]) continue;
    const std::span<const std::size_t> lo(order.data(), n0);
    const std::span<const std::size_t> hi(order.data() + n0, N - n0);
    const double score = static_cast<double>(n0) / static_cast<double>(N) * side(lo, false) +
                         static_cast<double>(N - n0) / static_cast<double>(N) * side(hi, true);
    cuts.push_back({n0, score});
  }
  return cuts;
}

inline double label_entropy(std::span<const std::size_t> idx, std::span<const std::size_t> labels, std::size_t C) {
  std::vector<std::size_t> counts(C, 0);
  for (std::size_t i : idx) ++counts[labels[i]];
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double q = static_cast<double>(c) / static_cast<double>(idx.size());
    h -= q * std::log(q);
  }
  return h;
}

inline double target_variance(std::span<const std::size_t> idx, std::span<const double> y, bool descending) {
  double s = 0.0, sq = 0.0;
  if (descending) {
    for (std::size_t k = idx.size(); k-- > 0;) {
      s += y[idx[k]];
      sq += y[idx[k]] * y[idx[k]];
    }
  } else {
    for (std::size_t i : idx) {
      s += y[i];
      sq += y[i] * y[i];
    }
  }
  const double n = static_cast<double>(idx.size());
  return std::max(0.0, (sq - s * s / n) / n);
}

// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
inline double pair_auc(std::span<const double> scores, std::span<const std::size_t> labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace oracle

namespace fixtures {

inline cpt::Expert random_expert(std::mt19937_64& rng, std::size_t d, double beta_sd = 1.0) {
  std::normal_distribution<double> normal(0.0, beta_sd);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  cpt::Expert e;
  for (std::size_t j = 0; j <= d; ++j) e.beta.push_back(normal(rng));
  e.log_r = u(rng);
  return e;
}

inline cpt::BranchNode random_branch(std::mt19937_64& rng, std::size_t d, std::size_t K, double beta_sd = 1.0) {
  cpt::BranchNode b;
  for (std::size_t k = 0; k < K; ++k) b.experts.push_back(random_expert(rng, d, beta_sd));
  b.logit_p0 = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
  return b;
}

// Random shape: the root always branches, deeper nodes branch with probability 0.7.
inline cpt::TreeModel random_tree(std::mt19937_64& rng, cpt::Task task, std::size_t d, std::size_t K,
                                  std::size_t max_depth, double beta_sd = 1.0, bool root = true) {
  if (max_depth == 0 || (!root && std::bernoulli_distribution(0.3)(rng))) return cpt::make_leaf_tree(task, d);
  cpt::BranchNode b = random_branch(rng, d, K, beta_sd);
  const cpt::TreeModel low = random_tree(rng, task, d, K, max_depth - 1, beta_sd, false);
  const cpt::TreeModel high = random_tree(rng, task, d, K, max_depth - 1, beta_sd, false);
  return cpt::join_subtrees(std::move(b), low, high);
}

inline std::vector<double> random_point(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> x;
  for (std::size_t j = 0; j < d; ++j) x.push_back(u(rng));
  x.push_back(1.0);
  return x;
}

inline cpt::Dataset random_dataset(std::mt19937_64& rng, cpt::Task task, std::size_t d, std::size_t n) {
  std::vector<double> raw, labels;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) raw.push_back(normal(rng));
    if (task.is_classification()) {
      labels.push_back(static_cast<double>(i % task.class_count));
    } else {
      labels.push_back(normal(rng));
    }
  }
  std::vector<double> classes;
  for (std::size_t c = 0; c < task.class_count; ++c) classes.push_back(static_cast<double>(c));
  return cpt::make_dataset(task, d, raw, labels, task.is_classification() ? classes : std::vector<double>{});
}

}  // namespace fixtures
