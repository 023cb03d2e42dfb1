#include "cpt/objective.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "cpt/errors.hpp"

namespace cpt {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

// Soft routing of a batch: the annealing logit z = lambda * (g + ln(1 - p0))
// of every branch node and P(leaf | x) of every leaf, per sample.
struct SoftRouting {
  std::size_t batch = 0;
  std::size_t node_count = 0;
  std::vector<std::size_t> leaves;  // leaf node ids, preorder
  std::vector<std::size_t> slot;    // node id -> index into `leaves`
  std::vector<double> logits;       // batch x node_count (0 at leaves)
  std::vector<double> prob;         // batch x leaves.size()

  double p(std::size_t n, std::size_t l) const { return prob[n * leaves.size() + l]; }
};

SoftRouting route_soft(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                       double lambda) {
  if (data.cols != tree.input_size()) {
    throw DimensionError("dataset has " + std::to_string(data.cols) + " columns, tree expects " +
                         std::to_string(tree.input_size()));
  }
  SoftRouting s;
  s.batch = rows.size();
  s.node_count = tree.nodes.size();
  s.leaves = leaf_ids(tree);
  s.slot.assign(s.node_count, 0);
  for (std::size_t l = 0; l < s.leaves.size(); ++l) s.slot[s.leaves[l]] = l;
  s.logits.assign(s.batch * s.node_count, 0.0);
  s.prob.assign(s.batch * s.leaves.size(), 0.0);

  std::vector<double> reach(s.node_count);
  for (std::size_t n = 0; n < s.batch; ++n) {
    const auto x = data.row(rows[n]);
    reach[0] = 1.0;
    for (std::size_t id = 0; id < s.node_count; ++id) {
      const auto* b = std::get_if<BranchNode>(&tree.nodes[id]);
      if (!b) {
        s.prob[n * s.leaves.size() + s.slot[id]] = reach[id];
        continue;
      }
      const double g = committee_log_complement(*b, x);
      if (!std::isfinite(g)) {
        throw NumericError("node " + std::to_string(id) + ": non-finite committee value");
      }
      const double z = lambda * (g - softplus(b->logit_p0));
      s.logits[n * s.node_count + id] = z;
      const double q = logistic(z);
      reach[b->high] = reach[id] * q;
      reach[b->low] = reach[id] * logistic(-z);
    }
  }
  return s;
}

struct ClassStats {
  std::vector<double> mass;                  // per leaf
  std::vector<std::vector<double>> counts;   // per leaf, per class (soft)
};

ClassStats class_stats(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                       const SoftRouting& s) {
  const std::size_t C = tree.task.class_count;
  ClassStats st;
  st.mass.assign(s.leaves.size(), 0.0);
  st.counts.assign(s.leaves.size(), std::vector<double>(C, 0.0));
  for (std::size_t n = 0; n < s.batch; ++n) {
    const std::size_t y = data.classes[rows[n]];
    if (y >= C) throw DataError("label out of range at row " + std::to_string(rows[n]));
    for (std::size_t l = 0; l < s.leaves.size(); ++l) {
      st.mass[l] += s.p(n, l);
      st.counts[l][y] += s.p(n, l);
    }
  }
  return st;
}

std::vector<double> smoothed_distribution(const std::vector<double>& counts, double mass) {
  const double denom = mass + static_cast<double>(counts.size()) * kLeafSmoothing;
  std::vector<double> pi(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j) pi[j] = (counts[j] + kLeafSmoothing) / denom;
  return pi;
}

double entropy_of(const std::vector<double>& pi) {
  double h = 0.0;
  for (double p : pi) h -= p * std::log(p);
  return h;
}

void require_task(const TreeModel& tree, TaskKind kind) {
  if (tree.task.kind != kind) {
    throw StateError(kind == TaskKind::classification ? "objective requires a classification tree"
                                                      : "objective requires a regression tree");
  }
}

void require_nonempty(std::span<const std::size_t> rows) {
  if (rows.empty()) throw DataError("empty batch");
}

// Value of the data term and dValue/dP(leaf | x_n), batch x leaves.
struct DataTerm {
  double value = 0.0;
  std::vector<double> dprob;
};

DataTerm entropy_term(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                      const SoftRouting& s) {
  const std::size_t L = s.leaves.size();
  const std::size_t C = tree.task.class_count;
  const double N = static_cast<double>(s.batch);
  const ClassStats st = class_stats(tree, data, rows, s);

  DataTerm out;
  out.dprob.assign(s.batch * L, 0.0);
  // Per leaf: dT/dA_j and the explicit dT/dM, where T = -M sum_j pi_j ln pi_j.
  std::vector<std::vector<double>> d_count(L, std::vector<double>(C));
  std::vector<double> d_mass(L);
  for (std::size_t l = 0; l < L; ++l) {
    const double M = st.mass[l];
    const auto pi = smoothed_distribution(st.counts[l], M);
    const double h = entropy_of(pi);
    out.value += M * h;
    const double shrink = M / (M + static_cast<double>(C) * kLeafSmoothing);
    double tilt = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      d_count[l][j] = -shrink * (std::log(pi[j]) + 1.0);
      tilt += pi[j] * (std::log(pi[j]) + 1.0);
    }
    d_mass[l] = h + shrink * tilt;
  }
  out.value /= N;
  for (std::size_t n = 0; n < s.batch; ++n) {
    const std::size_t y = data.classes[rows[n]];
    for (std::size_t l = 0; l < L; ++l) out.dprob[n * L + l] = (d_count[l][y] + d_mass[l]) / N;
  }
  return out;
}

DataTerm variance_term(const Dataset& data, std::span<const std::size_t> rows, const SoftRouting& s) {
  const std::size_t L = s.leaves.size();
  std::vector<double> mass(L, 0.0), weighted(L, 0.0);
  for (std::size_t n = 0; n < s.batch; ++n) {
    const double y = data.targets[rows[n]];
    for (std::size_t l = 0; l < L; ++l) {
      mass[l] += s.p(n, l);
      weighted[l] += s.p(n, l) * y;
    }
  }
  std::vector<double> mu(L);
  for (std::size_t l = 0; l < L; ++l) mu[l] = weighted[l] / (mass[l] + kLeafSmoothing);

  DataTerm out;
  out.dprob.assign(s.batch * L, 0.0);
  for (std::size_t n = 0; n < s.batch; ++n) {
    const double y = data.targets[rows[n]];
    for (std::size_t l = 0; l < L; ++l) {
      const double r = y - mu[l];
      out.value += s.p(n, l) * r * r;
      // The smoothed mean is not the exact weighted minimizer, leaving an O(eps) term.
      out.dprob[n * L + l] = r * r - 2.0 * kLeafSmoothing * mu[l] * r / (mass[l] + kLeafSmoothing);
    }
  }
  return out;
}

double resolved_weight(const PriorConfig& prior) { return prior.reg_weight.value_or(1.0); }

}  // namespace

void check_prior(const PriorConfig& prior) {
  if (!(prior.gamma0 > 0.0) || !(prior.c0 > 0.0) || !(prior.a_beta > 0.0) || !(prior.b_beta > 0.0)) {
    throw std::invalid_argument("prior constants gamma0, c0, a_beta, b_beta must be positive");
  }
  if (prior.reg_weight && !(*prior.reg_weight >= 0.0)) {
    throw std::invalid_argument("reg_weight must be nonnegative");
  }
}

std::vector<std::size_t> all_rows(const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

std::vector<double> leaf_mass(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                              double lambda) {
  require_nonempty(rows);
  const SoftRouting s = route_soft(tree, data, rows, lambda);
  std::vector<double> mass(s.leaves.size(), 0.0);
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t l = 0; l < s.leaves.size(); ++l) mass[l] += s.p(n, l);
  }
  return mass;
}

std::vector<std::vector<double>> leaf_class_distribution(const TreeModel& tree, const Dataset& data,
                                                         std::span<const std::size_t> rows, double lambda) {
  require_task(tree, TaskKind::classification);
  require_nonempty(rows);
  const SoftRouting s = route_soft(tree, data, rows, lambda);
  const ClassStats st = class_stats(tree, data, rows, s);
  std::vector<std::vector<double>> out;
  out.reserve(s.leaves.size());
  for (std::size_t l = 0; l < s.leaves.size(); ++l) out.push_back(smoothed_distribution(st.counts[l], st.mass[l]));
  return out;
}

double conditional_entropy(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                           double lambda) {
  require_task(tree, TaskKind::classification);
  require_nonempty(rows);
  const SoftRouting s = route_soft(tree, data, rows, lambda);
  return entropy_term(tree, data, rows, s).value;
}

double regression_objective(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                            double lambda) {
  require_task(tree, TaskKind::regression);
  require_nonempty(rows);
  const SoftRouting s = route_soft(tree, data, rows, lambda);
  return variance_term(data, rows, s).value;
}

double prior_penalty(const TreeModel& tree, const PriorConfig& prior) {
  double total = 0.0;
  for (const Node& node : tree.nodes) {
    const auto* b = std::get_if<BranchNode>(&node);
    if (!b) continue;
    const double K = static_cast<double>(b->experts.size());
    double shrink = 0.0;
    double sparsity = 0.0;
    for (const auto& e : b->experts) {
      shrink += -(prior.gamma0 / K - 1.0) * e.log_r + prior.c0 * e.weight();
      for (double beta : e.beta) sparsity += std::log1p(beta * beta / (2.0 * prior.b_beta));
    }
    total += shrink + (prior.a_beta + 0.5) * sparsity;
  }
  return resolved_weight(prior) * total;
}

BatchObjective total_loss_and_gradient(const TreeModel& tree, const Dataset& data,
                                       std::span<const std::size_t> rows, double lambda,
                                       const PriorConfig& prior) {
  require_nonempty(rows);
  const SoftRouting s = route_soft(tree, data, rows, lambda);
  const DataTerm term = tree.task.is_classification() ? entropy_term(tree, data, rows, s)
                                                      : variance_term(data, rows, s);
  const std::size_t L = s.leaves.size();
  const std::size_t D = tree.input_size();

  BatchObjective out;
  out.value = term.value + prior_penalty(tree, prior);
  out.gradient.assign(parameter_count(tree), 0.0);

  // Offset of each branch node's parameter block.
  std::vector<std::size_t> offset(s.node_count, 0);
  {
    std::size_t k = 0;
    for (std::size_t id = 0; id < s.node_count; ++id) {
      if (const auto* b = std::get_if<BranchNode>(&tree.nodes[id])) {
        offset[id] = k;
        k += b->experts.size() * (D + 1) + 1;
      }
    }
  }

  std::vector<double> reach(s.node_count), down(s.node_count);
  for (std::size_t n = 0; n < s.batch; ++n) {
    const auto x = data.row(rows[n]);
    const double* z = &s.logits[n * s.node_count];
    reach[0] = 1.0;
    for (std::size_t id = 0; id < s.node_count; ++id) {
      if (const auto* b = std::get_if<BranchNode>(&tree.nodes[id])) {
        reach[b->high] = reach[id] * logistic(z[id]);
        reach[b->low] = reach[id] * logistic(-z[id]);
      }
    }
    // down[v] = sum over leaves below v of dData/dP(leaf) * P(leaf | reached v).
    for (std::size_t id = s.node_count; id-- > 0;) {
      if (const auto* b = std::get_if<BranchNode>(&tree.nodes[id])) {
        const double q = logistic(z[id]);
        down[id] = q * down[b->high] + (1.0 - q) * down[b->low];
      } else {
        down[id] = term.dprob[n * L + s.slot[id]];
      }
    }
    for (std::size_t id = 0; id < s.node_count; ++id) {
      const auto* b = std::get_if<BranchNode>(&tree.nodes[id]);
      if (!b) continue;
      const double d_gate = reach[id] * (down[b->high] - down[b->low]);
      const double d_logit = d_gate * logistic(z[id]) * logistic(-z[id]);
      if (d_logit == 0.0) continue;
      const double d_g = d_logit * lambda;
      double* grad = &out.gradient[offset[id]];
      for (const auto& e : b->experts) {
        const double r = e.weight();
        const double act = dot(e.beta, x);
        const double slope = d_g * r * logistic(act);
        for (std::size_t j = 0; j < D; ++j) grad[j] += slope * x[j];
        grad[D] += d_g * r * softplus(act);
        grad += D + 1;
      }
      *grad += -d_logit * lambda * b->p0();
    }
  }

  const double w = resolved_weight(prior);
  if (w != 0.0) {
    for (std::size_t id = 0; id < s.node_count; ++id) {
      const auto* b = std::get_if<BranchNode>(&tree.nodes[id]);
      if (!b) continue;
      const double K = static_cast<double>(b->experts.size());
      double* grad = &out.gradient[offset[id]];
      for (const auto& e : b->experts) {
        for (std::size_t j = 0; j < D; ++j) {
          const double beta = e.beta[j];
          grad[j] += w * (prior.a_beta + 0.5) * beta / (prior.b_beta + 0.5 * beta * beta);
        }
        grad[D] += w * (-(prior.gamma0 / K - 1.0) + prior.c0 * e.weight());
        grad += D + 1;
      }
    }
  }

  if (!std::isfinite(out.value)) throw NumericError("non-finite loss value");
  for (std::size_t id = 0; id < s.node_count; ++id) {
    const auto* b = std::get_if<BranchNode>(&tree.nodes[id]);
    if (!b) continue;
    const std::size_t len = b->experts.size() * (D + 1) + 1;
    for (std::size_t k = 0; k < len; ++k) {
      if (!std::isfinite(out.gradient[offset[id] + k])) {
        throw NumericError("node " + std::to_string(id) + ": non-finite gradient");
      }
    }
  }
  return out;
}

}  // namespace cpt
