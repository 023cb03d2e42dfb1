#include "cpt/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cpt/errors.hpp"

namespace cpt {

namespace {

double entropy_from_counts(std::span<const std::size_t> counts, std::size_t n) {
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

double variance_from_sums(double sum, double sum_sq, std::size_t n) {
  const double m = static_cast<double>(n);
  return std::max(0.0, (sum_sq - sum * sum / m) / m);
}

std::vector<std::size_t> sorted_order(std::span<const double> p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  return order;
}

// Picks the best realizable cut given side impurities for every n0.
template <class SideImpurity>
ThresholdChoice best_cut(std::span<const double> p, const std::vector<std::size_t>& order, SideImpurity&& impurity) {
  const std::size_t N = p.size();
  bool found = false;
  ThresholdChoice best;
  std::size_t best_balance = 0;
  for (std::size_t n0 = 1; n0 < N; ++n0) {
    const double lo = p[order[n0 - 1]];
    const double hi = p[order[n0]];
    if (!(lo < hi)) continue;
    const auto [left, right] = impurity(n0);
    const double score = static_cast<double>(n0) / static_cast<double>(N) * left +
                         static_cast<double>(N - n0) / static_cast<double>(N) * right;
    const std::size_t balance = n0 * 2 > N ? n0 * 2 - N : N - n0 * 2;
    if (!found || score < best.score || (score == best.score && balance < best_balance)) {
      found = true;
      best.score = score;
      best.split_index = n0;
      best.q_thr = lo + 0.5 * (hi - lo);
      best_balance = balance;
    }
  }
  if (!found) throw DegenerateSplitError("all probabilities are identical");
  return best;
}

void check_threshold_inputs(std::span<const double> p, std::size_t labels) {
  if (p.size() != labels) throw std::invalid_argument("probabilities and labels differ in length");
  if (p.size() < 2) throw std::invalid_argument("threshold selection needs at least two points");
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("probabilities must lie in [0, 1]");
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool is_pure(const Dataset& data) {
  if (data.task.is_classification()) {
    return std::all_of(data.classes.begin(), data.classes.end(), [&](std::size_t c) { return c == data.classes[0]; });
  }
  return std::all_of(data.targets.begin(), data.targets.end(), [&](double y) { return y == data.targets[0]; });
}

struct Grower {
  const GrowthConfig& config;
  TrainConfig stump;
  double total_rows;
  double root_impurity;

  // `path` is the heap index of the node: root 1, children 2p (low) and 2p+1 (high).
  TreeModel grow(const Dataset& train, const Dataset& valid, std::size_t level, std::uint64_t path) const {
    TreeModel leaf = make_leaf_tree(train.task, train.feature_dim());
    if (level >= config.max_depth || train.size() < config.min_samples || is_pure(train)) return leaf;

    TrainConfig local = stump;
    local.seed = splitmix64(stump.seed ^ splitmix64(path));
    std::mt19937_64 rng(local.seed);
    TreeModel tree = make_stump(train.task, train.feature_dim(),
                                initialize_branch(train.feature_dim(), local.truncation_k, local.prior, rng, local.init_scale));
    tree = fit_parameters(std::move(tree), train, valid, local).tree;

    BranchNode root = tree.branch(0);
    // Rank points by the lambda = 1 annealed probability: a strictly monotone
    // function of f that does not round to 1 when g(x) is large.
    const double offset = softplus(root.logit_p0);
    std::vector<double> prob(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      prob[i] = logistic(committee_log_complement(root, train.row(i)) - offset);
    }
    ThresholdChoice choice;
    try {
      choice = train.task.is_classification() ? select_threshold(prob, train.classes, train.task.class_count)
                                              : select_threshold(prob, train.targets);
    } catch (const DegenerateSplitError&) {
      return leaf;
    }
    // Cut at g* = offset + logit(q); p0 = 1 - exp(-g*).
    const double cut = offset + logit(choice.q_thr);
    if (!(cut > 0.0) || !std::isfinite(cut)) return leaf;
    root.logit_p0 = softplus_inverse(cut);
    if (!std::isfinite(root.logit_p0)) return leaf;

    const double gain = (node_impurity(train) - choice.score) * static_cast<double>(train.size()) / total_rows;
    if (gain < config.min_relative_gain * root_impurity) return leaf;

    std::vector<std::size_t> low_rows, high_rows, low_valid, high_valid;
    const TreeModel probe = make_stump(train.task, train.feature_dim(), root);
    for (std::size_t i = 0; i < train.size(); ++i) {
      (route_deterministic(probe, train.row(i)) == probe.branch(0).high ? high_rows : low_rows).push_back(i);
    }
    for (std::size_t i = 0; i < valid.size(); ++i) {
      (route_deterministic(probe, valid.row(i)) == probe.branch(0).high ? high_valid : low_valid).push_back(i);
    }
    if (low_rows.empty() || high_rows.empty()) return leaf;

    const TreeModel low = grow(subset(train, low_rows), subset(valid, low_valid), level + 1, 2 * path);
    const TreeModel high = grow(subset(train, high_rows), subset(valid, high_valid), level + 1, 2 * path + 1);
    TreeModel out = join_subtrees(std::move(root), low, high);
    out.annealing_lambda = tree.annealing_lambda;
    return out;
  }
};

}  // namespace

void check_growth(const GrowthConfig& config) {
  if (config.max_depth < 1) throw std::invalid_argument("max_depth must be at least 1");
  if (config.min_samples < 2) throw std::invalid_argument("min_samples must be at least 2");
  if (!(config.min_relative_gain >= 0.0)) throw std::invalid_argument("min_relative_gain must be nonnegative");
  check_config(config.stump_train);
}

GrowthConfig growth_for(const TrainConfig& refine, std::size_t max_depth) {
  GrowthConfig g;
  g.max_depth = max_depth;
  g.stump_train = refine;
  g.stump_train.epochs = std::max<std::size_t>(1, refine.epochs / 4);
  g.stump_train.early_stop_patience = 0;
  return g;
}

ThresholdChoice select_threshold(std::span<const double> probabilities, std::span<const std::size_t> classes,
                                 std::size_t class_count) {
  check_threshold_inputs(probabilities, classes.size());
  const std::size_t N = probabilities.size();
  const auto order = sorted_order(probabilities);
  std::vector<std::size_t> total(class_count, 0);
  for (std::size_t c : classes) {
    if (c >= class_count) throw std::invalid_argument("class label out of range");
    ++total[c];
  }
  // prefix[n0 * C + j]: count of class j among the n0 smallest probabilities
  std::vector<std::size_t> prefix((N + 1) * class_count, 0);
  for (std::size_t i = 0; i < N; ++i) {
    std::copy_n(&prefix[i * class_count], class_count, &prefix[(i + 1) * class_count]);
    ++prefix[(i + 1) * class_count + classes[order[i]]];
  }
  std::vector<std::size_t> right(class_count);
  return best_cut(probabilities, order, [&](std::size_t n0) {
    const std::span<const std::size_t> left(&prefix[n0 * class_count], class_count);
    for (std::size_t j = 0; j < class_count; ++j) right[j] = total[j] - left[j];
    return std::pair{entropy_from_counts(left, n0), entropy_from_counts(right, N - n0)};
  });
}

ThresholdChoice select_threshold(std::span<const double> probabilities, std::span<const double> targets) {
  check_threshold_inputs(probabilities, targets.size());
  const std::size_t N = probabilities.size();
  const auto order = sorted_order(probabilities);
  // Left sides accumulate in ascending order, right sides in descending order.
  std::vector<double> left_sum(N + 1, 0.0), left_sq(N + 1, 0.0), right_sum(N + 1, 0.0), right_sq(N + 1, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const double y = targets[order[i]];
    left_sum[i + 1] = left_sum[i] + y;
    left_sq[i + 1] = left_sq[i] + y * y;
  }
  for (std::size_t i = N; i-- > 0;) {
    const double y = targets[order[i]];
    right_sum[i] = right_sum[i + 1] + y;
    right_sq[i] = right_sq[i + 1] + y * y;
  }
  return best_cut(probabilities, order, [&](std::size_t n0) {
    return std::pair{variance_from_sums(left_sum[n0], left_sq[n0], n0),
                     variance_from_sums(right_sum[n0], right_sq[n0], N - n0)};
  });
}

double node_impurity(const Dataset& data) {
  if (data.empty()) return 0.0;
  if (data.task.is_classification()) {
    std::vector<std::size_t> counts(data.task.class_count, 0);
    for (std::size_t c : data.classes) ++counts[c];
    return entropy_from_counts(counts, data.size());
  }
  double sum = 0.0, sq = 0.0;
  for (double y : data.targets) {
    sum += y;
    sq += y * y;
  }
  return variance_from_sums(sum, sq, data.size());
}

TreeModel grow_tree(const Dataset& train, const Dataset& valid, const GrowthConfig& config, const PriorConfig& prior) {
  check_growth(config);
  check_prior(prior);
  if (train.empty()) throw DataError("empty training set");
  check_dataset(train);
  Grower grower{config, config.stump_train, static_cast<double>(train.size()), node_impurity(train)};
  grower.stump.prior = prior;
  return grower.grow(train, valid, 0, 1);
}

FitResult fit_tree(const Dataset& train, const Dataset& valid, const GrowthConfig& growth, const TrainConfig& refine) {
  check_config(refine);
  TreeModel grown = grow_tree(train, valid, growth, refine.prior);
  FitResult result = fit_parameters(std::move(grown), train, valid, refine);
  result.tree = finalize_leaves(std::move(result.tree), train);
  return result;
}

}  // namespace cpt
