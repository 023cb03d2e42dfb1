#include "cpt/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cpt/errors.hpp"
#include "cpt/metrics.hpp"

namespace cpt {

OptimizerState::OptimizerState(std::size_t parameter_count, AdamSettings s)
    : first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0), settings(s) {
  if (!(s.beta1 >= 0.0 && s.beta1 < 1.0) || !(s.beta2 >= 0.0 && s.beta2 < 1.0) || !(s.epsilon > 0.0) ||
      !(s.learning_rate > 0.0)) {
    throw std::invalid_argument("invalid Adam settings");
  }
}

void adam_step(OptimizerState& state, std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("optimizer state, parameters and gradient are not aligned");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient passed to the optimizer");
  }
  const auto& s = state.settings;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(s.beta1, t);
  const double correction2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first_moment[i] = s.beta1 * state.first_moment[i] + (1.0 - s.beta1) * grad[i];
    state.second_moment[i] = s.beta2 * state.second_moment[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double m_hat = state.first_moment[i] / correction1;
    const double v_hat = state.second_moment[i] / correction2;
    params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

double AnnealSchedule::at(std::size_t epoch, std::size_t total_epochs) const {
  if (total_epochs <= 1) return lambda_end;
  const double t = static_cast<double>(std::min(epoch, total_epochs - 1)) / static_cast<double>(total_epochs - 1);
  if (growth == Growth::linear) return lambda_start + t * (lambda_end - lambda_start);
  return lambda_start * std::pow(lambda_end / lambda_start, t);
}

void check_config(const TrainConfig& config) {
  if (config.truncation_k < 1) throw std::invalid_argument("truncation K must be at least 1");
  if (config.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (!(config.anneal.lambda_start > 0.0) || !(config.anneal.lambda_end >= config.anneal.lambda_start)) {
    throw std::invalid_argument("annealing requires lambda_end >= lambda_start > 0");
  }
  check_prior(config.prior);
  OptimizerState probe(0, config.optimizer);
}

BranchNode initialize_branch(std::size_t feature_dim, std::size_t k, const PriorConfig& prior, std::mt19937_64& rng,
                             std::optional<double> init_scale) {
  if (k < 1) throw std::invalid_argument("truncation K must be at least 1");
  const std::size_t D = feature_dim + 1;
  const double scale = init_scale.value_or(0.1 / std::sqrt(static_cast<double>(D)));
  if (!(scale >= 0.0)) throw std::invalid_argument("init_scale must be nonnegative");
  std::normal_distribution<double> coef(0.0, scale);
  const double r0 = prior.gamma0 / (static_cast<double>(k) * prior.c0);
  BranchNode node;
  node.experts.resize(k);
  for (auto& e : node.experts) {
    e.beta.resize(D);
    for (double& b : e.beta) b = coef(rng);
    e.log_r = std::log(r0);
  }
  // With beta = 0 every expert contributes r0 ln 2, so p0 = 1 - 2^(-K r0).
  const double g0 = static_cast<double>(k) * r0 * std::log(2.0);
  node.logit_p0 = std::log(std::expm1(g0));  // logit(1 - e^-g) = ln(e^g - 1)
  return node;
}

namespace {

void check_inputs(const TreeModel& tree, const Dataset& data, const char* what) {
  check_dataset(data);
  if (data.cols != tree.input_size()) {
    throw DimensionError(std::string(what) + " set dimension does not match the model");
  }
  if (data.task.kind != tree.task.kind) throw DataError(std::string(what) + " set task does not match the model");
  if (tree.task.is_classification() && data.task.class_count > tree.task.class_count) {
    throw DataError(std::string(what) + " set has labels out of range");
  }
}

double score_or_nan(const TreeModel& tree, const Dataset& train, const Dataset& valid) {
  if (valid.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    return validation_score(finalize_leaves(tree, train), valid);
  } catch (const UndefinedMetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

FitResult fit_parameters(TreeModel tree, const Dataset& train, const Dataset& valid, const TrainConfig& config) {
  check_config(config);
  if (train.empty()) throw DataError("empty training set");
  check_inputs(tree, train, "training");
  if (!valid.empty()) check_inputs(tree, valid, "validation");
  validate(tree);

  FitResult result;
  if (config.epochs == 0 || branch_ids(tree).empty()) {
    result.tree = std::move(tree);
    return result;
  }

  const std::size_t n = train.size();
  const std::size_t batch = std::min(config.batch_size, n);
  // The penalty is a whole-dataset quantity: per sample it carries weight 1/N.
  // The entropy term is a batch mean; the variance term is a batch sum, so it
  // gets a penalty scaled by the batch size to keep the same balance.
  PriorConfig prior = config.prior;
  const double per_sample = config.prior.reg_weight.value_or(1.0 / static_cast<double>(n));

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order = all_rows(train);
  std::vector<double> params = gather_parameters(tree);
  OptimizerState opt(params.size(), config.optimizer);

  std::vector<double> best_params;
  double best_score = -std::numeric_limits<double>::infinity();
  double best_lambda = 0.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lambda = config.anneal.at(epoch, config.epochs);
    tree.annealing_lambda = lambda;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch, n - start));
      prior.reg_weight = tree.task.is_classification() ? per_sample : per_sample * static_cast<double>(rows.size());
      const BatchObjective obj = total_loss_and_gradient(tree, train, rows, lambda, prior);
      loss_sum += obj.value;
      ++batches;
      adam_step(opt, params, obj.gradient);
      scatter_parameters(tree, params);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.lambda = lambda;
    rec.validation_metric = score_or_nan(tree, train, valid);
    result.history.push_back(rec);

    if (config.early_stop_patience > 0 && std::isfinite(rec.validation_metric)) {
      if (rec.validation_metric > best_score) {
        best_score = rec.validation_metric;
        best_params = params;
        best_lambda = lambda;
        since_best = 0;
      } else if (++since_best >= config.early_stop_patience) {
        break;
      }
    }
  }

  if (!best_params.empty()) {
    scatter_parameters(tree, best_params);
    tree.annealing_lambda = best_lambda;
  }
  result.tree = std::move(tree);
  return result;
}

TreeModel finalize_leaves(TreeModel tree, const Dataset& train) {
  check_inputs(tree, train, "training");
  const bool classification = tree.task.is_classification();
  const std::size_t C = tree.task.class_count;
  std::vector<std::vector<double>> counts(tree.nodes.size());
  std::vector<double> sums(tree.nodes.size(), 0.0);
  std::vector<std::size_t> arrivals(tree.nodes.size(), 0);
  double total = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::size_t id = route_deterministic(tree, train.row(i));
    ++arrivals[id];
    if (classification) {
      if (counts[id].empty()) counts[id].assign(C, 0.0);
      counts[id][train.classes[i]] += 1.0;
    } else {
      sums[id] += train.targets[i];
      total += train.targets[i];
    }
  }
  const double global_mean = train.empty() ? 0.0 : total / static_cast<double>(train.size());
  for (std::size_t id : leaf_ids(tree)) {
    LeafNode& leaf = tree.leaf(id);
    leaf.sample_count = arrivals[id];
    leaf.finalized = true;
    const double m = static_cast<double>(arrivals[id]);
    if (classification) {
      leaf.class_distribution.assign(C, 1.0 / static_cast<double>(C));
      if (arrivals[id] > 0) {
        for (std::size_t j = 0; j < C; ++j) leaf.class_distribution[j] = counts[id][j] / m;
      }
    } else {
      leaf.mean_value = arrivals[id] > 0 ? sums[id] / m : global_mean;
    }
  }
  return tree;
}

}  // namespace cpt
