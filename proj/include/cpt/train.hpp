#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cpt/data.hpp"
#include "cpt/objective.hpp"
#include "cpt/tree.hpp"

namespace cpt {

struct AdamSettings {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t step_count = 0;
  AdamSettings settings;

  OptimizerState(std::size_t parameter_count, AdamSettings s);
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(OptimizerState& state, std::span<double> params, std::span<const double> grad);

enum class Growth { linear, geometric };

struct AnnealSchedule {
  double lambda_start = 1.0;
  double lambda_end = 64.0;
  Growth growth = Growth::geometric;

  /// lambda for a 0-based epoch; reaches lambda_end at the last epoch.
  double at(std::size_t epoch, std::size_t total_epochs) const;
};

struct TrainConfig {
  std::size_t truncation_k = 50;
  PriorConfig prior;
  AdamSettings optimizer;
  AnnealSchedule anneal;
  std::size_t batch_size = 64;  ///< clamped to the dataset size
  std::size_t epochs = 400;
  std::uint64_t seed = 0;
  /// Stop after this many epochs without validation improvement and restore
  /// the best parameters; 0 disables early stopping.
  std::size_t early_stop_patience = 0;
  /// Standard deviation of the initial expert coefficients; unset means
  /// 0.1 / sqrt(d + 1).
  std::optional<double> init_scale = 1.0;
};

void check_config(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;        ///< mean minibatch loss
  double validation_metric = 0.0; ///< NaN when no usable validation set
  double lambda = 0.0;
};

struct FitResult {
  TreeModel tree;
  std::vector<EpochRecord> history;
};

/// A branch with K experts: beta ~ N(0, init_scale), r at the prior
/// mean gamma0 / (K c0), and p0 at the committee probability for beta = 0.
BranchNode initialize_branch(std::size_t feature_dim, std::size_t k, const PriorConfig& prior, std::mt19937_64& rng,
                             std::optional<double> init_scale = std::nullopt);

/// Minibatch Adam on the regularized objective with an annealed split sharpness.
FitResult fit_parameters(TreeModel tree, const Dataset& train, const Dataset& valid, const TrainConfig& config);

/// Routes every training point deterministically and stores empirical leaf
/// statistics; leaves receiving no points get a uniform distribution.
TreeModel finalize_leaves(TreeModel tree, const Dataset& train);

}  // namespace cpt
