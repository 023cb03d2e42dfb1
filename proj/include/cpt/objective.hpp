#pragma once

// Differentiable training objectives for a probabilistic (soft-routed) tree.
// All functions take a dataset plus the row indices of the current batch.

#include <optional>
#include <span>
#include <vector>

#include "cpt/data.hpp"
#include "cpt/tree.hpp"

namespace cpt {

/// Smoothing added to leaf-statistic numerators and denominators.
inline constexpr double kLeafSmoothing = 1e-8;

/// Gamma-process shrinkage on expert weights plus a Student-t style
/// sparsity penalty on expert coefficients.
struct PriorConfig {
  double gamma0 = 20.0;  ///< gamma-process mass
  double c0 = 1.0;      ///< gamma-process rate
  double a_beta = 1.0;  ///< inverse-gamma shape for coefficient scales
  double b_beta = 1.0;  ///< inverse-gamma scale (fixed)
  /// Multiplier on the whole penalty. Unset means 1 for direct evaluation;
  /// training resolves it to 1/N.
  std::optional<double> reg_weight;
};

void check_prior(const PriorConfig& prior);

struct BatchObjective {
  double value = 0.0;
  std::vector<double> gradient;  ///< aligned with gather_parameters()
};

/// Every row index of `data`.
std::vector<std::size_t> all_rows(const Dataset& data);

/// sum_n P(leaf | x_n) for each leaf in preorder; sums to the batch size.
std::vector<double> leaf_mass(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                              double lambda);

/// Smoothed per-leaf class distributions, leaves in preorder.
std::vector<std::vector<double>> leaf_class_distribution(const TreeModel& tree, const Dataset& data,
                                                         std::span<const std::size_t> rows, double lambda);

/// Estimated H(Y | L) in nats, weighting each leaf by its share of the batch.
double conditional_entropy(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                           double lambda);

/// sum_leaf sum_n P(leaf | x_n) (y_n - mu_leaf)^2 with probability-weighted leaf means.
double regression_objective(const TreeModel& tree, const Dataset& data, std::span<const std::size_t> rows,
                            double lambda);

double prior_penalty(const TreeModel& tree, const PriorConfig& prior);

/// Data term (conditional entropy or regression objective) plus prior_penalty,
/// with the exact gradient over every tree parameter.
BatchObjective total_loss_and_gradient(const TreeModel& tree, const Dataset& data,
                                       std::span<const std::size_t> rows, double lambda, const PriorConfig& prior);

}  // namespace cpt
