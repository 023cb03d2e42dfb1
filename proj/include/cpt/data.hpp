#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpt/tree.hpp"

namespace cpt {

/// Dense N x (d+1) feature matrix; the last column is the constant bias 1.
/// Classification labels live in `classes` (indices into `class_values`),
/// regression targets in `targets`.
struct Dataset {
  Task task;
  std::size_t rows = 0;
  std::size_t cols = 0;  ///< d + 1
  std::vector<double> features;
  std::vector<std::size_t> classes;
  std::vector<double> targets;
  std::vector<double> class_values;  ///< original label value of each class index
  std::vector<std::string> feature_names;

  std::size_t size() const { return rows; }
  bool empty() const { return rows == 0; }
  std::size_t feature_dim() const { return cols == 0 ? 0 : cols - 1; }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {features.data() + i * cols, cols}; }
};

/// Checks every Dataset invariant (finite features, bias column, label range).
void check_dataset(const Dataset& data);

/// Builds a dataset from raw feature rows (without bias) and raw label values.
/// For classification, `class_values` fixes the label mapping; when empty the
/// sorted distinct labels define it.
Dataset make_dataset(Task task, std::size_t feature_dim, std::span<const double> raw_features,
                     std::span<const double> raw_labels, std::vector<double> class_values = {});

struct DelimitedOptions {
  bool has_header = false;
  std::size_t label_column = 0;
  TaskKind task = TaskKind::classification;
  std::vector<double> class_values;  ///< reuse a training label mapping
};

/// Comma- or tab-separated numeric rows; the delimiter is detected per file.
Dataset load_delimited(const std::filesystem::path& path, const DelimitedOptions& options = {});
void write_delimited(const Dataset& data, const std::filesystem::path& path);

struct SparseOptions {
  TaskKind task = TaskKind::classification;
  std::vector<double> class_values;
  /// Pads to this dimension when larger than the maximum index seen.
  std::size_t feature_dim = 0;
};

/// "label idx:val idx:val ..." lines with 1-based ascending indices.
Dataset load_sparse(const std::filesystem::path& path, const SparseOptions& options = {});
void write_sparse(const Dataset& data, const std::filesystem::path& path);

/// Per-column affine transform fitted on training data; the bias column is never touched.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  std::size_t feature_dim() const { return mean.size(); }
  void apply_row(std::span<double> row) const;
  Dataset apply(Dataset data) const;
};

Standardizer fit_standardizer(const Dataset& train);
std::pair<Dataset, Standardizer> standardize(const Dataset& train);

/// Uniform points on [-1,1]^2 labelled 1 iff r_inner <= |x| <= r_outer.
Dataset synth_circles(std::size_t n, double r_inner, double r_outer, std::uint64_t seed);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

struct DataSplit {
  Dataset train;
  Dataset valid;
  Dataset test;
};

/// Seeded shuffle, then slices of the given fractions for validation and test.
DataSplit split_dataset(const Dataset& data, double valid_fraction, double test_fraction, std::uint64_t seed);

}  // namespace cpt
