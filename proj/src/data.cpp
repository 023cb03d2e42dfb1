#include "cpt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "cpt/errors.hpp"

namespace cpt {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(std::string_view token) {
  token = trim(token);
  if (token.empty()) return std::nullopt;
  if (token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void check_dataset(const Dataset& data) {
  if (data.features.size() != data.rows * data.cols) throw DataError("feature matrix has the wrong size");
  for (std::size_t i = 0; i < data.rows; ++i) {
    const auto r = data.row(i);
    if (r.back() != 1.0) throw DataError("row " + std::to_string(i) + ": bias column must be 1");
    for (double v : r) {
      if (!std::isfinite(v)) throw DataError("row " + std::to_string(i) + ": non-finite feature");
    }
  }
  if (data.task.is_classification()) {
    if (data.classes.size() != data.rows) throw DataError("label count does not match row count");
    for (std::size_t i = 0; i < data.rows; ++i) {
      if (data.classes[i] >= data.task.class_count) {
        throw DataError("row " + std::to_string(i) + ": label out of range");
      }
    }
  } else {
    if (data.targets.size() != data.rows) throw DataError("target count does not match row count");
    for (double y : data.targets) {
      if (!std::isfinite(y)) throw DataError("non-finite regression target");
    }
  }
}

Dataset make_dataset(Task task, std::size_t feature_dim, std::span<const double> raw_features,
                     std::span<const double> raw_labels, std::vector<double> class_values) {
  const std::size_t n = raw_labels.size();
  if (raw_features.size() != n * feature_dim) throw DataError("feature count does not match label count");
  Dataset d;
  d.rows = n;
  d.cols = feature_dim + 1;
  d.features.resize(n * d.cols);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(raw_features.begin() + static_cast<std::ptrdiff_t>(i * feature_dim), feature_dim,
                d.features.begin() + static_cast<std::ptrdiff_t>(i * d.cols));
    d.features[i * d.cols + feature_dim] = 1.0;
  }
  if (task.is_classification()) {
    for (double y : raw_labels) {
      if (!std::isfinite(y)) throw DataError("non-finite label");
    }
    if (class_values.empty()) {
      class_values.assign(raw_labels.begin(), raw_labels.end());
      std::sort(class_values.begin(), class_values.end());
      class_values.erase(std::unique(class_values.begin(), class_values.end()), class_values.end());
    }
    d.classes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = std::lower_bound(class_values.begin(), class_values.end(), raw_labels[i]);
      if (it == class_values.end() || *it != raw_labels[i]) {
        throw DataError("label " + format_number(raw_labels[i]) + " at row " + std::to_string(i) +
                        " is not a known class");
      }
      d.classes[i] = static_cast<std::size_t>(it - class_values.begin());
    }
    d.task = Task::classification(std::max<std::size_t>(class_values.size(), 1));
    d.class_values = std::move(class_values);
  } else {
    d.task = Task::regression();
    d.targets.assign(raw_labels.begin(), raw_labels.end());
  }
  check_dataset(d);
  return d;
}

Dataset load_delimited(const std::filesystem::path& path, const DelimitedOptions& options) {
  auto in = open_input(path);
  std::vector<double> features, labels;
  std::vector<std::string> names;
  std::size_t arity = 0;
  char delim = 0;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = options.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    if (delim == 0) delim = view.find('\t') != std::string_view::npos ? '\t' : ',';
    const auto fields = split(view, delim);
    if (header_pending) {
      header_pending = false;
      for (std::size_t j = 0; j < fields.size(); ++j) {
        if (j != options.label_column) names.emplace_back(trim(fields[j]));
      }
      arity = fields.size();
      continue;
    }
    if (arity == 0) arity = fields.size();
    if (fields.size() != arity) {
      throw ParseError(line_no, "expected " + std::to_string(arity) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    if (options.label_column >= arity) throw ParseError(line_no, "label column out of range");
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto v = parse_number(fields[j]);
      if (!v) throw ParseError(line_no, "non-numeric field '" + std::string(trim(fields[j])) + "'");
      if (!std::isfinite(*v)) throw ParseError(line_no, "non-finite value");
      (j == options.label_column ? labels : features).push_back(*v);
    }
  }
  if (labels.empty()) throw DataError(path.string() + ": empty dataset");
  const Task task = options.task == TaskKind::classification ? Task::classification(0) : Task::regression();
  Dataset d = make_dataset(task, arity - 1, features, labels, options.class_values);
  d.feature_names = std::move(names);
  return d;
}

void write_delimited(const Dataset& data, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (std::size_t i = 0; i < data.rows; ++i) {
    out << (data.task.is_classification() ? data.class_values.at(data.classes[i]) : data.targets[i]);
    const auto r = data.row(i);
    for (std::size_t j = 0; j + 1 < r.size(); ++j) out << ',' << r[j];
    out << '\n';
  }
}

Dataset load_sparse(const std::filesystem::path& path, const SparseOptions& options) {
  auto in = open_input(path);
  struct Entry {
    std::size_t row, index;
    double value;
  };
  std::vector<Entry> entries;
  std::vector<double> labels;
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = trim(view.substr(0, hash));
    if (view.empty()) continue;
    std::istringstream tokens{std::string(view)};
    std::string token;
    tokens >> token;
    const auto label = parse_number(token);
    if (!label || !std::isfinite(*label)) throw ParseError(line_no, "invalid label '" + token + "'");
    const std::size_t row = labels.size();
    labels.push_back(*label);
    std::size_t previous = 0;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) throw ParseError(line_no, "expected index:value, found '" + token + "'");
      std::size_t index = 0;
      const auto idx = std::string_view(token).substr(0, colon);
      const auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), index);
      if (ec != std::errc{} || ptr != idx.data() + idx.size() || index == 0) {
        throw ParseError(line_no, "invalid feature index '" + std::string(idx) + "'");
      }
      if (index <= previous) throw ParseError(line_no, "feature indices must be strictly ascending");
      previous = index;
      const auto value = parse_number(std::string_view(token).substr(colon + 1));
      if (!value || !std::isfinite(*value)) throw ParseError(line_no, "invalid feature value in '" + token + "'");
      entries.push_back({row, index, *value});
      max_index = std::max(max_index, index);
    }
  }
  if (labels.empty()) throw DataError(path.string() + ": empty dataset");
  if (options.feature_dim != 0 && max_index > options.feature_dim) {
    throw DataError(path.string() + ": feature index " + std::to_string(max_index) + " exceeds dimension " +
                    std::to_string(options.feature_dim));
  }
  const std::size_t dim = std::max(max_index, options.feature_dim);
  std::vector<double> features(labels.size() * dim, 0.0);
  for (const auto& e : entries) features[e.row * dim + e.index - 1] = e.value;
  const Task task = options.task == TaskKind::classification ? Task::classification(0) : Task::regression();
  return make_dataset(task, dim, features, labels, options.class_values);
}

void write_sparse(const Dataset& data, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (std::size_t i = 0; i < data.rows; ++i) {
    out << (data.task.is_classification() ? data.class_values.at(data.classes[i]) : data.targets[i]);
    const auto r = data.row(i);
    for (std::size_t j = 0; j + 1 < r.size(); ++j) {
      if (r[j] != 0.0) out << ' ' << (j + 1) << ':' << r[j];
    }
    out << '\n';
  }
}

void Standardizer::apply_row(std::span<double> row) const {
  if (row.size() != mean.size() + 1) throw DimensionError("row does not match the standardizer dimension");
  for (std::size_t j = 0; j < mean.size(); ++j) row[j] = (row[j] - mean[j]) / scale[j];
}

Dataset Standardizer::apply(Dataset data) const {
  for (std::size_t i = 0; i < data.rows; ++i) apply_row(data.row(i));
  return data;
}

Standardizer fit_standardizer(const Dataset& train) {
  const std::size_t d = train.feature_dim();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  if (train.rows < 2) return s;
  const double n = static_cast<double>(train.rows);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < train.rows; ++i) sum += train.row(i)[j];
    const double mu = sum / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < train.rows; ++i) ss += (train.row(i)[j] - mu) * (train.row(i)[j] - mu);
    const double sd = std::sqrt(ss / n);
    // zero-variance columns stay as they are
    if (sd > 0.0) {
      s.mean[j] = mu;
      s.scale[j] = sd;
    }
  }
  return s;
}

std::pair<Dataset, Standardizer> standardize(const Dataset& train) {
  Standardizer s = fit_standardizer(train);
  return {s.apply(train), std::move(s)};
}

Dataset synth_circles(std::size_t n, double r_inner, double r_outer, std::uint64_t seed) {
  if (!(r_inner > 0.0) || !(r_outer > r_inner)) throw std::invalid_argument("radii must satisfy 0 < r_inner < r_outer");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::vector<double> features(2 * n), labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = coord(rng);
    const double y = coord(rng);
    features[2 * i] = x;
    features[2 * i + 1] = y;
    const double radius = std::hypot(x, y);
    labels[i] = (radius >= r_inner && radius <= r_outer) ? 1.0 : 0.0;
  }
  Dataset d = make_dataset(Task::classification(2), 2, features, labels, {0.0, 1.0});
  d.feature_names = {"x1", "x2"};
  return d;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.task = data.task;
  out.cols = data.cols;
  out.rows = indices.size();
  out.class_values = data.class_values;
  out.feature_names = data.feature_names;
  out.features.reserve(indices.size() * data.cols);
  for (std::size_t i : indices) {
    if (i >= data.rows) throw std::out_of_range("row index out of range");
    const auto r = data.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    if (data.task.is_classification()) {
      out.classes.push_back(data.classes[i]);
    } else {
      out.targets.push_back(data.targets[i]);
    }
  }
  return out;
}

DataSplit split_dataset(const Dataset& data, double valid_fraction, double test_fraction, std::uint64_t seed) {
  if (valid_fraction < 0.0 || test_fraction < 0.0 || valid_fraction + test_fraction >= 1.0) {
    throw std::invalid_argument("split fractions must be nonnegative and sum to less than 1");
  }
  std::vector<std::size_t> order(data.rows);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(data.rows);
  const auto n_valid = static_cast<std::size_t>(std::floor(valid_fraction * n));
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * n));
  const std::span<const std::size_t> all(order);
  DataSplit out;
  out.valid = subset(data, all.subspan(0, n_valid));
  out.test = subset(data, all.subspan(n_valid, n_test));
  out.train = subset(data, all.subspan(n_valid + n_test));
  return out;
}

}  // namespace cpt
