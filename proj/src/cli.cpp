#include "cpt/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpt/errors.hpp"
#include "cpt/metrics.hpp"
#include "cpt/model_io.hpp"
#include "cpt/topology.hpp"

namespace cpt {

namespace {

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct InputFlags {
  std::string path;
  std::string format = "csv";
  bool header = false;
  std::size_t label_column = 0;
};

void add_input_flags(CLI::App* cmd, InputFlags& in, const std::string& data_help) {
  cmd->add_option("--data", in.path, data_help)->required()->check(CLI::ExistingFile);
  cmd->add_option("--format", in.format, "input format")
      ->check(CLI::IsMember({"csv", "sparse"}))
      ->capture_default_str();
  cmd->add_flag("--header", in.header, "delimited input starts with a header row");
  cmd->add_option("--label-column", in.label_column, "0-based label column of delimited input")
      ->capture_default_str();
}

Dataset load_input(const std::string& path, const InputFlags& in, TaskKind task, std::vector<double> class_values,
                   std::size_t feature_dim) {
  if (in.format == "sparse") {
    return load_sparse(path, SparseOptions{task, std::move(class_values), feature_dim});
  }
  return load_delimited(path, DelimitedOptions{in.header, in.label_column, task, std::move(class_values)});
}

// Loads rows for an existing model: labels keep the model's class mapping.
Dataset load_for_model(const InputFlags& in, const ModelDocument& doc, bool labels_matter) {
  const bool classify = doc.tree.task.is_classification() && labels_matter;
  Dataset raw = load_input(in.path, in, classify ? TaskKind::classification : TaskKind::regression,
                           classify ? doc.class_values : std::vector<double>{}, doc.tree.feature_dim);
  if (raw.feature_dim() != doc.tree.feature_dim) {
    throw DimensionError("data has " + std::to_string(raw.feature_dim()) + " features but the model expects " +
                         std::to_string(doc.tree.feature_dim));
  }
  if (classify) raw.task = doc.tree.task;
  return doc.prepare(std::move(raw));
}

// Runs `body` with either the named file or `fallback` as the output stream.
void with_output(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& body) {
  if (path.empty() || path == "-") {
    body(fallback);
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write " + path);
  body(file);
  if (!file) throw DataError("failed writing " + path);
}

double label_value(const ModelDocument& doc, std::size_t cls) { return doc.class_values.at(cls); }

struct TrainFlags {
  InputFlags input;
  std::string valid_path, test_path;
  double valid_fraction = 0.2;
  std::string task = "classify";
  std::size_t max_depth = 2, min_samples = 16, truncation = 50;
  double min_gain = 0.01;
  double gamma0 = 20.0, c0 = 1.0, a_beta = 1.0, b_beta = 1.0, reg_weight = 0.0;
  double lr = 0.01, lambda_start = 1.0, lambda_end = 64.0, init_scale = 1.0;
  std::size_t batch = 64, epochs = 400, stump_epochs = 0, patience = 0;
  std::uint64_t seed = 0;
  std::string out = "model.json", history;
  CLI::Option* reg_weight_opt = nullptr;
  CLI::Option* stump_epochs_opt = nullptr;
};

void register_train(CLI::App* cmd, TrainFlags& f) {
  add_input_flags(cmd, f.input, "training data");
  cmd->add_option("--valid", f.valid_path, "validation data (default: hold out --valid-fraction of --data)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--valid-fraction", f.valid_fraction, "holdout share when --valid is absent")
      ->check(CLI::Range(0.0, 0.9))
      ->capture_default_str();
  cmd->add_option("--test", f.test_path, "test data, scored after training")->check(CLI::ExistingFile);
  cmd->add_option("--task", f.task)->check(CLI::IsMember({"classify", "regress"}))->capture_default_str();
  cmd->add_option("--max-depth", f.max_depth)->capture_default_str();
  cmd->add_option("--min-samples", f.min_samples, "smallest node that may split")->capture_default_str();
  cmd->add_option("--min-gain", f.min_gain, "smallest split gain, relative to the root impurity")
      ->capture_default_str();
  cmd->add_option("--truncation", f.truncation, "experts per node (K)")->capture_default_str();
  cmd->add_option("--gamma0", f.gamma0)->capture_default_str();
  cmd->add_option("--c0", f.c0)->capture_default_str();
  cmd->add_option("--a-beta", f.a_beta)->capture_default_str();
  cmd->add_option("--b-beta", f.b_beta)->capture_default_str();
  f.reg_weight_opt = cmd->add_option("--reg-weight", f.reg_weight, "penalty multiplier (default 1/N)");
  cmd->add_option("--lr", f.lr)->capture_default_str();
  cmd->add_option("--batch", f.batch)->capture_default_str();
  cmd->add_option("--epochs", f.epochs, "epochs of the joint refinement")->capture_default_str();
  f.stump_epochs_opt = cmd->add_option("--stump-epochs", f.stump_epochs, "epochs per greedy stump (default epochs/4)");
  cmd->add_option("--lambda-start", f.lambda_start)->capture_default_str();
  cmd->add_option("--lambda-end", f.lambda_end)->capture_default_str();
  cmd->add_option("--init-scale", f.init_scale, "std of initial expert coefficients")->capture_default_str();
  cmd->add_option("--patience", f.patience, "early-stopping patience in epochs, 0 = off")->capture_default_str();
  cmd->add_option("--seed", f.seed)->capture_default_str();
  cmd->add_option("--out", f.out, "model file")->capture_default_str();
  cmd->add_option("--history", f.history, "history file (default: next to the model)");
}

struct Configs {
  GrowthConfig growth;
  TrainConfig refine;
};

Configs build_configs(const TrainFlags& f) {
  Configs c;
  TrainConfig& t = c.refine;
  t.truncation_k = f.truncation;
  t.prior = PriorConfig{f.gamma0, f.c0, f.a_beta, f.b_beta, std::nullopt};
  if (f.reg_weight_opt->count() > 0) t.prior.reg_weight = f.reg_weight;
  t.optimizer.learning_rate = f.lr;
  t.anneal.lambda_start = f.lambda_start;
  t.anneal.lambda_end = f.lambda_end;
  t.batch_size = f.batch;
  t.epochs = f.epochs;
  t.seed = f.seed;
  t.early_stop_patience = f.patience;
  t.init_scale = f.init_scale;
  c.growth = growth_for(t, f.max_depth);
  c.growth.min_samples = f.min_samples;
  c.growth.min_relative_gain = f.min_gain;
  if (f.stump_epochs_opt->count() > 0) c.growth.stump_train.epochs = f.stump_epochs;
  check_prior(t.prior);
  check_config(t);
  check_growth(c.growth);
  return c;
}

void print_score(std::ostream& out, const std::string& name, const TreeModel& tree, const Dataset& data) {
  const MetricReport r = evaluate(tree, data);
  out << name << ' ' << to_string(r.metric_kind) << ' ' << fmt(r.value) << '\n';
}

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const Configs cfg = build_configs(f);
  const TaskKind kind = f.task == "classify" ? TaskKind::classification : TaskKind::regression;
  Dataset data = load_input(f.input.path, f.input, kind, {}, 0);
  Dataset valid_raw;
  if (!f.valid_path.empty()) {
    valid_raw = load_input(f.valid_path, f.input, kind, data.class_values, data.feature_dim());
  } else if (f.valid_fraction > 0.0) {
    DataSplit split = split_dataset(data, f.valid_fraction, 0.0, f.seed);
    data = std::move(split.train);
    valid_raw = std::move(split.valid);
  }
  if (data.empty()) throw DataError("no training rows left after the validation holdout");
  auto [train, standardizer] = standardize(data);
  const Dataset valid = valid_raw.empty() ? valid_raw : standardizer.apply(std::move(valid_raw));

  FitResult fit = fit_tree(train, valid, cfg.growth, cfg.refine);
  ModelDocument doc{std::move(fit.tree), train.class_values, standardizer, cfg.growth, cfg.refine};
  save_model(doc, f.out);

  std::string history = f.history;
  if (history.empty()) history = std::filesystem::path(f.out).replace_extension(".history.csv").string();
  with_output(history, out, [&](std::ostream& h) {
    h << "epoch,train_loss,validation_metric,lambda\n";
    for (const EpochRecord& r : fit.history) {
      h << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.validation_metric) << ',' << fmt(r.lambda) << '\n';
    }
  });

  out << "leaves " << leaf_count(doc.tree) << " depth " << depth(doc.tree) << '\n';
  if (!valid.empty()) print_score(out, "validation", doc.tree, valid);
  if (!f.test_path.empty()) {
    Dataset test = load_input(f.test_path, f.input, kind, train.class_values, train.feature_dim());
    print_score(out, "test", doc.tree, doc.prepare(std::move(test)));
  }
  out << "model " << f.out << "\nhistory " << history << '\n';
  return 0;
}

struct ModelFlags {
  InputFlags input;
  std::string model, out, metric;
  bool experts = false;
  std::size_t grid = 200;
  std::size_t n = 2000;
  double r_inner = 0.45, r_outer = 0.85;
  std::uint64_t seed = 0;
};

int cmd_predict(const ModelFlags& f, std::ostream& out) {
  const ModelDocument doc = load_model(f.model);
  const Dataset data = load_for_model(f.input, doc, false);
  with_output(f.out, out, [&](std::ostream& o) {
    const bool classify = doc.tree.task.is_classification();
    if (classify) {
      o << "label";
      for (double v : doc.class_values) o << ",score_" << fmt(v);
    } else {
      o << "value";
    }
    o << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Prediction p = predict(doc.tree, data.row(i));
      if (classify) {
        o << fmt(label_value(doc, p.label));
        for (double s : p.scores) o << ',' << fmt(s);
      } else {
        o << fmt(p.value);
      }
      o << '\n';
    }
  });
  return 0;
}

void print_experts_line(std::ostream& out, const TreeStats& stats) {
  out << "effective_experts";
  for (std::size_t e : stats.effective_experts_per_node) out << ' ' << e;
  out << '\n';
}

int cmd_evaluate(const ModelFlags& f, std::ostream& out) {
  const ModelDocument doc = load_model(f.model);
  const Dataset data = load_for_model(f.input, doc, true);
  std::optional<MetricKind> kind;
  if (!f.metric.empty()) kind = metric_from_string(f.metric);
  const MetricReport r = evaluate(doc.tree, data, kind);
  out << "metric " << to_string(r.metric_kind) << '\n'
      << "value " << fmt(r.value) << '\n'
      << "depth " << r.tree_stats.depth << '\n'
      << "leaves " << r.tree_stats.leaf_count << '\n';
  print_experts_line(out, r.tree_stats);
  return 0;
}

int cmd_inspect(const ModelFlags& f, std::ostream& out) {
  const ModelDocument doc = load_model(f.model);
  const TreeModel& tree = doc.tree;
  const TreeStats stats = tree_stats(tree);
  if (tree.task.is_classification()) {
    out << "task classification " << tree.task.class_count << " classes\n";
  } else {
    out << "task regression\n";
  }
  out << "feature_dim " << tree.feature_dim << '\n'
      << "depth " << stats.depth << '\n'
      << "leaves " << stats.leaf_count << '\n';
  print_experts_line(out, stats);
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    out << "node " << id;
    if (tree.is_leaf(id)) {
      const LeafNode& leaf = tree.leaf(id);
      out << " leaf samples=" << leaf.sample_count;
      if (tree.task.is_classification()) {
        out << " distribution=";
        for (std::size_t j = 0; j < leaf.class_distribution.size(); ++j) {
          out << (j ? " " : "") << fmt(leaf.class_distribution[j]);
        }
      } else {
        out << " mean=" << fmt(leaf.mean_value);
      }
      out << '\n';
      continue;
    }
    const BranchNode& b = tree.branch(id);
    out << " branch p0=" << fmt(b.p0()) << " effective_experts=" << effective_expert_count(b) << '/'
        << b.experts.size() << " low=" << b.low << " high=" << b.high << '\n';
    if (!f.experts) continue;
    for (std::size_t k = 0; k < b.experts.size(); ++k) {
      out << "  expert " << k << " r=" << fmt(b.experts[k].weight()) << " beta=";
      for (std::size_t j = 0; j < b.experts[k].beta.size(); ++j) {
        out << (j ? " " : "") << fmt(b.experts[k].beta[j]);
      }
      out << '\n';
    }
  }
  return 0;
}

int cmd_synth(const ModelFlags& f, std::ostream& out) {
  const Dataset data = synth_circles(f.n, f.r_inner, f.r_outer, f.seed);
  if (f.input.format == "sparse") {
    write_sparse(data, f.out);
  } else {
    write_delimited(data, f.out);
  }
  out << "wrote " << data.size() << " rows to " << f.out << '\n';
  return 0;
}

int cmd_boundary(const ModelFlags& f, std::ostream& out) {
  const ModelDocument doc = load_model(f.model);
  const TreeModel& tree = doc.tree;
  if (tree.feature_dim != 2) throw DimensionError("boundary export needs a model with 2 features");
  const std::vector<std::size_t> branches = branch_ids(tree);
  with_output(f.out, out, [&](std::ostream& o) {
    o << "x1,x2,leaf,prediction";
    for (std::size_t id : branches) o << ",f" << id;
    o << '\n';
    const double step = 2.0 / static_cast<double>(f.grid - 1);
    std::vector<double> x(3);
    for (std::size_t i = 0; i < f.grid; ++i) {
      for (std::size_t j = 0; j < f.grid; ++j) {
        const double x1 = i + 1 == f.grid ? 1.0 : -1.0 + step * static_cast<double>(i);
        const double x2 = j + 1 == f.grid ? 1.0 : -1.0 + step * static_cast<double>(j);
        x = {x1, x2, 1.0};
        doc.standardizer.apply_row(x);
        const std::size_t leaf = route_deterministic(tree, x);
        const Prediction p = predict(tree, x);
        o << fmt(x1) << ',' << fmt(x2) << ',' << leaf << ','
          << fmt(tree.task.is_classification() ? label_value(doc, p.label) : p.value);
        for (std::size_t id : branches) o << ',' << fmt(split_probability(tree.branch(id), x));
        o << '\n';
      }
    }
  });
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convex polytope trees: train, apply and inspect tree models", "cpt"};
  app.require_subcommand(1);

  TrainFlags train;
  CLI::App* train_cmd = app.add_subcommand("train", "grow and fit a tree, write the model and its history");
  register_train(train_cmd, train);

  ModelFlags predict_f, evaluate_f, inspect_f, synth_f, boundary_f;
  CLI::App* predict_cmd = app.add_subcommand("predict", "write one prediction per input row");
  predict_cmd->add_option("--model", predict_f.model)->required()->check(CLI::ExistingFile);
  add_input_flags(predict_cmd, predict_f.input, "rows to predict (label column read and ignored)");
  predict_cmd->add_option("--out", predict_f.out, "output file (default stdout)");

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "score a model on labelled data");
  evaluate_cmd->add_option("--model", evaluate_f.model)->required()->check(CLI::ExistingFile);
  add_input_flags(evaluate_cmd, evaluate_f.input, "labelled rows");
  evaluate_cmd->add_option("--metric", evaluate_f.metric, "acc, auc or rmse (default by task)")
      ->check(CLI::IsMember({"acc", "auc", "rmse"}));

  CLI::App* inspect_cmd = app.add_subcommand("inspect", "print the tree structure");
  inspect_cmd->add_option("--model", inspect_f.model)->required()->check(CLI::ExistingFile);
  inspect_cmd->add_flag("--experts", inspect_f.experts, "also print every expert's parameters");

  CLI::App* synth_cmd = app.add_subcommand("synth", "generate the concentric-circles dataset");
  synth_cmd->add_option("--n", synth_f.n)->capture_default_str();
  synth_cmd->add_option("--r-inner", synth_f.r_inner)->capture_default_str();
  synth_cmd->add_option("--r-outer", synth_f.r_outer)->capture_default_str();
  synth_cmd->add_option("--seed", synth_f.seed)->capture_default_str();
  synth_cmd->add_option("--format", synth_f.input.format)
      ->check(CLI::IsMember({"csv", "sparse"}))
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_f.out)->required();

  CLI::App* boundary_cmd = app.add_subcommand("boundary", "export a decision-boundary grid over [-1,1]^2");
  boundary_cmd->add_option("--model", boundary_f.model)->required()->check(CLI::ExistingFile);
  boundary_cmd->add_option("--grid", boundary_f.grid, "cells per axis")
      ->check(CLI::Range(std::size_t{2}, std::size_t{100000}))
      ->capture_default_str();
  boundary_cmd->add_option("--out", boundary_f.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) {
      try {
        build_configs(train);
      } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
      }
      return cmd_train(train, out);
    }
    if (*predict_cmd) return cmd_predict(predict_f, out);
    if (*evaluate_cmd) return cmd_evaluate(evaluate_f, out);
    if (*inspect_cmd) return cmd_inspect(inspect_f, out);
    if (*synth_cmd) return cmd_synth(synth_f, out);
    if (*boundary_cmd) return cmd_boundary(boundary_f, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cpt
