#include "cpt/model_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cpt/errors.hpp"
#include "json.hpp"

namespace cpt {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::size_t kMaxNesting = 256;

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> read_optional(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

Json encode_train(const TrainConfig& c) {
  Json j;
  j["truncation_k"] = c.truncation_k;
  j["prior"] = {{"gamma0", c.prior.gamma0},
                {"c0", c.prior.c0},
                {"a_beta", c.prior.a_beta},
                {"b_beta", c.prior.b_beta},
                {"reg_weight", optional_number(c.prior.reg_weight)}};
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  j["anneal"] = {{"lambda_start", c.anneal.lambda_start},
                 {"lambda_end", c.anneal.lambda_end},
                 {"growth", c.anneal.growth == Growth::linear ? "linear" : "geometric"}};
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["early_stop_patience"] = c.early_stop_patience;
  j["init_scale"] = optional_number(c.init_scale);
  return j;
}

TrainConfig decode_train(const Json& j) {
  TrainConfig c;
  c.truncation_k = j.at("truncation_k").get<std::size_t>();
  const Json& p = j.at("prior");
  c.prior.gamma0 = p.at("gamma0").get<double>();
  c.prior.c0 = p.at("c0").get<double>();
  c.prior.a_beta = p.at("a_beta").get<double>();
  c.prior.b_beta = p.at("b_beta").get<double>();
  c.prior.reg_weight = read_optional(p.at("reg_weight"));
  const Json& o = j.at("optimizer");
  c.optimizer.learning_rate = o.at("learning_rate").get<double>();
  c.optimizer.beta1 = o.at("beta1").get<double>();
  c.optimizer.beta2 = o.at("beta2").get<double>();
  c.optimizer.epsilon = o.at("epsilon").get<double>();
  const Json& a = j.at("anneal");
  c.anneal.lambda_start = a.at("lambda_start").get<double>();
  c.anneal.lambda_end = a.at("lambda_end").get<double>();
  const auto growth = a.at("growth").get<std::string>();
  if (growth == "linear") {
    c.anneal.growth = Growth::linear;
  } else if (growth == "geometric") {
    c.anneal.growth = Growth::geometric;
  } else {
    throw DataError("unknown annealing growth '" + growth + "'");
  }
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
  c.init_scale = read_optional(j.at("init_scale"));
  return c;
}

Json encode_node(const TreeModel& tree, std::size_t id) {
  Json j;
  if (tree.is_leaf(id)) {
    const LeafNode& leaf = tree.leaf(id);
    j["type"] = "leaf";
    if (tree.task.is_classification()) {
      j["distribution"] = leaf.class_distribution;
    } else {
      j["mean"] = leaf.mean_value;
    }
    j["sample_count"] = leaf.sample_count;
    return j;
  }
  const BranchNode& b = tree.branch(id);
  j["type"] = "branch";
  j["p0"] = b.p0();
  j["logit_p0"] = b.logit_p0;
  Json experts = Json::array();
  for (const Expert& e : b.experts) {
    experts.push_back({{"r", e.weight()}, {"log_r", e.log_r}, {"beta", e.beta}});
  }
  j["experts"] = std::move(experts);
  j["low"] = encode_node(tree, b.low);
  j["high"] = encode_node(tree, b.high);
  return j;
}

double finite(const Json& j, const char* what) {
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw DataError(std::string(what) + " is not finite");
  return v;
}

std::size_t decode_node(const Json& j, TreeModel& tree, std::size_t nesting) {
  if (nesting > kMaxNesting) throw DataError("tree nesting too deep");
  const auto type = j.at("type").get<std::string>();
  const std::size_t id = tree.nodes.size();
  if (type == "leaf") {
    LeafNode leaf;
    if (tree.task.is_classification()) {
      leaf.class_distribution = j.at("distribution").get<std::vector<double>>();
      if (leaf.class_distribution.size() != tree.task.class_count) {
        throw DataError("leaf distribution has the wrong number of classes");
      }
      double total = 0.0;
      for (double p : leaf.class_distribution) {
        if (!(p >= 0.0 && p <= 1.0)) throw DataError("leaf probability outside [0, 1]");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9) throw DataError("leaf distribution does not sum to 1");
    } else {
      leaf.mean_value = finite(j.at("mean"), "leaf mean");
    }
    leaf.sample_count = j.at("sample_count").get<std::size_t>();
    leaf.finalized = true;
    tree.nodes.emplace_back(std::move(leaf));
    return id;
  }
  if (type != "branch") throw DataError("unknown node type '" + type + "'");
  BranchNode b;
  b.logit_p0 = finite(j.at("logit_p0"), "logit_p0");
  for (const Json& e : j.at("experts")) {
    Expert expert;
    expert.log_r = finite(e.at("log_r"), "log_r");
    for (const Json& v : e.at("beta")) expert.beta.push_back(finite(v, "beta"));
    b.experts.push_back(std::move(expert));
  }
  tree.nodes.emplace_back(BranchNode{});
  b.low = decode_node(j.at("low"), tree, nesting + 1);
  b.high = decode_node(j.at("high"), tree, nesting + 1);
  tree.nodes[id] = std::move(b);
  return id;
}

}  // namespace

std::string to_json(const ModelDocument& doc) {
  validate(doc.tree);
  for (std::size_t id : leaf_ids(doc.tree)) {
    if (!doc.tree.leaf(id).finalized) throw StateError("cannot save a tree with unfinalized leaves");
  }
  if (doc.standardizer.feature_dim() != doc.tree.feature_dim || doc.standardizer.scale.size() != doc.tree.feature_dim) {
    throw DimensionError("standardizer does not match the model dimension");
  }
  const Task& task = doc.tree.task;
  if (task.is_classification() && doc.class_values.size() != task.class_count) {
    throw StructureError("class_values does not match the class count");
  }
  Json j;
  j["format_version"] = kModelFormatVersion;
  Json t;
  t["kind"] = task.is_classification() ? "classification" : "regression";
  if (task.is_classification()) {
    t["class_count"] = task.class_count;
    t["class_values"] = doc.class_values;
  }
  j["task"] = std::move(t);
  j["feature_dim"] = doc.tree.feature_dim;
  j["standardizer"] = {{"mean", doc.standardizer.mean}, {"scale", doc.standardizer.scale}};
  j["root"] = encode_node(doc.tree, 0);
  Json growth;
  growth["max_depth"] = doc.growth.max_depth;
  growth["min_samples"] = doc.growth.min_samples;
  growth["min_relative_gain"] = doc.growth.min_relative_gain;
  growth["stump_train"] = encode_train(doc.growth.stump_train);
  j["training"] = {{"seed", doc.refine.seed},
                   {"final_lambda", doc.tree.annealing_lambda},
                   {"growth", std::move(growth)},
                   {"refine", encode_train(doc.refine)}};
  return j.dump(2) + "\n";
}

ModelDocument from_json(const std::string& text) {
  ModelDocument doc;
  try {
    const Json j = Json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError("unsupported format_version " + std::to_string(version));
    }
    const Json& t = j.at("task");
    const auto kind = t.at("kind").get<std::string>();
    if (kind == "classification") {
      const auto classes = t.at("class_count").get<std::size_t>();
      if (classes < 2) throw DataError("class_count must be at least 2");
      doc.tree.task = Task::classification(classes);
      doc.class_values = t.at("class_values").get<std::vector<double>>();
      if (doc.class_values.size() != classes) throw DataError("class_values does not match class_count");
    } else if (kind == "regression") {
      doc.tree.task = Task::regression();
    } else {
      throw DataError("unknown task kind '" + kind + "'");
    }
    doc.tree.feature_dim = j.at("feature_dim").get<std::size_t>();
    doc.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    doc.standardizer.scale = j.at("standardizer").at("scale").get<std::vector<double>>();
    if (doc.standardizer.mean.size() != doc.tree.feature_dim || doc.standardizer.scale.size() != doc.tree.feature_dim) {
      throw DataError("standardizer does not match feature_dim");
    }
    for (double s : doc.standardizer.scale) {
      if (!(s > 0.0) || !std::isfinite(s)) throw DataError("standardizer scale must be positive");
    }
    const Json& training = j.at("training");
    doc.tree.annealing_lambda = finite(training.at("final_lambda"), "final_lambda");
    const Json& growth = training.at("growth");
    doc.growth.max_depth = growth.at("max_depth").get<std::size_t>();
    doc.growth.min_samples = growth.at("min_samples").get<std::size_t>();
    doc.growth.min_relative_gain = growth.at("min_relative_gain").get<double>();
    doc.growth.stump_train = decode_train(growth.at("stump_train"));
    doc.refine = decode_train(training.at("refine"));
    decode_node(j.at("root"), doc.tree, 0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid model document: ") + e.what());
  }
  validate(doc.tree);
  return doc;
}

void save_model(const ModelDocument& doc, const std::filesystem::path& path) {
  const std::string text = to_json(doc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

ModelDocument load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

}  // namespace cpt
