#include "ranids/ml.hpp"

#include "ranids/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace ranids::ml {

using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "ranids-model";

json tree_params_json(const TreeParams& p) {
  return {{"max_depth", p.max_depth},
          {"min_samples_split", p.min_samples_split},
          {"min_samples_leaf", p.min_samples_leaf},
          {"max_features", p.max_features}};
}

TreeParams tree_params_from(const json& j) {
  TreeParams p;
  p.max_depth = j.at("max_depth").get<int>();
  p.min_samples_split = j.at("min_samples_split").get<int>();
  p.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  p.max_features = j.at("max_features").get<int>();
  return p;
}

// Columnar layout keeps 100-tree forests compact.
json tree_json(const TreeModel& t) {
  json feature = json::array(), threshold = json::array(), left = json::array(),
       right = json::array(), samples = json::array(), counts = json::array();
  for (const auto& n : t.nodes()) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    samples.push_back(n.n_samples);
    counts.push_back(n.class_counts);
  }
  return {{"params", tree_params_json(t.params())},
          {"n_features", t.n_features()},
          {"n_classes", t.n_classes()},
          {"feature", feature},
          {"threshold", threshold},
          {"left", left},
          {"right", right},
          {"n_samples", samples},
          {"class_counts", counts}};
}

TreeModel tree_from(const json& j) {
  const auto& feature = j.at("feature");
  const std::size_t n = feature.size();
  const auto& threshold = j.at("threshold");
  const auto& left = j.at("left");
  const auto& right = j.at("right");
  const auto& samples = j.at("n_samples");
  const auto& counts = j.at("class_counts");
  if (threshold.size() != n || left.size() != n || right.size() != n || samples.size() != n ||
      counts.size() != n) {
    fail(ErrorKind::Model, "tree node arrays have inconsistent lengths");
  }
  std::vector<TreeNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].feature = feature[i].get<int>();
    nodes[i].threshold = threshold[i].get<double>();
    nodes[i].left = left[i].get<int>();
    nodes[i].right = right[i].get<int>();
    nodes[i].n_samples = samples[i].get<int>();
    nodes[i].class_counts = counts[i].get<std::vector<double>>();
  }
  return TreeModel(std::move(nodes), tree_params_from(j.at("params")),
                   j.at("n_features").get<std::size_t>(), j.at("n_classes").get<int>());
}

json model_body(const TreeModel& m) { return {{"tree", tree_json(m)}}; }

json model_body(const ForestModel& m) {
  json trees = json::array();
  for (const auto& t : m.trees()) trees.push_back(tree_json(t));
  const ForestParams& p = m.params();
  return {{"n_trees", m.n_trees()},
          {"bootstrap", p.bootstrap},
          {"max_features", p.max_features},
          {"tree_params", tree_params_json(p.tree)},
          {"seed", m.seed()},
          {"tree_seeds", m.tree_seeds()},
          {"trees", trees}};
}

json model_body(const KnnModel& m) {
  const auto& train = m.scaled_train();
  json rows = json::array();
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto r = train.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"k", m.k()},
          {"n_features", train.dim()},
          {"n_classes", train.n_classes()},
          {"mins", m.mins()},
          {"maxs", m.maxs()},
          {"train", rows},
          {"labels", train.labels()}};
}

json model_body(const AdaBoostModel& m) {
  json stumps = json::array();
  for (const auto& s : m.stumps()) stumps.push_back(tree_json(s));
  return {{"n_classes", m.n_classes()}, {"alphas", m.alphas()}, {"stumps", stumps}};
}

Model model_from_body(Algorithm algo, const json& j) {
  switch (algo) {
  case Algorithm::DecisionTree:
    return tree_from(j.at("tree"));
  case Algorithm::RandomForest: {
    std::vector<TreeModel> trees;
    for (const auto& t : j.at("trees")) trees.push_back(tree_from(t));
    if (trees.size() != j.at("n_trees").get<std::size_t>()) {
      fail(ErrorKind::Model, "forest n_trees does not match stored trees");
    }
    ForestParams p;
    p.n_trees = static_cast<int>(trees.size());
    p.bootstrap = j.at("bootstrap").get<bool>();
    p.max_features = j.at("max_features").get<int>();
    p.tree = tree_params_from(j.at("tree_params"));
    return ForestModel(std::move(trees), p, j.at("seed").get<std::uint64_t>(),
                       j.at("tree_seeds").get<std::vector<std::uint64_t>>());
  }
  case Algorithm::Knn: {
    const auto dim = j.at("n_features").get<std::size_t>();
    LabeledVectors train(dim, j.at("n_classes").get<int>());
    const auto& rows = j.at("train");
    const auto labels = j.at("labels").get<std::vector<int>>();
    if (rows.size() != labels.size()) fail(ErrorKind::Model, "kNN rows and labels differ in length");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      train.add(rows[i].get<std::vector<double>>(), labels[i]);
    }
    return KnnModel(j.at("mins").get<std::vector<double>>(), j.at("maxs").get<std::vector<double>>(),
                    std::move(train), j.at("k").get<int>());
  }
  case Algorithm::AdaBoost: {
    std::vector<TreeModel> stumps;
    for (const auto& s : j.at("stumps")) stumps.push_back(tree_from(s));
    return AdaBoostModel(std::move(stumps), j.at("alphas").get<std::vector<double>>(),
                         j.at("n_classes").get<int>());
  }
  }
  fail(ErrorKind::Model, "unsupported algorithm");
}

} // namespace

std::string model_to_json(const Model& m) {
  json j;
  j["format"] = kFormatTag;
  j["version"] = kModelFormatVersion;
  j["algo"] = std::string(to_string(algorithm_of(m)));
  json names = json::array();
  for (auto n : feature_names()) names.push_back(std::string(n));
  j["features"] = names;
  json classes = json::array();
  for (auto c : kAllClasses) classes.push_back(std::string(to_string(c)));
  j["classes"] = classes;
  j["model"] = std::visit([](const auto& x) { return model_body(x); }, m);
  return j.dump();
}

Model model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Model, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kFormatTag) {
      fail(ErrorKind::Model, "not a ranids model file");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      fail(ErrorKind::Model, "unsupported model version " + std::to_string(version) + " (expected " +
                                 std::to_string(kModelFormatVersion) + ")");
    }
    std::vector<std::string> features, classes;
    for (auto n : feature_names()) features.emplace_back(n);
    for (auto c : kAllClasses) classes.emplace_back(to_string(c));
    if (j.at("features").get<std::vector<std::string>>() != features) {
      fail(ErrorKind::Model, "model was trained on a different feature set");
    }
    if (j.at("classes").get<std::vector<std::string>>() != classes) {
      fail(ErrorKind::Model, "model uses a different class list");
    }
    const Algorithm algo = parse_algorithm(j.at("algo").get<std::string>());
    return model_from_body(algo, j.at("model"));
  } catch (const json::exception& e) {
    fail(ErrorKind::Model, std::string("corrupt model file: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Model) throw;
    fail(ErrorKind::Model, std::string("corrupt model file: ") + e.what());
  }
}

void save_model(const Model& m, const std::filesystem::path& path) {
  if (path.empty()) fail(ErrorKind::InvalidArgument, "model path is empty");
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << model_to_json(m) << '\n';
  if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

Model load_model(const std::filesystem::path& path) {
  if (path.empty()) fail(ErrorKind::InvalidArgument, "model path is empty");
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open model '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

} // namespace ranids::ml
