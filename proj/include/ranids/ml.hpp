#pragma once

#include "ranids/kpm.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace ranids::ml {

// Dense row-major training matrix with integer class labels.
class LabeledVectors {
public:
  LabeledVectors() = default;
  LabeledVectors(std::size_t dim, int n_classes) : dim_(dim), n_classes_(n_classes) {}

  void add(std::span<const double> x, int label);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  int n_classes() const noexcept { return n_classes_; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * dim_, dim_};
  }
  double at(std::size_t i, std::size_t f) const noexcept { return values_[i * dim_ + f]; }
  int label(std::size_t i) const noexcept { return labels_[i]; }
  const std::vector<int>& labels() const noexcept { return labels_; }

private:
  std::size_t dim_ = 0;
  int n_classes_ = 0;
  std::vector<double> values_;
  std::vector<int> labels_;
};

LabeledVectors to_vectors(const std::vector<LabeledSample>& samples);

// Gini impurity 1 - sum p_i^2. Throws on a zero or negative total.
double gini(std::span<const double> class_counts);

struct TreeParams {
  int max_depth = 15;
  int min_samples_split = 5;
  int min_samples_leaf = 1;
  // Features examined per split; 0 means all.
  int max_features = 0;
};

struct TreeNode {
  int feature = -1; // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int n_samples = 0;
  std::vector<double> class_counts; // leaves only

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

class TreeModel {
public:
  TreeModel() = default;
  TreeModel(std::vector<TreeNode> nodes, TreeParams params, std::size_t n_features, int n_classes);

  int predict(std::span<const double> x) const;
  // Index of the leaf reached by x.
  int leaf_index(std::span<const double> x) const;

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeParams& params() const noexcept { return params_; }
  std::size_t n_features() const noexcept { return n_features_; }
  int n_classes() const noexcept { return n_classes_; }
  int depth() const;
  std::size_t leaf_count() const;

private:
  std::vector<TreeNode> nodes_;
  TreeParams params_;
  std::size_t n_features_ = 0;
  int n_classes_ = 0;
};

// Greedy CART with Gini impurity. Thresholds are midpoints between
// consecutive distinct sorted values; ties prefer the lower feature index,
// then the lower threshold. `weights` (optional) are per-sample weights.
// With max_features > 0, `seed` drives the per-split feature subsample.
TreeModel train_tree(const LabeledVectors& data, const TreeParams& params,
                     std::span<const double> weights = {}, std::uint64_t seed = 0);

// Trains on an index multiset (bootstrap sample) of `data`.
TreeModel train_tree_on(const LabeledVectors& data, std::span<const std::uint32_t> indices,
                        const TreeParams& params, std::span<const double> weights,
                        std::uint64_t seed);

struct ForestParams {
  int n_trees = 100;
  TreeParams tree{};
  bool bootstrap = true;
  // 0 selects ceil(sqrt(dim)).
  int max_features = 0;
  // 0 selects std::thread::hardware_concurrency().
  unsigned threads = 0;
};

class ForestModel {
public:
  ForestModel() = default;
  ForestModel(std::vector<TreeModel> trees, ForestParams params, std::uint64_t seed,
              std::vector<std::uint64_t> tree_seeds);

  // Majority vote; ties go to the lowest class index.
  int predict(std::span<const double> x) const;
  std::vector<int> tally(std::span<const double> x) const;

  const std::vector<TreeModel>& trees() const noexcept { return trees_; }
  const ForestParams& params() const noexcept { return params_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::uint64_t>& tree_seeds() const noexcept { return tree_seeds_; }
  std::size_t n_trees() const noexcept { return trees_.size(); }
  int n_classes() const noexcept;
  std::size_t n_features() const noexcept;

private:
  std::vector<TreeModel> trees_;
  ForestParams params_;
  std::uint64_t seed_ = 0;
  std::vector<std::uint64_t> tree_seeds_;
};

ForestModel train_forest(const LabeledVectors& data, const ForestParams& params, std::uint64_t seed);

// k-nearest-neighbours on min-max scaled features, Euclidean distance.
class KnnModel {
public:
  KnnModel() = default;
  KnnModel(const LabeledVectors& train, int k);
  KnnModel(std::vector<double> mins, std::vector<double> maxs, LabeledVectors scaled, int k);

  int predict(std::span<const double> x) const;
  std::vector<double> scale(std::span<const double> x) const;

  int k() const noexcept { return k_; }
  const std::vector<double>& mins() const noexcept { return mins_; }
  const std::vector<double>& maxs() const noexcept { return maxs_; }
  const LabeledVectors& scaled_train() const noexcept { return train_; }
  std::size_t n_features() const noexcept { return train_.dim(); }
  int n_classes() const noexcept { return train_.n_classes(); }

private:
  std::vector<double> mins_;
  std::vector<double> maxs_;
  LabeledVectors train_;
  int k_ = 5;
};

int knn_predict(const KnnModel& model, std::span<const double> x);

// SAMME multi-class AdaBoost over depth-1 trees.
class AdaBoostModel {
public:
  AdaBoostModel() = default;
  AdaBoostModel(std::vector<TreeModel> stumps, std::vector<double> alphas, int n_classes);

  int predict(std::span<const double> x) const;

  const std::vector<TreeModel>& stumps() const noexcept { return stumps_; }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  int n_classes() const noexcept { return n_classes_; }
  std::size_t n_features() const noexcept;

private:
  std::vector<TreeModel> stumps_;
  std::vector<double> alphas_;
  int n_classes_ = 0;
};

AdaBoostModel train_adaboost(const LabeledVectors& data, int rounds);
int adaboost_predict(const AdaBoostModel& model, std::span<const double> x);

enum class Algorithm { DecisionTree, RandomForest, Knn, AdaBoost };

std::string_view to_string(Algorithm a) noexcept;
Algorithm parse_algorithm(std::string_view name);

using Model = std::variant<TreeModel, ForestModel, KnnModel, AdaBoostModel>;

Algorithm algorithm_of(const Model& m) noexcept;
std::size_t model_features(const Model& m) noexcept;
int model_classes(const Model& m) noexcept;

// Dimension-checked prediction for any model kind.
int predict(const Model& m, std::span<const double> x);
TrafficClass predict_class(const Model& m, const FeatureVector& x);

// Versioned JSON text format.
inline constexpr int kModelFormatVersion = 1;
void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
std::string model_to_json(const Model& m);
Model model_from_json(const std::string& text);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

// F1 = 2RP / (R + P); 0 when both are 0.
double f1_score(double precision, double recall) noexcept;

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(int n_classes);

  void add(int truth, int predicted, std::uint64_t count = 1);
  std::uint64_t at(int truth, int predicted) const;
  int n_classes() const noexcept { return k_; }
  std::uint64_t total() const noexcept;
  std::uint64_t row_sum(int truth) const;
  std::uint64_t col_sum(int predicted) const;

  // Zero denominators yield 0.
  ClassMetrics class_metrics(int c) const;
  std::vector<ClassMetrics> all_metrics() const;
  double accuracy() const;
  double macro_f1() const;

  // Five-class matrix folded onto {Benign, Attack} by category_of.
  ConfusionMatrix collapse_binary() const;

  bool operator==(const ConfusionMatrix&) const = default;

private:
  int k_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int n_classes);

} // namespace ranids::ml
