#include "ranids/ml.hpp"

#include "ranids/error.hpp"
#include "ranids/traffic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace ranids::ml {

void LabeledVectors::add(std::span<const double> x, int label) {
  if (x.size() != dim_) {
    fail(ErrorKind::InvalidArgument, "vector has " + std::to_string(x.size()) +
                                         " features, expected " + std::to_string(dim_));
  }
  if (label < 0 || label >= n_classes_) {
    fail(ErrorKind::InvalidArgument, "label " + std::to_string(label) + " out of range");
  }
  values_.insert(values_.end(), x.begin(), x.end());
  labels_.push_back(label);
}

LabeledVectors to_vectors(const std::vector<LabeledSample>& samples) {
  LabeledVectors out(kNumFeatures, kNumClasses);
  for (const auto& s : samples) {
    const FeatureVector f = feature_vector(s.sample);
    out.add(f, class_index(s.label));
  }
  return out;
}

double gini(std::span<const double> class_counts) {
  double total = 0.0;
  for (double c : class_counts) {
    if (c < 0.0) fail(ErrorKind::InvalidArgument, "gini: negative class count");
    total += c;
  }
  if (!(total > 0.0)) fail(ErrorKind::InvalidArgument, "gini: class counts sum to zero");
  double sum_sq = 0.0;
  for (double c : class_counts) {
    const double p = c / total;
    sum_sq += p * p;
  }
  return std::max(0.0, 1.0 - sum_sq);
}

namespace {

int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

class TreeBuilder {
public:
  TreeBuilder(const LabeledVectors& data, const TreeParams& params, std::span<const double> weights,
              std::uint64_t seed)
      : data_(data), params_(params), weights_(weights), rng_(seed),
        k_(data.n_classes()), dim_(data.dim()) {
    features_.resize(dim_);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    scratch_.reserve(data.size());
  }

  std::vector<TreeNode> build(std::vector<std::uint32_t> indices) {
    indices_ = std::move(indices);
    grow(0, indices_.size(), 0);
    return std::move(nodes_);
  }

private:
  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double impurity = 0.0;
    bool found = false;
  };

  struct Entry {
    double value;
    int label;
    double weight;
  };

  double weight_of(std::uint32_t i) const { return weights_.empty() ? 1.0 : weights_[i]; }

  int grow(std::size_t begin, std::size_t end, int depth) {
    const int node_id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t n = end - begin;
    nodes_[node_id].n_samples = static_cast<int>(n);

    std::vector<double> counts(static_cast<std::size_t>(k_), 0.0);
    for (std::size_t i = begin; i < end; ++i) counts[data_.label(indices_[i])] += weight_of(indices_[i]);
    const int nonzero = static_cast<int>(std::count_if(counts.begin(), counts.end(),
                                                       [](double c) { return c > 0.0; }));

    const bool can_split = depth < params_.max_depth &&
                           n >= static_cast<std::size_t>(std::max(2, params_.min_samples_split)) &&
                           nonzero > 1;
    Split split;
    if (can_split) split = best_split(begin, end);
    if (!split.found) {
      nodes_[node_id].class_counts = std::move(counts);
      return node_id;
    }

    auto mid_it = std::stable_partition(
        indices_.begin() + static_cast<std::ptrdiff_t>(begin),
        indices_.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::uint32_t i) { return data_.at(i, split.feature) <= split.threshold; });
    const std::size_t mid = static_cast<std::size_t>(mid_it - indices_.begin());

    nodes_[node_id].feature = static_cast<int>(split.feature);
    nodes_[node_id].threshold = split.threshold;
    const int left = grow(begin, mid, depth + 1);
    const int right = grow(mid, end, depth + 1);
    nodes_[node_id].left = left;
    nodes_[node_id].right = right;
    return node_id;
  }

  std::vector<std::size_t> candidate_features() {
    const int mf = params_.max_features;
    if (mf <= 0 || static_cast<std::size_t>(mf) >= dim_) return features_;
    std::vector<std::size_t> pool = features_;
    for (int i = 0; i < mf; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), dim_ - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng_)]);
    }
    pool.resize(static_cast<std::size_t>(mf));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  Split best_split(std::size_t begin, std::size_t end) {
    const std::size_t n = end - begin;
    const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, params_.min_samples_leaf));
    Split best;
    std::vector<double> left(static_cast<std::size_t>(k_));
    std::vector<double> total(static_cast<std::size_t>(k_), 0.0);
    double total_w = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      total[data_.label(indices_[i])] += weight_of(indices_[i]);
      total_w += weight_of(indices_[i]);
    }
    const double eps = 1e-12 * std::max(1.0, total_w);

    for (std::size_t f : candidate_features()) {
      scratch_.clear();
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t s = indices_[i];
        scratch_.push_back({data_.at(s, f), data_.label(s), weight_of(s)});
      }
      std::sort(scratch_.begin(), scratch_.end(),
                [](const Entry& a, const Entry& b) { return a.value < b.value; });
      if (scratch_.front().value == scratch_.back().value) continue;

      std::fill(left.begin(), left.end(), 0.0);
      double left_w = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left[scratch_[i].label] += scratch_[i].weight;
        left_w += scratch_[i].weight;
        if (scratch_[i].value == scratch_[i + 1].value) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;

        const double right_w = total_w - left_w;
        double sq_l = 0.0;
        double sq_r = 0.0;
        for (int c = 0; c < k_; ++c) {
          const double r = total[c] - left[c];
          sq_l += left[c] * left[c];
          sq_r += r * r;
        }
        double impurity = 0.0;
        if (left_w > 0.0) impurity += left_w - sq_l / left_w;
        if (right_w > 0.0) impurity += right_w - sq_r / right_w;

        if (!best.found || impurity < best.impurity - eps) {
          const double a = scratch_[i].value;
          const double b = scratch_[i + 1].value;
          double t = a + (b - a) / 2.0;
          if (!(t < b)) t = a;
          best = {f, t, impurity, true};
        }
      }
    }
    return best;
  }

  const LabeledVectors& data_;
  const TreeParams& params_;
  std::span<const double> weights_;
  Rng rng_;
  int k_;
  std::size_t dim_;
  std::vector<std::size_t> features_;
  std::vector<std::uint32_t> indices_;
  std::vector<Entry> scratch_;
  std::vector<TreeNode> nodes_;
};

void check_params(const TreeParams& p) {
  if (p.max_depth < 0) fail(ErrorKind::InvalidArgument, "max_depth must be >= 0");
  if (p.min_samples_split < 2) fail(ErrorKind::InvalidArgument, "min_samples_split must be >= 2");
  if (p.min_samples_leaf < 1) fail(ErrorKind::InvalidArgument, "min_samples_leaf must be >= 1");
  if (p.max_features < 0) fail(ErrorKind::InvalidArgument, "max_features must be >= 0");
}

void check_dim(std::size_t expected, std::span<const double> x) {
  if (x.size() != expected) {
    fail(ErrorKind::InvalidArgument, "dimension mismatch: got " + std::to_string(x.size()) +
                                         " features, model expects " + std::to_string(expected));
  }
}

} // namespace

TreeModel::TreeModel(std::vector<TreeNode> nodes, TreeParams params, std::size_t n_features,
                     int n_classes)
    : nodes_(std::move(nodes)), params_(params), n_features_(n_features), n_classes_(n_classes) {
  if (nodes_.empty()) fail(ErrorKind::Model, "tree has no nodes");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TreeNode& nd = nodes_[i];
    const int size = static_cast<int>(nodes_.size());
    if (nd.is_leaf()) {
      if (nd.class_counts.size() != static_cast<std::size_t>(n_classes_)) {
        fail(ErrorKind::Model, "leaf " + std::to_string(i) + " has wrong class count size");
      }
    } else if (nd.feature >= static_cast<int>(n_features_) || nd.left <= static_cast<int>(i) ||
               nd.right <= static_cast<int>(i) || nd.left >= size || nd.right >= size) {
      fail(ErrorKind::Model, "node " + std::to_string(i) + " is malformed");
    }
  }
}

int TreeModel::leaf_index(std::span<const double> x) const {
  check_dim(n_features_, x);
  int i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& nd = nodes_[i];
    i = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
  }
  return i;
}

int TreeModel::predict(std::span<const double> x) const {
  return argmax_lowest(nodes_[leaf_index(x)].class_counts);
}

int TreeModel::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int max_d = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    max_d = std::max(max_d, d[i]);
    if (!nodes_[i].is_leaf()) {
      d[nodes_[i].left] = d[i] + 1;
      d[nodes_[i].right] = d[i] + 1;
    }
  }
  return max_d;
}

std::size_t TreeModel::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

TreeModel train_tree_on(const LabeledVectors& data, std::span<const std::uint32_t> indices,
                        const TreeParams& params, std::span<const double> weights,
                        std::uint64_t seed) {
  check_params(params);
  if (data.empty() || indices.empty()) fail(ErrorKind::InvalidArgument, "cannot train on empty data");
  if (!weights.empty() && weights.size() != data.size()) {
    fail(ErrorKind::InvalidArgument, "weights size does not match data");
  }
  TreeBuilder builder(data, params, weights, seed);
  auto nodes = builder.build(std::vector<std::uint32_t>(indices.begin(), indices.end()));
  return TreeModel(std::move(nodes), params, data.dim(), data.n_classes());
}

TreeModel train_tree(const LabeledVectors& data, const TreeParams& params,
                     std::span<const double> weights, std::uint64_t seed) {
  if (data.empty()) fail(ErrorKind::InvalidArgument, "cannot train on empty data");
  std::vector<std::uint32_t> all(data.size());
  std::iota(all.begin(), all.end(), 0U);
  return train_tree_on(data, all, params, weights, seed);
}

ForestModel::ForestModel(std::vector<TreeModel> trees, ForestParams params, std::uint64_t seed,
                         std::vector<std::uint64_t> tree_seeds)
    : trees_(std::move(trees)), params_(params), seed_(seed), tree_seeds_(std::move(tree_seeds)) {
  if (trees_.empty()) fail(ErrorKind::Model, "forest has no trees");
  for (const auto& t : trees_) {
    if (t.n_features() != trees_.front().n_features() || t.n_classes() != trees_.front().n_classes()) {
      fail(ErrorKind::Model, "forest trees disagree on shape");
    }
  }
  params_.n_trees = static_cast<int>(trees_.size());
}

int ForestModel::n_classes() const noexcept { return trees_.empty() ? 0 : trees_.front().n_classes(); }
std::size_t ForestModel::n_features() const noexcept {
  return trees_.empty() ? 0 : trees_.front().n_features();
}

std::vector<int> ForestModel::tally(std::span<const double> x) const {
  std::vector<int> votes(static_cast<std::size_t>(n_classes()), 0);
  for (const auto& t : trees_) ++votes[static_cast<std::size_t>(t.predict(x))];
  return votes;
}

int ForestModel::predict(std::span<const double> x) const {
  const auto votes = tally(x);
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

ForestModel train_forest(const LabeledVectors& data, const ForestParams& params, std::uint64_t seed) {
  if (params.n_trees < 1) fail(ErrorKind::InvalidArgument, "n_trees must be >= 1");
  if (data.empty()) fail(ErrorKind::InvalidArgument, "cannot train on empty data");
  check_params(params.tree);

  TreeParams tp = params.tree;
  tp.max_features = params.max_features > 0
                        ? params.max_features
                        : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(data.dim()))));

  const auto n_trees = static_cast<std::size_t>(params.n_trees);
  std::vector<std::uint64_t> seeds(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) seeds[t] = mix_seed(seed, t);

  std::vector<TreeModel> trees(n_trees);
  auto train_one = [&](std::size_t t) {
    std::vector<std::uint32_t> idx(data.size());
    if (params.bootstrap) {
      Rng rng(seeds[t]);
      std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(data.size() - 1));
      for (auto& i : idx) i = pick(rng);
    } else {
      std::iota(idx.begin(), idx.end(), 0U);
    }
    trees[t] = train_tree_on(data, idx, tp, {}, mix_seed(seeds[t], 1));
  };

  unsigned threads = params.threads ? params.threads : std::max(1U, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n_trees));
  if (threads <= 1) {
    for (std::size_t t = 0; t < n_trees; ++t) train_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t t = next++; t < n_trees; t = next++) train_one(t);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  ForestParams stored = params;
  stored.max_features = tp.max_features;
  return ForestModel(std::move(trees), stored, seed, std::move(seeds));
}

KnnModel::KnnModel(const LabeledVectors& train, int k) : k_(k) {
  if (train.empty()) fail(ErrorKind::InvalidArgument, "kNN needs training data");
  if (k < 1) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  if (static_cast<std::size_t>(k) > train.size()) {
    fail(ErrorKind::InvalidArgument, "k (" + std::to_string(k) + ") exceeds training size (" +
                                         std::to_string(train.size()) + ")");
  }
  const std::size_t d = train.dim();
  mins_.assign(d, 0.0);
  maxs_.assign(d, 0.0);
  for (std::size_t f = 0; f < d; ++f) {
    double lo = train.at(0, f);
    double hi = lo;
    for (std::size_t i = 1; i < train.size(); ++i) {
      lo = std::min(lo, train.at(i, f));
      hi = std::max(hi, train.at(i, f));
    }
    mins_[f] = lo;
    maxs_[f] = hi;
  }
  train_ = LabeledVectors(d, train.n_classes());
  for (std::size_t i = 0; i < train.size(); ++i) train_.add(scale(train.row(i)), train.label(i));
}

KnnModel::KnnModel(std::vector<double> mins, std::vector<double> maxs, LabeledVectors scaled, int k)
    : mins_(std::move(mins)), maxs_(std::move(maxs)), train_(std::move(scaled)), k_(k) {
  if (mins_.size() != train_.dim() || maxs_.size() != train_.dim()) {
    fail(ErrorKind::Model, "kNN scaler does not match training dimension");
  }
  if (k_ < 1 || static_cast<std::size_t>(k_) > train_.size()) {
    fail(ErrorKind::Model, "kNN k out of range for stored training set");
  }
}

std::vector<double> KnnModel::scale(std::span<const double> x) const {
  check_dim(mins_.size(), x);
  std::vector<double> out(x.size());
  for (std::size_t f = 0; f < x.size(); ++f) {
    const double range = maxs_[f] - mins_[f];
    out[f] = range > 0.0 ? (x[f] - mins_[f]) / range : 0.0;
  }
  return out;
}

int KnnModel::predict(std::span<const double> x) const {
  const std::vector<double> q = scale(x);
  const std::size_t n = train_.size();
  std::vector<std::pair<double, std::uint32_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = train_.row(i);
    double d2 = 0.0;
    for (std::size_t f = 0; f < q.size(); ++f) {
      const double diff = r[f] - q[f];
      d2 += diff * diff;
    }
    dist[i] = {d2, static_cast<std::uint32_t>(i)};
  }
  const auto k = static_cast<std::size_t>(k_);
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
  std::vector<int> votes(static_cast<std::size_t>(train_.n_classes()), 0);
  for (std::size_t i = 0; i < k; ++i) ++votes[static_cast<std::size_t>(train_.label(dist[i].second))];
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

int knn_predict(const KnnModel& model, std::span<const double> x) { return model.predict(x); }

AdaBoostModel::AdaBoostModel(std::vector<TreeModel> stumps, std::vector<double> alphas, int n_classes)
    : stumps_(std::move(stumps)), alphas_(std::move(alphas)), n_classes_(n_classes) {
  if (stumps_.empty() || stumps_.size() != alphas_.size()) {
    fail(ErrorKind::Model, "AdaBoost model needs one weight per stump");
  }
}

std::size_t AdaBoostModel::n_features() const noexcept {
  return stumps_.empty() ? 0 : stumps_.front().n_features();
}

int AdaBoostModel::predict(std::span<const double> x) const {
  std::vector<double> score(static_cast<std::size_t>(n_classes_), 0.0);
  for (std::size_t m = 0; m < stumps_.size(); ++m) {
    score[static_cast<std::size_t>(stumps_[m].predict(x))] += alphas_[m];
  }
  return argmax_lowest(score);
}

int adaboost_predict(const AdaBoostModel& model, std::span<const double> x) { return model.predict(x); }

AdaBoostModel train_adaboost(const LabeledVectors& data, int rounds) {
  if (rounds < 1) fail(ErrorKind::InvalidArgument, "rounds must be >= 1");
  if (data.empty()) fail(ErrorKind::InvalidArgument, "cannot train on empty data");
  const std::size_t n = data.size();
  const int k = data.n_classes();
  std::vector<double> w(n, 1.0 / static_cast<double>(n));

  TreeParams stump;
  stump.max_depth = 1;
  stump.min_samples_split = 2;
  stump.min_samples_leaf = 1;

  std::vector<TreeModel> stumps;
  std::vector<double> alphas;
  std::vector<char> miss(n);
  for (int m = 0; m < rounds; ++m) {
    TreeModel h = train_tree(data, stump, w);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      miss[i] = h.predict(data.row(i)) != data.label(i);
      if (miss[i]) err += w[i];
    }
    if (err >= 1.0 - 1.0 / k) {
      if (stumps.empty()) {
        stumps.push_back(std::move(h));
        alphas.push_back(1.0);
      }
      break;
    }
    if (err <= 0.0) {
      stumps.push_back(std::move(h));
      alphas.push_back(1.0);
      break;
    }
    const double alpha = std::log((1.0 - err) / err) + std::log(static_cast<double>(k - 1));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (miss[i]) w[i] *= std::exp(alpha);
      sum += w[i];
    }
    for (auto& wi : w) wi /= sum;
    stumps.push_back(std::move(h));
    alphas.push_back(alpha);
  }
  return AdaBoostModel(std::move(stumps), std::move(alphas), k);
}

std::string_view to_string(Algorithm a) noexcept {
  switch (a) {
  case Algorithm::DecisionTree: return "dt";
  case Algorithm::RandomForest: return "rf";
  case Algorithm::Knn: return "knn";
  case Algorithm::AdaBoost: return "ada";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "dt") return Algorithm::DecisionTree;
  if (name == "rf") return Algorithm::RandomForest;
  if (name == "knn") return Algorithm::Knn;
  if (name == "ada") return Algorithm::AdaBoost;
  fail(ErrorKind::InvalidArgument, "unknown algorithm '" + std::string(name) + "' (dt, rf, knn, ada)");
}

Algorithm algorithm_of(const Model& m) noexcept {
  return static_cast<Algorithm>(m.index());
}

std::size_t model_features(const Model& m) noexcept {
  return std::visit([](const auto& x) { return x.n_features(); }, m);
}

int model_classes(const Model& m) noexcept {
  return std::visit([](const auto& x) { return x.n_classes(); }, m);
}

int predict(const Model& m, std::span<const double> x) {
  check_dim(model_features(m), x);
  return std::visit([&](const auto& model) { return model.predict(x); }, m);
}

TrafficClass predict_class(const Model& m, const FeatureVector& x) {
  return class_from_index(predict(m, x));
}

} // namespace ranids::ml
