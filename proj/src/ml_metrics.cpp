#include "ranids/ml.hpp"

#include "ranids/error.hpp"

namespace ranids::ml {

double f1_score(double precision, double recall) noexcept {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * recall * precision / denom : 0.0;
}

ConfusionMatrix::ConfusionMatrix(int n_classes) : k_(n_classes) {
  if (n_classes < 1) fail(ErrorKind::InvalidArgument, "confusion matrix needs >= 1 class");
  counts_.assign(static_cast<std::size_t>(k_ * k_), 0);
}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t count) {
  if (truth < 0 || truth >= k_ || predicted < 0 || predicted >= k_) {
    fail(ErrorKind::InvalidArgument, "confusion matrix index out of range");
  }
  counts_[static_cast<std::size_t>(truth * k_ + predicted)] += count;
}

std::uint64_t ConfusionMatrix::at(int truth, int predicted) const {
  if (truth < 0 || truth >= k_ || predicted < 0 || predicted >= k_) {
    fail(ErrorKind::InvalidArgument, "confusion matrix index out of range");
  }
  return counts_[static_cast<std::size_t>(truth * k_ + predicted)];
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t s = 0;
  for (int p = 0; p < k_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int predicted) const {
  std::uint64_t s = 0;
  for (int t = 0; t < k_; ++t) s += at(t, predicted);
  return s;
}

ClassMetrics ConfusionMatrix::class_metrics(int c) const {
  const double tp = static_cast<double>(at(c, c));
  const auto predicted = col_sum(c);
  const auto actual = row_sum(c);
  ClassMetrics m;
  m.precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
  m.recall = actual > 0 ? tp / static_cast<double>(actual) : 0.0;
  m.f1 = f1_score(m.precision, m.recall);
  m.support = actual;
  return m;
}

std::vector<ClassMetrics> ConfusionMatrix::all_metrics() const {
  std::vector<ClassMetrics> out;
  for (int c = 0; c < k_; ++c) out.push_back(class_metrics(c));
  return out;
}

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  if (t == 0) return 0.0;
  std::uint64_t diag = 0;
  for (int c = 0; c < k_; ++c) diag += at(c, c);
  return static_cast<double>(diag) / static_cast<double>(t);
}

double ConfusionMatrix::macro_f1() const {
  double s = 0.0;
  for (int c = 0; c < k_; ++c) s += class_metrics(c).f1;
  return s / k_;
}

ConfusionMatrix ConfusionMatrix::collapse_binary() const {
  if (k_ != kNumClasses) fail(ErrorKind::InvalidArgument, "binary collapse needs a 5-class matrix");
  ConfusionMatrix out(kNumCategories);
  for (int t = 0; t < k_; ++t) {
    for (int p = 0; p < k_; ++p) {
      const int bt = static_cast<int>(category_of(class_from_index(t)));
      const int bp = static_cast<int>(category_of(class_from_index(p)));
      out.add(bt, bp, at(t, p));
    }
  }
  return out;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int n_classes) {
  if (truth.size() != predicted.size()) {
    fail(ErrorKind::InvalidArgument, "truth and prediction lengths differ");
  }
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

} // namespace ranids::ml
