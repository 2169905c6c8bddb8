#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cotica/grid.hpp"

namespace cotica {

// Rows index ground truth, columns index prediction. Accumulation over frames
// is additive and order-independent.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int classes)
      : classes_(classes), counts_(static_cast<size_t>(classes) * classes, 0) {}

  int classes() const { return classes_; }
  int64_t at(int gt, int pred) const { return counts_[static_cast<size_t>(gt) * classes_ + pred]; }
  int64_t& at(int gt, int pred) { return counts_[static_cast<size_t>(gt) * classes_ + pred]; }

  void accumulate(const LabelMap& pred, const LabelMap& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
      throw std::invalid_argument("ConfusionMatrix::accumulate: shape mismatch");
    for (size_t i = 0; i < gt.size(); ++i) {
      at(gt.data()[i], pred.data()[i]) += 1;
    }
  }

  void merge(const ConfusionMatrix& other) {
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  }

  int64_t total() const {
    int64_t t = 0;
    for (int64_t v : counts_) t += v;
    return t;
  }

  const std::vector<int64_t>& counts() const { return counts_; }

 private:
  int classes_ = 0;
  std::vector<int64_t> counts_;
};

// Per-class intersection-over-union. Classes absent from both ground truth
// and prediction have no defined IoU and are reported as NaN.
inline std::vector<double> iou_per_class(const ConfusionMatrix& cm) {
  const int C = cm.classes();
  std::vector<double> iou(C, std::nan(""));
  for (int c = 0; c < C; ++c) {
    int64_t row = 0, col = 0;
    for (int k = 0; k < C; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const int64_t inter = cm.at(c, c);
    const int64_t uni = row + col - inter;
    if (uni > 0) iou[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return iou;
}

// Mean IoU over classes present in ground truth or prediction.
inline double miou(const ConfusionMatrix& cm) {
  const auto iou = iou_per_class(cm);
  double sum = 0.0;
  int n = 0;
  for (double v : iou) {
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) throw std::runtime_error("miou: no class present in ground truth or prediction");
  return sum / n;
}

// Overall pixel accuracy: diagonal mass over total mass.
inline double pixel_accuracy(const ConfusionMatrix& cm) {
  const int64_t t = cm.total();
  if (t == 0) throw std::runtime_error("pixel_accuracy: empty confusion matrix");
  int64_t diag = 0;
  for (int c = 0; c < cm.classes(); ++c) diag += cm.at(c, c);
  return static_cast<double>(diag) / static_cast<double>(t);
}

struct SpearmanResult {
  double rho = 0.0;
  bool degenerate = false;  // one of the inputs had zero rank variance
};

namespace detail {

// Fractional (tie-averaged) ranks.
inline std::vector<double> ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace detail

// Spearman rank correlation with tie-averaged ranks. Degenerate inputs
// (constant ranks on either side) are reported as rho = 0 with a flag rather
// than NaN so downstream CSVs stay numeric.
inline SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: size mismatch");
  if (xs.size() < 3) throw std::invalid_argument("spearman: need at least 3 points");
  const auto rx = detail::ranks(xs);
  const auto ry = detail::ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {sxy / std::sqrt(sxx * syy), false};
}

}  // namespace cotica
