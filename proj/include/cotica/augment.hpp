#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cotica/grid.hpp"
#include "cotica/model.hpp"

namespace cotica {

// One geometric test-time view: bilinear rescale, then optional horizontal
// flip.
struct View {
  double scale = 1.0;
  bool flip = false;
};

using ViewSet = std::vector<View>;

inline bool is_identity(const View& v) { return v.scale == 1.0 && !v.flip; }

// Full product of the seven scale factors with {no-flip, flip}: 14 views,
// fixed order (scale-major, no-flip first). Deterministic by construction,
// unlike coin-flip augmentation.
inline ViewSet default_view_set() {
  static constexpr double scales[] = {0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
  ViewSet views;
  for (double s : scales) {
    views.push_back({s, false});
    views.push_back({s, true});
  }
  return views;
}

inline ViewSet identity_view_set() { return {View{1.0, false}}; }

inline Image apply_view(const Image& img, const View& v) {
  if (!(v.scale > 0.0)) throw std::invalid_argument("apply_view: scale must be positive");
  const int nh = static_cast<int>(std::llround(v.scale * img.height()));
  const int nw = static_cast<int>(std::llround(v.scale * img.width()));
  Image out = resize_bilinear(img, std::max(1, nh), std::max(1, nw));
  if (v.flip) out = hflip(out);
  return out;
}

// Maps a prediction made under a view back to the original frame: unflip,
// then probability-resize to the original dims.
inline ProbMap invert_view(const ProbMap& pred, const View& v, int orig_h, int orig_w) {
  ProbMap out = v.flip ? hflip(pred) : pred;
  return resize_prob(out, orig_h, orig_w);
}

// Teacher predictions for every view, each mapped back to the original frame.
inline std::vector<ProbMap> view_predictions(const HeadParams& teacher, const Image& img,
                                             const ViewSet& views) {
  if (views.empty()) throw std::invalid_argument("view_predictions: empty view set");
  std::vector<ProbMap> preds;
  preds.reserve(views.size());
  for (const View& v : views) {
    const Image transformed = apply_view(img, v);
    preds.push_back(
        invert_view(forward(teacher, extract_features(transformed)), v, img.height(), img.width()));
  }
  return preds;
}

// Elementwise mean over the views, accumulated strictly left to right in
// view-set order, then renormalized per pixel. A single prediction passes
// through untouched, so an identity-only view set reproduces the plain
// teacher forward bit-exactly.
inline ProbMap mean_prediction(const std::vector<ProbMap>& preds) {
  if (preds.empty()) throw std::invalid_argument("mean_prediction: no predictions");
  if (preds.size() == 1) return preds[0];
  ProbMap acc = preds[0];
  for (size_t i = 1; i < preds.size(); ++i) {
    if (!acc.same_shape(preds[i]))
      throw std::invalid_argument("mean_prediction: shape mismatch between views");
    for (size_t k = 0; k < acc.size(); ++k) acc.data()[k] += preds[i].data()[k];
  }
  const double inv_n = 1.0 / static_cast<double>(preds.size());
  const int C = acc.channels();
  for (int y = 0; y < acc.height(); ++y) {
    for (int x = 0; x < acc.width(); ++x) {
      auto px = acc.pixel(y, x);
      double sum = 0.0;
      for (int c = 0; c < C; ++c) {
        px[c] *= inv_n;
        sum += px[c];
      }
      for (int c = 0; c < C; ++c) px[c] /= sum;
    }
  }
  return acc;
}

// Augmentation-averaged teacher prediction over the view set.
inline ProbMap aug_mean_prediction(const HeadParams& teacher, const Image& img,
                                   const ViewSet& views) {
  return mean_prediction(view_predictions(teacher, img, views));
}

}  // namespace cotica
