#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotica/grid.hpp"
#include "cotica/model.hpp"

namespace cotica {

struct IcwlConfig {
  double weight_exponent = 3.0;    // sharpness of the difficulty weighting
  double confidence_decay = 0.999; // temporal smoothing of per-class confidence
  bool use_augmented_views = true; // off: difficulty from the identity view only
  bool use_ema = true;             // off: difficulty tracks the current frame only

  // Whether the per-class confidence averages the class probability over all
  // pixels or only over pixels predicted as that class.
  enum class ClassMeanMode { kAllPixels, kPredictedPixels };
  ClassMeanMode class_mean_mode = ClassMeanMode::kAllPixels;

  void validate() const {
    if (!(weight_exponent >= 0.0))
      throw std::invalid_argument("IcwlConfig: weight exponent must be >= 0");
    if (!(confidence_decay >= 0.0 && confidence_decay <= 1.0))
      throw std::invalid_argument("IcwlConfig: confidence decay must be in [0,1]");
  }
};

inline IcwlConfig::ClassMeanMode parse_class_mean_mode(const std::string& s) {
  if (s == "all_pixels") return IcwlConfig::ClassMeanMode::kAllPixels;
  if (s == "predicted_pixels") return IcwlConfig::ClassMeanMode::kPredictedPixels;
  throw std::invalid_argument("unknown class mean mode: " + s);
}

inline const char* class_mean_mode_name(IcwlConfig::ClassMeanMode m) {
  return m == IcwlConfig::ClassMeanMode::kAllPixels ? "all_pixels" : "predicted_pixels";
}

// Smoothed per-class confidence, initialized to full confidence. Every update
// is a convex combination of values in [0,1], so entries stay in [0,1].
struct DifficultyState {
  std::vector<double> smoothed_confidence;
  long long step = 0;

  explicit DifficultyState(int classes) : smoothed_confidence(classes, 1.0) {}
  DifficultyState() = default;

  int classes() const { return static_cast<int>(smoothed_confidence.size()); }
};

// Mean class-c probability over all pixels of all given view predictions
// (already mapped to the original frame). In predicted-pixels mode the mean
// runs only over pixels whose argmax is c; a class never predicted reports
// full confidence 1, consistent with the all-ones initialization.
inline std::vector<double> class_confidence(std::span<const ProbMap> view_preds, int classes,
                                            IcwlConfig::ClassMeanMode mode =
                                                IcwlConfig::ClassMeanMode::kAllPixels) {
  if (view_preds.empty()) throw std::invalid_argument("class_confidence: no predictions");
  std::vector<double> sum(classes, 0.0);
  std::vector<long long> count(classes, 0);
  for (const ProbMap& pred : view_preds) {
    if (pred.channels() != classes)
      throw std::invalid_argument("class_confidence: class count mismatch");
    if (!pred.same_shape(view_preds.front()))
      throw std::invalid_argument("class_confidence: predictions must share the original frame");
    for (int y = 0; y < pred.height(); ++y) {
      for (int x = 0; x < pred.width(); ++x) {
        auto px = pred.pixel(y, x);
        if (mode == IcwlConfig::ClassMeanMode::kAllPixels) {
          for (int c = 0; c < classes; ++c) {
            sum[c] += px[c];
            count[c] += 1;
          }
        } else {
          int best = 0;
          for (int c = 1; c < classes; ++c)
            if (px[c] > px[best]) best = c;
          sum[best] += px[best];
          count[best] += 1;
        }
      }
    }
  }
  std::vector<double> mean(classes, 1.0);
  for (int c = 0; c < classes; ++c)
    if (count[c] > 0) mean[c] = sum[c] / static_cast<double>(count[c]);
  return mean;
}

// EMA of the smoothed confidence toward the current frame's class confidence;
// with use_ema off the state simply tracks the current frame.
inline void update_difficulty(DifficultyState& state, std::span<const double> class_conf,
                              const IcwlConfig& cfg) {
  cfg.validate();
  if (class_conf.size() != state.smoothed_confidence.size())
    throw std::invalid_argument("update_difficulty: class count mismatch");
  const double decay = cfg.confidence_decay;
  for (size_t c = 0; c < class_conf.size(); ++c) {
    state.smoothed_confidence[c] = cfg.use_ema
                                       ? decay * state.smoothed_confidence[c] +
                                             (1.0 - decay) * class_conf[c]
                                       : class_conf[c];
  }
  state.step += 1;
}

// Per-class loss weights (1 - smoothed confidence)^exponent. Exponent 0 gives
// all-ones weights (0^0 = 1), the exact unweighted ablation.
inline std::vector<double> loss_weights(const DifficultyState& state, double exponent) {
  if (!(exponent >= 0.0)) throw std::invalid_argument("loss_weights: exponent must be >= 0");
  std::vector<double> w(state.smoothed_confidence.size());
  for (size_t c = 0; c < w.size(); ++c)
    w[c] = std::pow(std::max(0.0, 1.0 - state.smoothed_confidence[c]), exponent);
  return w;
}

// Difficulty-weighted soft cross-entropy of the student against the refined
// pseudo label, with gradients; delegates to the shared backward pass.
inline BackwardResult weighted_consistency_loss(const HeadParams& student,
                                                const FeatureMap& feat, const ProbMap& pseudo,
                                                std::span<const double> weights) {
  return backward_weighted_ce(student, feat, pseudo, weights);
}

// Loss-only evaluation from an existing prediction (pixel mean).
inline double weighted_ce_value(const ProbMap& pred, const ProbMap& target,
                                std::span<const double> weights) {
  if (!pred.same_shape(target)) throw std::invalid_argument("weighted_ce_value: shape mismatch");
  const int C = pred.channels();
  double loss = 0.0;
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      auto p = pred.pixel(y, x);
      auto t = target.pixel(y, x);
      for (int c = 0; c < C; ++c) loss -= weights[c] * t[c] * std::log(p[c] + kLogEpsilon);
    }
  }
  return loss / (static_cast<double>(pred.height()) * pred.width());
}

// Per-pixel weighted loss values, exportable for heat-style analysis.
inline GridD weighted_loss_map(const ProbMap& pred, const ProbMap& target,
                               std::span<const double> weights) {
  if (!pred.same_shape(target)) throw std::invalid_argument("weighted_loss_map: shape mismatch");
  const int C = pred.channels();
  GridD out(pred.height(), pred.width(), 1);
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      auto p = pred.pixel(y, x);
      auto t = target.pixel(y, x);
      double v = 0.0;
      for (int c = 0; c < C; ++c) v -= weights[c] * t[c] * std::log(p[c] + kLogEpsilon);
      out(y, x) = v;
    }
  }
  return out;
}

}  // namespace cotica
