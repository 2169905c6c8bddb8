#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotica/augment.hpp"
#include "cotica/grid.hpp"
#include "cotica/model.hpp"

namespace cotica {

enum class ModelRole { kTeacher, kStudent, kSource };

inline const char* model_role_name(ModelRole r) {
  switch (r) {
    case ModelRole::kTeacher: return "teacher";
    case ModelRole::kStudent: return "student";
    case ModelRole::kSource: return "source";
  }
  return "unknown";
}

inline ModelRole parse_model_role(const std::string& s) {
  if (s == "teacher") return ModelRole::kTeacher;
  if (s == "student") return ModelRole::kStudent;
  if (s == "source") return ModelRole::kSource;
  throw std::invalid_argument("unknown model role: " + s);
}

struct IcatConfig {
  double initial_threshold = 0.99;   // global threshold the per-class values blend toward
  double percentile_fraction = 0.2;  // rank fraction into the sorted confidence distribution
  double threshold_momentum = 0.9;   // weight of the global threshold in the blend

  // The rank index is either floor(fraction * n) or additionally scaled by
  // the initial threshold, floor(fraction * initial_threshold * n). The two
  // differ by at most one rank at high initial thresholds; both are exposed
  // because downstream results can be sensitive to off-by-one ranks.
  enum class IndexRule { kPlain, kScaled };
  IndexRule index_rule = IndexRule::kPlain;

  // Which model's prediction supplies the per-class confidence distributions
  // and which supplies the per-pixel mask lookup.
  ModelRole distribution_source = ModelRole::kTeacher;
  ModelRole mask_source = ModelRole::kSource;

  void validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(initial_threshold) || !in01(percentile_fraction) || !in01(threshold_momentum))
      throw std::invalid_argument("IcatConfig: threshold parameters must be in [0,1]");
  }
};

inline IcatConfig::IndexRule parse_index_rule(const std::string& s) {
  if (s == "plain") return IcatConfig::IndexRule::kPlain;
  if (s == "scaled") return IcatConfig::IndexRule::kScaled;
  throw std::invalid_argument("unknown index rule: " + s);
}

inline const char* index_rule_name(IcatConfig::IndexRule r) {
  return r == IcatConfig::IndexRule::kPlain ? "plain" : "scaled";
}

// Confidence values of the pixels predicted as one class, sorted descending.
// Empty when the class is absent from the instance.
struct ClassConfDist {
  int cls = 0;
  std::vector<double> values;
};

// Groups per-pixel confidences by predicted class. The multiset union over
// classes equals the multiset of all pixel confidences.
inline std::vector<ClassConfDist> class_conf_dists(const ConfLabelPair& pred, int classes) {
  std::vector<ClassConfDist> dists(classes);
  for (int c = 0; c < classes; ++c) dists[c].cls = c;
  for (size_t i = 0; i < pred.conf.size(); ++i) {
    const int c = pred.label.data()[i];
    if (c < 0 || c >= classes)
      throw std::invalid_argument("class_conf_dists: label out of range");
    dists[c].values.push_back(pred.conf.data()[i]);
  }
  for (auto& d : dists) std::sort(d.values.begin(), d.values.end(), std::greater<double>());
  return dists;
}

// Rank-based per-class threshold: the k-th value of the descending-sorted
// distribution, k = floor(fraction * n) (optionally scaled by the initial
// threshold), clamped to the last element. Empty distributions fall back to
// the initial threshold.
inline double percentile_threshold(const ClassConfDist& dist, const IcatConfig& cfg) {
  cfg.validate();
  if (dist.values.empty()) return cfg.initial_threshold;
  const double n = static_cast<double>(dist.values.size());
  const double scale =
      cfg.index_rule == IcatConfig::IndexRule::kScaled ? cfg.initial_threshold : 1.0;
  auto k = static_cast<long long>(std::floor(cfg.percentile_fraction * scale * n));
  k = std::clamp(k, 0ll, static_cast<long long>(dist.values.size()) - 1);
  return dist.values[static_cast<size_t>(k)];
}

// Convex blend of the global and instance-level thresholds.
inline double blend_threshold(double percentile_value, const IcatConfig& cfg) {
  return cfg.threshold_momentum * cfg.initial_threshold +
         (1.0 - cfg.threshold_momentum) * percentile_value;
}

// Per-instance threshold decisions and mask statistics, one entry per class.
struct ThresholdReport {
  std::vector<int64_t> dist_pixels;       // |P^c| in the distribution source
  std::vector<double> percentile_value;   // rank-selected confidence
  std::vector<double> threshold;          // blended per-class threshold
  std::vector<int64_t> mask_pixels;       // pixels whose mask-source label is c
  std::vector<int64_t> accepted_pixels;   // of those, confidence >= threshold

  explicit ThresholdReport(int classes)
      : dist_pixels(classes, 0),
        percentile_value(classes, 0.0),
        threshold(classes, 0.0),
        mask_pixels(classes, 0),
        accepted_pixels(classes, 0) {}
  ThresholdReport() = default;

  int classes() const { return static_cast<int>(threshold.size()); }

  // Fraction of a class's mask-source pixels that kept the direct teacher
  // prediction; -1 when the class has no mask pixels in this instance. The
  // complement is the augmentation-usage ratio.
  double acceptance_ratio(int c) const {
    return mask_pixels[c] > 0
               ? static_cast<double>(accepted_pixels[c]) / static_cast<double>(mask_pixels[c])
               : -1.0;
  }
};

// Thresholds for every class of one instance. Absent classes carry the
// initial threshold exactly (no blend round-off).
inline ThresholdReport compute_thresholds(const std::vector<ClassConfDist>& dists,
                                          const IcatConfig& cfg) {
  cfg.validate();
  ThresholdReport report(static_cast<int>(dists.size()));
  for (size_t c = 0; c < dists.size(); ++c) {
    report.dist_pixels[c] = static_cast<int64_t>(dists[c].values.size());
    if (dists[c].values.empty()) {
      report.percentile_value[c] = cfg.initial_threshold;
      report.threshold[c] = cfg.initial_threshold;
    } else {
      report.percentile_value[c] = percentile_threshold(dists[c], cfg);
      report.threshold[c] = blend_threshold(report.percentile_value[c], cfg);
    }
  }
  return report;
}

struct PseudoLabel {
  ProbMap target;  // valid ProbMap: direct teacher prediction where accepted
  GridB mask;      // 1 = confidence met the class threshold
};

// Per-pixel selection between the direct teacher prediction and the
// augmentation average. The threshold is looked up under the pixel's
// mask-source predicted class; mask statistics are recorded into the report.
inline PseudoLabel refine_pseudo_label(const ProbMap& teacher_pred, const ProbMap& aug_mean,
                                       const ConfLabelPair& mask_conf,
                                       ThresholdReport& report) {
  if (!teacher_pred.same_shape(aug_mean) || teacher_pred.height() != mask_conf.conf.height() ||
      teacher_pred.width() != mask_conf.conf.width())
    throw std::invalid_argument("refine_pseudo_label: shape mismatch");
  if (report.classes() != teacher_pred.channels())
    throw std::invalid_argument("refine_pseudo_label: class count mismatch");

  const int H = teacher_pred.height(), W = teacher_pred.width(), C = teacher_pred.channels();
  PseudoLabel out{ProbMap(H, W, C), GridB(H, W, 1)};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int cls = mask_conf.label(y, x);
      const bool accept = mask_conf.conf(y, x) >= report.threshold[cls];
      report.mask_pixels[cls] += 1;
      report.accepted_pixels[cls] += accept ? 1 : 0;
      out.mask(y, x) = accept ? 1 : 0;
      const ProbMap& src = accept ? teacher_pred : aug_mean;
      auto from = src.pixel(y, x);
      auto to = out.target.pixel(y, x);
      std::copy(from.begin(), from.end(), to.begin());
    }
  }
  return out;
}

// Identity forwards of the three model roles on one image, computed lazily so
// each role runs at most once per instance.
class RolePredictions {
 public:
  RolePredictions(const HeadParams& student, const HeadParams& teacher,
                  const HeadParams& source, const FeatureMap& feat)
      : student_(student), teacher_(teacher), source_(source), feat_(feat) {}

  const ProbMap& get(ModelRole role) {
    ProbMap& slot = cache_[static_cast<int>(role)];
    if (slot.empty()) slot = forward(params_of(role), feat_);
    return slot;
  }

  // Adopts a prediction computed elsewhere (e.g. the teacher forward shared
  // with the pseudo-label blend).
  void set(ModelRole role, const ProbMap& pred) { cache_[static_cast<int>(role)] = pred; }

 private:
  const HeadParams& params_of(ModelRole role) const {
    switch (role) {
      case ModelRole::kTeacher: return teacher_;
      case ModelRole::kStudent: return student_;
      case ModelRole::kSource: return source_;
    }
    throw std::logic_error("unreachable");
  }

  const HeadParams& student_;
  const HeadParams& teacher_;
  const HeadParams& source_;
  const FeatureMap& feat_;
  ProbMap cache_[3];
};

struct IcatResult {
  ProbMap pseudo;          // refined per-pixel soft target
  GridB mask;              // accepted = direct teacher prediction
  ThresholdReport report;
};

// Core thresholding step on precomputed predictions: distributions from the
// configured source, rank thresholds, blend, then the per-pixel selection.
inline IcatResult icat_from_predictions(const ProbMap& teacher_pred, const ProbMap& aug_mean,
                                        RolePredictions& roles, const IcatConfig& cfg) {
  const int C = teacher_pred.channels();
  const auto dist_pair = argmax_confidence(roles.get(cfg.distribution_source));
  ThresholdReport report = compute_thresholds(class_conf_dists(dist_pair, C), cfg);
  const auto mask_pair = cfg.mask_source == cfg.distribution_source
                             ? dist_pair
                             : argmax_confidence(roles.get(cfg.mask_source));
  PseudoLabel refined = refine_pseudo_label(teacher_pred, aug_mean, mask_pair, report);
  return {std::move(refined.target), std::move(refined.mask), std::move(report)};
}

// Full pipeline for one instance: identity forwards, augmentation-averaged
// teacher prediction, per-class thresholds, per-pixel blend. Pure function of
// its inputs.
inline IcatResult icat_step(const HeadParams& student, const HeadParams& teacher,
                            const HeadParams& source, const Image& img, const ViewSet& views,
                            const IcatConfig& cfg) {
  const FeatureMap feat = extract_features(img);
  RolePredictions roles(student, teacher, source, feat);
  const ProbMap& teacher_pred = roles.get(ModelRole::kTeacher);
  const ProbMap aug_mean = aug_mean_prediction(teacher, img, views);
  return icat_from_predictions(teacher_pred, aug_mean, roles, cfg);
}

}  // namespace cotica
