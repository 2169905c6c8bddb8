#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotica/augment.hpp"
#include "cotica/grid.hpp"
#include "cotica/icat.hpp"
#include "cotica/icwl.hpp"
#include "cotica/io.hpp"
#include "cotica/metrics.hpp"
#include "cotica/model.hpp"
#include "cotica/scene.hpp"

namespace cotica {

enum class MethodKind { kSource, kEntropy, kFixedThreshold, kCotica };

inline const char* method_name(MethodKind k) {
  switch (k) {
    case MethodKind::kSource: return "source";
    case MethodKind::kEntropy: return "entropy";
    case MethodKind::kFixedThreshold: return "fixed-threshold";
    case MethodKind::kCotica: return "cotica";
  }
  return "unknown";
}

inline MethodKind parse_method(const std::string& s) {
  if (s == "source") return MethodKind::kSource;
  if (s == "entropy") return MethodKind::kEntropy;
  if (s == "fixed-threshold") return MethodKind::kFixedThreshold;
  if (s == "cotica") return MethodKind::kCotica;
  throw std::invalid_argument("unknown method kind: " + s);
}

struct MethodSpec {
  MethodKind kind = MethodKind::kCotica;
  IcatConfig icat;
  IcwlConfig icwl;
  ViewSet views = default_view_set();
  double lr = 1e-3;
  double teacher_momentum = 0.999;
  double fixed_threshold = 0.99;  // per-class constant for kFixedThreshold
};

// Student/teacher pair plus the frozen source copy, the per-class difficulty
// tracker, and the optimizer moments: the full evolving state of one run.
struct AdaptState {
  HeadParams student;
  HeadParams teacher;
  HeadParams source;  // never changes after construction
  AdamState optimizer;
  DifficultyState difficulty;
  long long step = 0;

  AdaptState(const HeadParams& source_params, int classes)
      : student(source_params),
        teacher(source_params),
        source(source_params),
        optimizer(source_params),
        difficulty(classes) {}
  AdaptState() = default;
};

// Everything measured about one frame, recorded before the update step.
struct RunRecord {
  int frame = 0;
  int round = 0;
  DomainKind domain = DomainKind::kClean;
  double loss = 0.0;
  double frame_miou = 0.0;
  std::vector<double> iou;                  // per class; NaN = absent this frame
  std::vector<double> acceptance;           // per class; -1 = no mask pixels / no mask
  std::vector<double> smoothed_confidence;  // difficulty tracker snapshot
  std::vector<double> loss_weights_used;    // per class; NaN for unweighted methods
  ConfusionMatrix confusion;                // per-frame counts, rebuildable rollups
  double wall_ms = 0.0;  // informational only; excluded from the CSV so reruns are byte-identical
};

// Per-frame artifacts handed to an optional observer (mask equality checks,
// loss-map export).
struct FrameArtifacts {
  const StreamFrame* frame = nullptr;
  const ProbMap* student_pred = nullptr;
  const ProbMap* pseudo = nullptr;          // null for source/entropy
  const GridB* mask = nullptr;              // null for source/entropy
  const ThresholdReport* report = nullptr;  // null for source/entropy
  std::span<const double> weights;
  double loss = 0.0;
};

using FrameObserver = std::function<void(const FrameArtifacts&)>;

struct AdaptResult {
  std::vector<RunRecord> records;      // one per stream frame, in stream order
  std::vector<ThresholdReport> reports;  // per frame, for threshold-kind methods
  AdaptState state;
};

namespace detail {

inline RunRecord evaluate_frame(const StreamFrame& frame, const ProbMap& student_pred,
                                int classes) {
  RunRecord rec;
  rec.frame = frame.global_index;
  rec.round = frame.round;
  rec.domain = frame.domain;
  rec.confusion = ConfusionMatrix(classes);
  rec.confusion.accumulate(argmax_confidence(student_pred).label, frame.labels);
  rec.iou = iou_per_class(rec.confusion);
  rec.frame_miou = miou(rec.confusion);
  rec.acceptance.assign(classes, -1.0);
  rec.loss_weights_used.assign(classes, std::nan(""));
  return rec;
}

}  // namespace detail

// The online adaptation loop: for every frame, in order,
//   (a) evaluate the current student prediction against ground truth,
//   (b) build the method's pseudo label,
//   (c) one optimizer step on the student,
//   (d) teacher EMA update,
//   (e) difficulty update when the weighted loss is active.
// Evaluation strictly precedes the update (predict-then-adapt); ground truth
// feeds only step (a), never the adaptation itself. kSource skips (b)-(e);
// kEntropy has no teacher and skips (d)-(e).
inline AdaptResult adapt_stream(const DomainStream& stream, const HeadParams& source_params,
                                const MethodSpec& method, const FrameObserver& observer = {}) {
  if (stream.frames.empty()) throw std::invalid_argument("adapt_stream: empty stream");
  if (!source_params.all_finite())
    throw std::invalid_argument("adapt_stream: source parameters not finite");
  method.icat.validate();
  method.icwl.validate();

  const int classes = stream.class_count;
  AdaptResult out{{}, {}, AdaptState(source_params, classes)};
  AdaptState& st = out.state;
  const AdamConfig adam{method.lr};
  const std::vector<double> ones(static_cast<size_t>(classes), 1.0);

  const bool thresholded =
      method.kind == MethodKind::kFixedThreshold || method.kind == MethodKind::kCotica;
  IcatConfig icat_cfg = method.icat;
  if (method.kind == MethodKind::kFixedThreshold) {
    // Constant per-class threshold: full momentum pins the blend to the
    // configured value, reusing the exact same pipeline.
    icat_cfg.initial_threshold = method.fixed_threshold;
    icat_cfg.threshold_momentum = 1.0;
  }

  for (const StreamFrame& frame : stream.frames) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const FeatureMap feat = extract_features(frame.image);
      const ProbMap student_pred = forward(st.student, feat);
      RunRecord rec = detail::evaluate_frame(frame, student_pred, classes);
      rec.smoothed_confidence = st.difficulty.smoothed_confidence;

      FrameArtifacts artifacts;
      artifacts.frame = &frame;
      artifacts.student_pred = &student_pred;

      ProbMap pseudo;
      GridB mask;
      ThresholdReport report;
      std::vector<double> weights;

      switch (method.kind) {
        case MethodKind::kSource:
          break;
        case MethodKind::kEntropy: {
          BackwardResult res = backward_entropy(st.student, feat);
          rec.loss = res.loss;
          if (!std::isfinite(res.loss)) throw std::runtime_error("non-finite loss");
          adam_step(st.student, res.grads, st.optimizer, adam);
          break;
        }
        case MethodKind::kFixedThreshold:
        case MethodKind::kCotica: {
          RolePredictions roles(st.student, st.teacher, st.source, feat);
          roles.set(ModelRole::kStudent, student_pred);
          const ProbMap& teacher_pred = roles.get(ModelRole::kTeacher);
          const std::vector<ProbMap> view_preds =
              view_predictions(st.teacher, frame.image, method.views);
          const ProbMap aug_mean = mean_prediction(view_preds);

          IcatResult icat = icat_from_predictions(teacher_pred, aug_mean, roles, icat_cfg);
          pseudo = std::move(icat.pseudo);
          mask = std::move(icat.mask);
          report = std::move(icat.report);

          if (method.kind == MethodKind::kCotica) {
            const std::vector<double> conf =
                method.icwl.use_augmented_views
                    ? class_confidence(view_preds, classes, method.icwl.class_mean_mode)
                    : class_confidence(std::span<const ProbMap>(&teacher_pred, 1), classes,
                                       method.icwl.class_mean_mode);
            update_difficulty(st.difficulty, conf, method.icwl);
            rec.smoothed_confidence = st.difficulty.smoothed_confidence;
            weights = loss_weights(st.difficulty, method.icwl.weight_exponent);
          } else {
            weights = ones;
          }

          rec.loss_weights_used = weights;
          BackwardResult res = weighted_consistency_loss(st.student, feat, pseudo, weights);
          rec.loss = res.loss;
          if (!std::isfinite(res.loss)) throw std::runtime_error("non-finite loss");
          adam_step(st.student, res.grads, st.optimizer, adam);
          ema_update(st.teacher, st.student, method.teacher_momentum);

          for (int c = 0; c < classes; ++c) rec.acceptance[c] = report.acceptance_ratio(c);
          artifacts.pseudo = &pseudo;
          artifacts.mask = &mask;
          artifacts.report = &report;
          artifacts.weights = weights;
          break;
        }
      }

      st.step += 1;
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count();
      artifacts.loss = rec.loss;
      if (observer) observer(artifacts);
      out.records.push_back(std::move(rec));
      if (thresholded) out.reports.push_back(std::move(report));
    } catch (const std::exception& e) {
      throw std::runtime_error("adapt_stream: frame " + std::to_string(frame.global_index) +
                               " (round " + std::to_string(frame.round) + ", " +
                               domain_name(frame.domain) + "): " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run record CSV, one row per frame. Wall time is deliberately not a column.

inline std::string run_records_csv_header(int classes) {
  std::string h = "method,seed,frame,round,domain,loss,miou";
  for (int c = 0; c < classes; ++c) h += ",iou_" + std::to_string(c);
  for (int c = 0; c < classes; ++c) h += ",accept_" + std::to_string(c);
  for (int c = 0; c < classes; ++c) h += ",conf_ema_" + std::to_string(c);
  for (int c = 0; c < classes; ++c) h += ",weight_" + std::to_string(c);
  for (int g = 0; g < classes; ++g)
    for (int p = 0; p < classes; ++p) h += ",cm_" + std::to_string(g) + "_" + std::to_string(p);
  return h + "\n";
}

inline std::string run_records_to_csv(const std::string& method, uint64_t seed,
                                      const std::vector<RunRecord>& records, int classes) {
  std::string out = run_records_csv_header(classes);
  for (const RunRecord& r : records) {
    out += method + "," + std::to_string(seed) + "," + std::to_string(r.frame) + "," +
           std::to_string(r.round) + "," + domain_name(r.domain) + "," +
           detail::fmt_double(r.loss) + "," + detail::fmt_double(r.frame_miou);
    for (int c = 0; c < classes; ++c) out += "," + detail::fmt_double(r.iou[c]);
    for (int c = 0; c < classes; ++c) out += "," + detail::fmt_double(r.acceptance[c]);
    for (int c = 0; c < classes; ++c)
      out += "," + detail::fmt_double(c < static_cast<int>(r.smoothed_confidence.size())
                                          ? r.smoothed_confidence[c]
                                          : 1.0);
    for (int c = 0; c < classes; ++c)
      out += "," + detail::fmt_double(c < static_cast<int>(r.loss_weights_used.size())
                                          ? r.loss_weights_used[c]
                                          : std::nan(""));
    for (int g = 0; g < classes; ++g)
      for (int p = 0; p < classes; ++p) out += "," + std::to_string(r.confusion.at(g, p));
    out += "\n";
  }
  return out;
}

inline std::string threshold_reports_csv_header() {
  return "method,seed,frame,round,domain,class,dist_pixels,percentile,threshold,mask_pixels,"
         "accepted,acceptance\n";
}

// One row per (frame, class) for threshold-kind methods.
inline std::string threshold_reports_to_csv(const std::string& method, uint64_t seed,
                                            const std::vector<RunRecord>& records,
                                            const std::vector<ThresholdReport>& reports) {
  std::string out = threshold_reports_csv_header();
  for (size_t i = 0; i < reports.size(); ++i) {
    const RunRecord& r = records[i];
    const ThresholdReport& t = reports[i];
    for (int c = 0; c < t.classes(); ++c) {
      out += method + "," + std::to_string(seed) + "," + std::to_string(r.frame) + "," +
             std::to_string(r.round) + "," + domain_name(r.domain) + "," + std::to_string(c) +
             "," + std::to_string(t.dist_pixels[c]) + "," +
             detail::fmt_double(t.percentile_value[c]) + "," +
             detail::fmt_double(t.threshold[c]) + "," + std::to_string(t.mask_pixels[c]) + "," +
             std::to_string(t.accepted_pixels[c]) + "," +
             detail::fmt_double(t.acceptance_ratio(c)) + "\n";
    }
  }
  return out;
}

}  // namespace cotica
