#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "cotica/adapt.hpp"
#include "cotica/augment.hpp"
#include "cotica/config.hpp"
#include "cotica/icat.hpp"
#include "cotica/icwl.hpp"
#include "cotica/model.hpp"
#include "cotica/rng.hpp"
#include "cotica/scene.hpp"

namespace cotica {
namespace verify_detail {

// Pointers to every parameter in the canonical w1,b1,w2,b2 order.
inline std::vector<double*> param_refs(HeadParams& p) {
  std::vector<double*> refs;
  refs.reserve(p.param_count());
  for (auto* vec : {&p.w1, &p.b1, &p.w2, &p.b2})
    for (double& v : *vec) refs.push_back(&v);
  return refs;
}

inline std::vector<double> flatten_grads(const HeadParams& g) {
  std::vector<double> out;
  out.reserve(g.param_count());
  for (const auto* vec : {&g.w1, &g.b1, &g.w2, &g.b2})
    for (double v : *vec) out.push_back(v);
  return out;
}

// Central finite differences of an arbitrary scalar loss in parameter space.
inline std::vector<double> fd_gradient(HeadParams params,
                                       const std::function<double(const HeadParams&)>& loss,
                                       double h = 1e-6) {
  auto refs = param_refs(params);
  std::vector<double> grad(refs.size());
  for (size_t i = 0; i < refs.size(); ++i) {
    const double saved = *refs[i];
    *refs[i] = saved + h;
    const double up = loss(params);
    *refs[i] = saved - h;
    const double down = loss(params);
    *refs[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-5});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline FeatureMap random_features(Rng& rng, int h, int w, int f) {
  FeatureMap feat(h, w, f);
  for (double& v : feat.data()) v = rng.next_range(-1.0, 1.0);
  return feat;
}

inline ProbMap random_prob_map(Rng& rng, int h, int w, int c) {
  GridD logits(h, w, c);
  for (double& v : logits.data()) v = rng.next_range(-3.0, 3.0);
  return softmax(logits);
}

// Rank selection reimplemented independently: ascending insertion sort,
// indexed from the top of the distribution.
inline double brute_force_percentile(const std::vector<double>& values, double fraction,
                                     double scale, double fallback) {
  if (values.empty()) return fallback;
  std::vector<double> asc;
  for (double v : values) {
    auto it = asc.begin();
    while (it != asc.end() && *it < v) ++it;
    asc.insert(it, v);
  }
  long long k = static_cast<long long>(std::floor(fraction * scale * static_cast<double>(asc.size())));
  k = std::clamp(k, 0ll, static_cast<long long>(asc.size()) - 1);
  return asc[asc.size() - 1 - static_cast<size_t>(k)];
}

}  // namespace verify_detail

// Quick self-checks of the numerical core; one line per check. Returns true
// when every check passes. A fuller version of the same oracles runs in the
// test suite.
inline bool run_verify_battery(std::ostream& out) {
  using namespace verify_detail;
  bool ok = true;
  auto check = [&](const std::string& name, bool pass, const std::string& info = "") {
    out << (pass ? "[PASS] " : "[FAIL] ") << name;
    if (!info.empty()) out << " (" << info << ")";
    out << "\n";
    ok = ok && pass;
  };

  {  // gradient oracle, weighted CE + entropy
    Rng rng(7001);
    double worst_ce = 0.0, worst_ent = 0.0;
    for (int i = 0; i < 8; ++i) {
      const int C = 3 + rng.next_int(3);
      HeadParams params = init_head_params(kFeatureDim, 6, C, rng.next_u64());
      for (double& v : params.b1) v = rng.next_range(-0.3, 0.3);
      for (double& v : params.b2) v = rng.next_range(-0.3, 0.3);
      const FeatureMap feat = random_features(rng, 3, 4, kFeatureDim);
      const ProbMap target = random_prob_map(rng, 3, 4, C);
      std::vector<double> weights(C);
      for (double& w : weights) w = rng.next_range(0.0, 2.0);

      const auto res = backward_weighted_ce(params, feat, target, weights);
      const auto fd = fd_gradient(params, [&](const HeadParams& p) {
        return weighted_ce_value(forward(p, feat), target, weights);
      });
      worst_ce = std::max(worst_ce, max_rel_err(flatten_grads(res.grads), fd));

      const auto ent = backward_entropy(params, feat);
      const auto fd_ent = fd_gradient(params, [&](const HeadParams& p) {
        const ProbMap pred = forward(p, feat);
        double loss = 0.0;
        for (int y = 0; y < pred.height(); ++y)
          for (int x = 0; x < pred.width(); ++x)
            for (int c = 0; c < C; ++c) {
              const double pc = pred(y, x, c);
              loss -= pc * std::log(pc + kLogEpsilon);
            }
        return loss / (pred.height() * pred.width());
      });
      worst_ent = std::max(worst_ent, max_rel_err(flatten_grads(ent.grads), fd_ent));
    }
    check("gradients match finite differences", worst_ce <= 1e-4 && worst_ent <= 1e-4,
          "worst rel err " + detail::fmt_double(std::max(worst_ce, worst_ent)));
  }

  {  // percentile thresholds vs brute force, both index rules
    Rng rng(7002);
    bool exact = true;
    for (int i = 0; i < 200 && exact; ++i) {
      const int C = 2 + rng.next_int(5);
      const ProbMap p = random_prob_map(rng, 4 + rng.next_int(5), 4 + rng.next_int(5), C);
      const auto pair = argmax_confidence(p);
      const auto dists = class_conf_dists(pair, C);
      IcatConfig cfg;
      cfg.initial_threshold = rng.next_range(0.5, 1.0);
      cfg.percentile_fraction = rng.next_double();
      for (auto rule : {IcatConfig::IndexRule::kPlain, IcatConfig::IndexRule::kScaled}) {
        cfg.index_rule = rule;
        const double scale = rule == IcatConfig::IndexRule::kScaled ? cfg.initial_threshold : 1.0;
        for (const auto& d : dists) {
          const double got = percentile_threshold(d, cfg);
          const double want = brute_force_percentile(d.values, cfg.percentile_fraction, scale,
                                                     cfg.initial_threshold);
          if (got != want) exact = false;
        }
      }
    }
    check("percentile thresholds match brute-force oracle", exact);
  }

  {  // EMA closed forms
    HeadParams teacher(2, 2, 2);
    HeadParams student(2, 2, 2);
    for (double& v : teacher.w1) v = 1.0;
    const double m = 0.97;
    double worst = 0.0;
    for (int k = 1; k <= 500; ++k) {
      ema_update(teacher, student, m);
      worst = std::max(worst, std::abs(teacher.w1[0] - std::pow(m, k)));
    }
    DifficultyState ds(3);
    IcwlConfig icwl;
    icwl.confidence_decay = 0.9;
    const std::vector<double> conf = {0.25, 0.5, 0.75};
    for (int k = 1; k <= 500; ++k) {
      update_difficulty(ds, conf, icwl);
      for (int c = 0; c < 3; ++c) {
        const double closed = conf[c] + std::pow(icwl.confidence_decay, k) * (1.0 - conf[c]);
        worst = std::max(worst, std::abs(ds.smoothed_confidence[c] - closed));
      }
    }
    check("EMA trajectories match closed forms", worst <= 1e-12,
          "worst abs err " + detail::fmt_double(worst));
  }

  {  // reduction chain on a micro stream, bit-exact
    StreamConfig sc;
    sc.scene = SceneSpec{99, 16, 24, 6, 4};
    sc.schedule = {DomainKind::kNight, DomainKind::kFog};
    sc.severities = {0.7, 0.7};
    sc.rounds = 1;
    sc.frames_per_domain = 3;
    const DomainStream stream = build_stream(sc);
    const HeadParams source = init_head_params(kFeatureDim, 8, 6, 5);

    MethodSpec cot;
    cot.kind = MethodKind::kCotica;
    cot.icat.threshold_momentum = 1.0;
    cot.icwl.weight_exponent = 0.0;
    cot.views = {{1.0, false}, {0.5, true}};
    MethodSpec fixed = cot;
    fixed.kind = MethodKind::kFixedThreshold;
    fixed.fixed_threshold = cot.icat.initial_threshold;

    std::vector<GridB> masks_a, masks_b;
    const auto grab = [](std::vector<GridB>& dst) {
      return [&dst](const FrameArtifacts& a) {
        if (a.mask) dst.push_back(*a.mask);
      };
    };
    const AdaptResult ra = adapt_stream(stream, source, cot, grab(masks_a));
    const AdaptResult rb = adapt_stream(stream, source, fixed, grab(masks_b));
    bool same = ra.records.size() == rb.records.size() && masks_a.size() == masks_b.size();
    for (size_t i = 0; same && i < ra.records.size(); ++i)
      same = ra.records[i].loss == rb.records[i].loss && masks_a[i] == masks_b[i];
    check("threshold-pinned run reduces to the fixed-threshold baseline bit-exactly", same);

    const AdaptResult rc = adapt_stream(stream, source, cot);
    bool det = rc.records.size() == ra.records.size();
    if (det)
      det = run_records_to_csv("m", 0, rc.records, 6) == run_records_to_csv("m", 0, ra.records, 6);
    check("identical reruns produce identical records", det);
  }

  {  // augmentation mean: identity view passthrough + valid probabilities
    const LabeledScene scene = generate_scene(SceneSpec{11, 16, 24, 6, 6});
    const HeadParams params = init_head_params(kFeatureDim, 8, 6, 21);
    const ProbMap direct = forward(params, extract_features(scene.image));
    const ProbMap mean_id = aug_mean_prediction(params, scene.image, identity_view_set());
    check("identity-only view set reproduces the direct forward", mean_id == direct);
    const ProbMap mean_all = aug_mean_prediction(params, scene.image, default_view_set());
    check("augmentation mean is a valid probability map", is_valid_prob_map(mean_all),
          "max row-sum err " + detail::fmt_double(max_prob_sum_error(mean_all)));
  }

  return ok;
}

}  // namespace cotica
