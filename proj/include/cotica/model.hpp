#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotica/grid.hpp"
#include "cotica/io.hpp"
#include "cotica/metrics.hpp"
#include "cotica/rng.hpp"
#include "cotica/scene.hpp"

namespace cotica {

inline constexpr int kFeatureDim = 12;
inline constexpr double kLogEpsilon = 1e-12;  // inside every log(p + eps)

// Handcrafted per-pixel features, channel layout:
//   0-2  raw RGB
//   3-5  5x5 box-blurred RGB
//   6    |horizontal luminance gradient| (central difference), range [0, 0.5]
//   7    |vertical luminance gradient|, range [0, 0.5]
//   8    5x5 local luminance variance, range [0, 0.25]
//   9    normalized row coordinate y/(H-1)
//   10   normalized column coordinate x/(W-1)
//   11   luminance
// Deterministic in the image alone; every channel except the column
// coordinate is equivariant under horizontal flips.
inline FeatureMap extract_features(const Image& img) {
  const int H = img.height(), W = img.width();
  FeatureMap feat(H, W, kFeatureDim);

  GridD lum(H, W, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      lum(y, x) = 0.299 * img(y, x, 0) + 0.587 * img(y, x, 1) + 0.114 * img(y, x, 2);

  // Separable 5x5 box filter with replicated borders; used for the blurred
  // color channels and the luminance variance.
  auto box5 = [&](auto&& value) {
    GridD tmp(H, W, 1), out(H, W, 1);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        for (int k = -2; k <= 2; ++k) s += value(y, std::clamp(x + k, 0, W - 1));
        tmp(y, x) = s / 5.0;
      }
    }
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        for (int k = -2; k <= 2; ++k) s += tmp(std::clamp(y + k, 0, H - 1), x);
        out(y, x) = s / 5.0;
      }
    }
    return out;
  };

  std::vector<GridD> blurred;
  for (int ch = 0; ch < 3; ++ch)
    blurred.push_back(box5([&](int y, int x) { return img(y, x, ch); }));
  GridD lum_mean = box5([&](int y, int x) { return lum(y, x); });
  GridD lum_sq_mean = box5([&](int y, int x) { return lum(y, x) * lum(y, x); });

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      auto f = feat.pixel(y, x);
      for (int ch = 0; ch < 3; ++ch) f[ch] = img(y, x, ch);
      for (int ch = 0; ch < 3; ++ch) f[3 + ch] = blurred[ch](y, x);
      const int xl = std::max(0, x - 1), xr = std::min(W - 1, x + 1);
      const int yu = std::max(0, y - 1), yd = std::min(H - 1, y + 1);
      f[6] = std::abs(lum(y, xr) - lum(y, xl)) / 2.0;
      f[7] = std::abs(lum(yd, x) - lum(yu, x)) / 2.0;
      f[8] = std::max(0.0, lum_sq_mean(y, x) - lum_mean(y, x) * lum_mean(y, x));
      f[9] = H > 1 ? static_cast<double>(y) / (H - 1) : 0.0;
      f[10] = W > 1 ? static_cast<double>(x) / (W - 1) : 0.0;
      f[11] = lum(y, x);
    }
  }
  return feat;
}

// Two-layer per-pixel head: relu(W1^T x + b1) -> W2^T h + b2 -> softmax.
struct HeadParams {
  int feat_dim = kFeatureDim;
  int hidden = 16;
  int classes = 6;

  std::vector<double> w1;  // feat_dim*hidden, w1[f*hidden + j]
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden*classes, w2[j*classes + c]
  std::vector<double> b2;  // classes

  HeadParams() = default;
  HeadParams(int feat_dim_, int hidden_, int classes_)
      : feat_dim(feat_dim_),
        hidden(hidden_),
        classes(classes_),
        w1(static_cast<size_t>(feat_dim_) * hidden_, 0.0),
        b1(hidden_, 0.0),
        w2(static_cast<size_t>(hidden_) * classes_, 0.0),
        b2(classes_, 0.0) {}

  size_t param_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  bool same_shape(const HeadParams& o) const {
    return feat_dim == o.feat_dim && hidden == o.hidden && classes == o.classes;
  }

  bool all_finite() const {
    for (const auto* vec : {&w1, &b1, &w2, &b2})
      for (double v : *vec)
        if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const HeadParams& a, const HeadParams& b) {
    return a.same_shape(b) && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
  }
};

// Visits the four parameter arrays of several same-shaped HeadParams in
// lockstep. f receives one double (or const double) reference per argument.
template <typename F, typename First, typename... Ps>
void for_each_param(F&& f, First& first, Ps&... rest) {
  auto visit = [&](auto member) {
    auto& a = first.*member;
    for (size_t i = 0; i < a.size(); ++i) f(a[i], (rest.*member)[i]...);
  };
  visit(&HeadParams::w1);
  visit(&HeadParams::b1);
  visit(&HeadParams::w2);
  visit(&HeadParams::b2);
}

inline HeadParams init_head_params(int feat_dim, int hidden, int classes, uint64_t seed) {
  HeadParams p(feat_dim, hidden, classes);
  Rng rng(mix_seed(seed, 0x1417ull));
  const double r1 = std::sqrt(6.0 / (feat_dim + hidden));
  const double r2 = std::sqrt(6.0 / (hidden + classes));
  for (double& v : p.w1) v = rng.next_range(-r1, r1);
  for (double& v : p.w2) v = rng.next_range(-r2, r2);
  return p;
}

inline ProbMap forward(const HeadParams& params, const FeatureMap& feat) {
  if (feat.channels() != params.feat_dim)
    throw std::invalid_argument("forward: feature dimension mismatch");
  const int H = feat.height(), W = feat.width();
  const int F = params.feat_dim, Hd = params.hidden, C = params.classes;
  ProbMap out(H, W, C);
  std::vector<double> h(Hd), z(C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      auto fx = feat.pixel(y, x);
      for (int j = 0; j < Hd; ++j) h[j] = params.b1[j];
      for (int f = 0; f < F; ++f) {
        const double v = fx[f];
        const double* w = &params.w1[static_cast<size_t>(f) * Hd];
        for (int j = 0; j < Hd; ++j) h[j] += v * w[j];
      }
      for (int j = 0; j < Hd; ++j) h[j] = std::max(0.0, h[j]);
      for (int c = 0; c < C; ++c) z[c] = params.b2[c];
      for (int j = 0; j < Hd; ++j) {
        const double v = h[j];
        if (v == 0.0) continue;
        const double* w = &params.w2[static_cast<size_t>(j) * C];
        for (int c = 0; c < C; ++c) z[c] += v * w[c];
      }
      double zmax = z[0];
      for (int c = 1; c < C; ++c) zmax = std::max(zmax, z[c]);
      double sum = 0.0;
      auto px = out.pixel(y, x);
      for (int c = 0; c < C; ++c) {
        px[c] = std::exp(z[c] - zmax);
        sum += px[c];
      }
      for (int c = 0; c < C; ++c) px[c] /= sum;
    }
  }
  return out;
}

struct BackwardResult {
  double loss = 0.0;
  HeadParams grads;  // same shape as the parameters
};

namespace detail {

// Shared backprop core. PixelLoss(y, x, p, dp) fills dL/dp for one pixel and
// returns that pixel's loss; losses and gradients are averaged over pixels.
// The softmax Jacobian is applied exactly: dz_k = p_k (g_k - sum_c p_c g_c).
template <typename PixelLoss>
BackwardResult backward_pixel_loss(const HeadParams& params, const FeatureMap& feat,
                                   PixelLoss&& pixel_loss) {
  const int H = feat.height(), W = feat.width();
  const int F = params.feat_dim, Hd = params.hidden, C = params.classes;
  BackwardResult res;
  res.grads = HeadParams(F, Hd, C);
  std::vector<double> pre(Hd), h(Hd), z(C), p(C), dp(C), dz(C), dh(Hd);
  const double inv_px = 1.0 / (static_cast<double>(H) * W);

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      auto fx = feat.pixel(y, x);
      for (int j = 0; j < Hd; ++j) pre[j] = params.b1[j];
      for (int f = 0; f < F; ++f) {
        const double v = fx[f];
        const double* w = &params.w1[static_cast<size_t>(f) * Hd];
        for (int j = 0; j < Hd; ++j) pre[j] += v * w[j];
      }
      for (int j = 0; j < Hd; ++j) h[j] = std::max(0.0, pre[j]);
      for (int c = 0; c < C; ++c) z[c] = params.b2[c];
      for (int j = 0; j < Hd; ++j) {
        const double v = h[j];
        if (v == 0.0) continue;
        const double* w = &params.w2[static_cast<size_t>(j) * C];
        for (int c = 0; c < C; ++c) z[c] += v * w[c];
      }
      double zmax = z[0];
      for (int c = 1; c < C; ++c) zmax = std::max(zmax, z[c]);
      double sum = 0.0;
      for (int c = 0; c < C; ++c) {
        p[c] = std::exp(z[c] - zmax);
        sum += p[c];
      }
      for (int c = 0; c < C; ++c) p[c] /= sum;

      res.loss += pixel_loss(y, x, std::span<const double>(p),
                             std::span<double>(dp)) * inv_px;

      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += p[c] * dp[c];
      for (int c = 0; c < C; ++c) dz[c] = p[c] * (dp[c] - dot) * inv_px;

      for (int c = 0; c < C; ++c) res.grads.b2[c] += dz[c];
      for (int j = 0; j < Hd; ++j) {
        const double hv = h[j];
        double acc = 0.0;
        const double* w = &params.w2[static_cast<size_t>(j) * C];
        double* gw = &res.grads.w2[static_cast<size_t>(j) * C];
        for (int c = 0; c < C; ++c) {
          gw[c] += hv * dz[c];
          acc += w[c] * dz[c];
        }
        dh[j] = pre[j] > 0.0 ? acc : 0.0;  // relu subgradient 0 at 0
      }
      for (int j = 0; j < Hd; ++j) res.grads.b1[j] += dh[j];
      for (int f = 0; f < F; ++f) {
        const double v = fx[f];
        double* gw = &res.grads.w1[static_cast<size_t>(f) * Hd];
        for (int j = 0; j < Hd; ++j) gw[j] += v * dh[j];
      }
    }
  }
  return res;
}

}  // namespace detail

// Pixel-mean weighted soft cross-entropy:
//   loss = mean_px -sum_c weights[c] * target[c] * log(pred[c] + eps)
// with exact gradients through softmax, both linear layers, and relu.
inline BackwardResult backward_weighted_ce(const HeadParams& params, const FeatureMap& feat,
                                           const ProbMap& target,
                                           std::span<const double> weights) {
  if (target.height() != feat.height() || target.width() != feat.width())
    throw std::invalid_argument("backward_weighted_ce: target shape mismatch");
  if (target.channels() != params.classes ||
      weights.size() != static_cast<size_t>(params.classes))
    throw std::invalid_argument("backward_weighted_ce: class count mismatch");
  for (double w : weights)
    if (!(w >= 0.0)) throw std::invalid_argument("backward_weighted_ce: weights must be >= 0");

  const int C = params.classes;
  return detail::backward_pixel_loss(
      params, feat, [&](int y, int x, std::span<const double> p, std::span<double> dp) {
        auto t = target.pixel(y, x);
        double loss = 0.0;
        for (int c = 0; c < C; ++c) {
          const double pe = p[c] + kLogEpsilon;
          loss -= weights[c] * t[c] * std::log(pe);
          dp[c] = -weights[c] * t[c] / pe;
        }
        return loss;
      });
}

// Pixel-mean Shannon entropy of the prediction, with exact gradients.
inline BackwardResult backward_entropy(const HeadParams& params, const FeatureMap& feat) {
  const int C = params.classes;
  return detail::backward_pixel_loss(
      params, feat, [C](int, int, std::span<const double> p, std::span<double> dp) {
        double loss = 0.0;
        for (int c = 0; c < C; ++c) {
          const double pe = p[c] + kLogEpsilon;
          loss -= p[c] * std::log(pe);
          dp[c] = -(std::log(pe) + p[c] / pe);
        }
        return loss;
      });
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  HeadParams m, v;  // first/second moment estimates, parameter-shaped
  long long step = 0;

  explicit AdamState(const HeadParams& shape)
      : m(shape.feat_dim, shape.hidden, shape.classes),
        v(shape.feat_dim, shape.hidden, shape.classes) {}
  AdamState() = default;
};

// Standard Adam update with bias correction. Aborts on non-finite gradients,
// which would silently poison the whole remaining run.
inline void adam_step(HeadParams& params, HeadParams& grads, AdamState& state,
                      const AdamConfig& cfg) {
  if (!grads.all_finite()) throw std::runtime_error("adam_step: non-finite gradient");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for_each_param(
      [&](double& p, double& g, double& m, double& v) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      },
      params, grads, state.m, state.v);
}

// teacher <- momentum*teacher + (1-momentum)*student, elementwise.
inline void ema_update(HeadParams& teacher, const HeadParams& student, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0))
    throw std::invalid_argument("ema_update: momentum must be in [0,1]");
  for_each_param([&](double& t, const double& s) { t = momentum * t + (1.0 - momentum) * s; },
                 teacher, student);
}

// One-hot probability map from ground-truth labels.
inline ProbMap one_hot(const LabelMap& labels, int classes) {
  ProbMap out(labels.height(), labels.width(), classes, 0.0);
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x) out(y, x, labels(y, x)) = 1.0;
  return out;
}

inline LabelMap predict_labels(const HeadParams& params, const FeatureMap& feat) {
  return argmax_confidence(forward(params, feat)).label;
}

// Pooled-confusion mIoU of a parameter set over labeled scenes.
inline double evaluate_miou(const HeadParams& params, const std::vector<LabeledScene>& scenes) {
  ConfusionMatrix cm(params.classes);
  for (const auto& s : scenes) {
    cm.accumulate(predict_labels(params, extract_features(s.image)), s.labels);
  }
  return miou(cm);
}

struct PretrainConfig {
  int hidden = 16;
  int epochs = 150;
  double lr = 3e-3;
  double target_miou = 0.85;
  uint64_t init_seed = 42;
  // Seeded scale/flip jitter per (epoch, scene); makes the model usable on
  // rescaled test-time views.
  bool scale_augment = true;
};

// Supervised pretraining on clean labeled scenes: unweighted cross-entropy
// against one-hot ground truth, one Adam step per scene, until the held-out
// clean mIoU reaches the target. Throws if the epoch budget runs out, naming
// the best mIoU achieved (usually a feature/generator misconfiguration).
inline HeadParams pretrain_source(const std::vector<LabeledScene>& train,
                                  const std::vector<LabeledScene>& holdout, int classes,
                                  const PretrainConfig& cfg) {
  if (train.empty() || holdout.empty())
    throw std::invalid_argument("pretrain_source: need train and holdout scenes");
  if (cfg.epochs < 1) throw std::invalid_argument("pretrain_source: epoch budget must be >= 1");

  HeadParams params = init_head_params(kFeatureDim, cfg.hidden, classes, cfg.init_seed);
  AdamState opt(params);
  AdamConfig adam{cfg.lr};
  const std::vector<double> ones(static_cast<size_t>(classes), 1.0);
  static constexpr double kJitterScales[] = {0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};

  std::vector<FeatureMap> feats;
  std::vector<ProbMap> targets;
  feats.reserve(train.size());
  targets.reserve(train.size());
  for (const auto& s : train) {
    feats.push_back(extract_features(s.image));
    targets.push_back(one_hot(s.labels, classes));
  }

  double best = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = 0; i < train.size(); ++i) {
      BackwardResult res;
      Rng jitter(mix_seed(cfg.init_seed, 0xa0daull, static_cast<uint64_t>(epoch),
                          static_cast<uint64_t>(i)));
      const double scale = cfg.scale_augment ? kJitterScales[jitter.next_int(7)] : 1.0;
      const bool flip = cfg.scale_augment && jitter.next_int(2) == 1;
      if (scale == 1.0 && !flip) {
        res = backward_weighted_ce(params, feats[i], targets[i], ones);
      } else {
        const int nh = std::max(1, static_cast<int>(std::llround(scale * train[i].image.height())));
        const int nw = std::max(1, static_cast<int>(std::llround(scale * train[i].image.width())));
        Image img = resize_bilinear(train[i].image, nh, nw);
        ProbMap target = resize_prob(targets[i], nh, nw);
        if (flip) {
          img = hflip(img);
          target = hflip(target);
        }
        res = backward_weighted_ce(params, extract_features(img), target, ones);
      }
      adam_step(params, res.grads, opt, adam);
    }
    const double score = evaluate_miou(params, holdout);
    best = std::max(best, score);
    if (score >= cfg.target_miou) return params;
  }
  throw std::runtime_error("pretrain_source: target mIoU " +
                           detail::fmt_double(cfg.target_miou) + " not reached; best was " +
                           detail::fmt_double(best));
}

// CPRM binary head-parameter container:
//   magic "CPRM", u32 version (1), u32 feat_dim, hidden, classes,
//   then w1, b1, w2, b2 as f64 LE in declaration order.
inline constexpr uint32_t kCprmVersion = 1;

inline void write_params(const std::string& path, const HeadParams& p) {
  std::string buf;
  buf.reserve(20 + p.param_count() * 8);
  buf.append("CPRM");
  detail::put_u32(buf, kCprmVersion);
  detail::put_u32(buf, static_cast<uint32_t>(p.feat_dim));
  detail::put_u32(buf, static_cast<uint32_t>(p.hidden));
  detail::put_u32(buf, static_cast<uint32_t>(p.classes));
  for (const auto* vec : {&p.w1, &p.b1, &p.w2, &p.b2})
    for (double v : *vec) detail::put_f64(buf, v);
  detail::write_file(path, buf);
}

inline HeadParams read_params(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() < 20 || bytes.compare(0, 4, "CPRM") != 0)
    throw std::runtime_error("not a CPRM file: " + path);
  if (detail::get_u32(bytes.data() + 4) != kCprmVersion)
    throw std::runtime_error("unsupported CPRM version in " + path);
  HeadParams p(static_cast<int>(detail::get_u32(bytes.data() + 8)),
               static_cast<int>(detail::get_u32(bytes.data() + 12)),
               static_cast<int>(detail::get_u32(bytes.data() + 16)));
  if (bytes.size() != 20 + p.param_count() * 8)
    throw std::runtime_error("truncated CPRM file: " + path);
  size_t off = 20;
  for (auto* vec : {&p.w1, &p.b1, &p.w2, &p.b2})
    for (double& v : *vec) {
      v = detail::get_f64(bytes.data() + off);
      off += 8;
    }
  return p;
}

}  // namespace cotica
