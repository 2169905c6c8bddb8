#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace cotica {

// Dense row-major 2-D grid with interleaved channels.
// Index layout: data[(y * width + x) * channels + ch].
template <typename T>
class Grid {
 public:
  Grid() = default;

  Grid(int height, int width, int channels, T fill = T{})
      : h_(height),
        w_(width),
        c_(channels),
        data_(static_cast<size_t>(std::max(height, 0)) * std::max(width, 0) *
                  std::max(channels, 0),
              fill) {
    if (height < 1 || width < 1 || channels < 1)
      throw std::invalid_argument("Grid: dimensions must be positive");
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x, int ch = 0) { return data_[index(y, x, ch)]; }
  const T& operator()(int y, int x, int ch = 0) const { return data_[index(y, x, ch)]; }

  // Channel vector at one pixel.
  std::span<T> pixel(int y, int x) { return {data_.data() + index(y, x, 0), static_cast<size_t>(c_)}; }
  std::span<const T> pixel(int y, int x) const {
    return {data_.data() + index(y, x, 0), static_cast<size_t>(c_)};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Grid& o) const { return h_ == o.h_ && w_ == o.w_ && c_ == o.c_; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.h_ == b.h_ && a.w_ == b.w_ && a.c_ == b.c_ && a.data_ == b.data_;
  }

 private:
  size_t index(int y, int x, int ch) const {
    return (static_cast<size_t>(y) * w_ + x) * c_ + ch;
  }

  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<T> data_;
};

using GridD = Grid<double>;
using GridI = Grid<int32_t>;
using GridB = Grid<uint8_t>;

// Domain aliases. Contracts:
//   Image      3 channels, values in [0,1]
//   ProbMap    C channels, per-pixel channel sum 1 within 1e-6, entries in [0,1]
//   LabelMap   1 channel, values in [0, class_count)
//   FeatureMap F channels, finite
using Image = GridD;
using ProbMap = GridD;
using LabelMap = GridI;
using FeatureMap = GridD;

// Per-pixel max-class probability and its class index.
struct ConfLabelPair {
  GridD conf;   // values in (0,1]
  GridI label;  // values in [0, class_count)
};

inline constexpr double kProbSumTolerance = 1e-6;

// Per pixel: label = smallest class index achieving the maximum probability,
// conf = that probability. The lowest-index tie rule keeps results
// deterministic regardless of evaluation order.
inline ConfLabelPair argmax_confidence(const ProbMap& p) {
  ConfLabelPair out{GridD(p.height(), p.width(), 1), GridI(p.height(), p.width(), 1)};
  const int C = p.channels();
  for (int y = 0; y < p.height(); ++y) {
    for (int x = 0; x < p.width(); ++x) {
      auto px = p.pixel(y, x);
      int best = 0;
      double best_v = px[0];
      for (int c = 1; c < C; ++c) {
        if (px[c] > best_v) {
          best_v = px[c];
          best = c;
        }
      }
      out.conf(y, x) = best_v;
      out.label(y, x) = best;
    }
  }
  return out;
}

// Per-pixel softmax over channels with max subtraction. Rejects non-finite
// logits.
inline ProbMap softmax(const GridD& logits) {
  const int C = logits.channels();
  ProbMap out(logits.height(), logits.width(), C);
  for (int y = 0; y < logits.height(); ++y) {
    for (int x = 0; x < logits.width(); ++x) {
      auto z = logits.pixel(y, x);
      auto p = out.pixel(y, x);
      double zmax = z[0];
      for (int c = 0; c < C; ++c) {
        if (!std::isfinite(z[c])) throw std::invalid_argument("softmax: non-finite logit");
        zmax = std::max(zmax, z[c]);
      }
      double sum = 0.0;
      for (int c = 0; c < C; ++c) {
        p[c] = std::exp(z[c] - zmax);
        sum += p[c];
      }
      for (int c = 0; c < C; ++c) p[c] /= sum;
    }
  }
  return out;
}

namespace detail {

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace detail

// Bilinear resize per channel, pixel-center aligned. The lerp form keeps
// constant regions bit-exact; identical target dims return a bit-identical
// copy.
inline GridD resize_bilinear(const GridD& g, int new_h, int new_w) {
  if (new_h < 1 || new_w < 1) throw std::invalid_argument("resize_bilinear: target dims must be >= 1");
  if (new_h == g.height() && new_w == g.width()) return g;
  const int C = g.channels();
  GridD out(new_h, new_w, C);
  const double sy = static_cast<double>(g.height()) / new_h;
  const double sx = static_cast<double>(g.width()) / new_w;
  for (int y = 0; y < new_h; ++y) {
    const double fsrc_y = (y + 0.5) * sy - 0.5;
    const double fy0 = std::floor(fsrc_y);
    const double ty = fsrc_y - fy0;
    const int y0 = std::clamp(static_cast<int>(fy0), 0, g.height() - 1);
    const int y1 = std::clamp(static_cast<int>(fy0) + 1, 0, g.height() - 1);
    for (int x = 0; x < new_w; ++x) {
      const double fsrc_x = (x + 0.5) * sx - 0.5;
      const double fx0 = std::floor(fsrc_x);
      const double tx = fsrc_x - fx0;
      const int x0 = std::clamp(static_cast<int>(fx0), 0, g.width() - 1);
      const int x1 = std::clamp(static_cast<int>(fx0) + 1, 0, g.width() - 1);
      auto p00 = g.pixel(y0, x0);
      auto p01 = g.pixel(y0, x1);
      auto p10 = g.pixel(y1, x0);
      auto p11 = g.pixel(y1, x1);
      auto dst = out.pixel(y, x);
      for (int c = 0; c < C; ++c) {
        dst[c] = detail::lerp(detail::lerp(p00[c], p01[c], tx),
                              detail::lerp(p10[c], p11[c], tx), ty);
      }
    }
  }
  return out;
}

// Bilinear resize of a probability map followed by per-pixel renormalization,
// so soft labels stay valid ProbMaps at any scale.
inline ProbMap resize_prob(const ProbMap& p, int new_h, int new_w) {
  if (new_h == p.height() && new_w == p.width()) return p;
  ProbMap out = resize_bilinear(p, new_h, new_w);
  const int C = out.channels();
  for (int y = 0; y < new_h; ++y) {
    for (int x = 0; x < new_w; ++x) {
      auto px = out.pixel(y, x);
      double sum = 0.0;
      for (int c = 0; c < C; ++c) sum += px[c];
      for (int c = 0; c < C; ++c) px[c] /= sum;
    }
  }
  return out;
}

// Reverse columns. Involution: hflip(hflip(g)) == g.
template <typename T>
Grid<T> hflip(const Grid<T>& g) {
  Grid<T> out(g.height(), g.width(), g.channels());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      auto src = g.pixel(y, x);
      auto dst = out.pixel(y, g.width() - 1 - x);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return out;
}

// Largest per-pixel deviation of the channel sum from 1.
inline double max_prob_sum_error(const ProbMap& p) {
  double worst = 0.0;
  for (int y = 0; y < p.height(); ++y) {
    for (int x = 0; x < p.width(); ++x) {
      auto px = p.pixel(y, x);
      double sum = 0.0;
      for (double v : px) sum += v;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  return worst;
}

inline bool is_valid_prob_map(const ProbMap& p, double tol = kProbSumTolerance) {
  for (double v : p.data())
    if (!(v >= 0.0 && v <= 1.0)) return false;
  return max_prob_sum_error(p) <= tol;
}

}  // namespace cotica
