#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cotica/grid.hpp"
#include "cotica/rng.hpp"

namespace cotica {

// Class palette for the synthetic street scenes. Road/sidewalk and
// sky/vegetation are kept close in brightness so corruptions produce
// class-dependent confusions rather than a uniform accuracy drop.
enum SceneClass : int32_t {
  kSky = 0,
  kRoad = 1,
  kSidewalk = 2,
  kBuilding = 3,
  kVegetation = 4,
  kVehicle = 5,
};

inline constexpr int kDefaultClassCount = 6;

inline const char* scene_class_name(int c) {
  static constexpr const char* names[] = {"sky",      "road",       "sidewalk",
                                          "building", "vegetation", "vehicle"};
  return (c >= 0 && c < 6) ? names[c] : "unknown";
}

struct SceneSpec {
  uint64_t seed = 0;
  int height = 64;
  int width = 96;
  int class_count = kDefaultClassCount;
  int object_density = 12;  // foreground objects per scene
};

enum class DomainKind { kClean, kNight, kFog, kRain, kSnow };

inline const char* domain_name(DomainKind k) {
  switch (k) {
    case DomainKind::kClean: return "clean";
    case DomainKind::kNight: return "night";
    case DomainKind::kFog: return "fog";
    case DomainKind::kRain: return "rain";
    case DomainKind::kSnow: return "snow";
  }
  return "unknown";
}

inline DomainKind parse_domain(const std::string& s) {
  if (s == "clean") return DomainKind::kClean;
  if (s == "night") return DomainKind::kNight;
  if (s == "fog") return DomainKind::kFog;
  if (s == "rain") return DomainKind::kRain;
  if (s == "snow") return DomainKind::kSnow;
  throw std::invalid_argument("unknown domain kind: " + s);
}

struct DomainSpec {
  DomainKind kind = DomainKind::kClean;
  double severity = 0.0;  // in [0,1]
  uint64_t seed = 0;
};

struct LabeledScene {
  Image image;
  LabelMap labels;
};

namespace detail {

inline void paint(Image& img, LabelMap& lab, int y, int x, int cls, double r, double g,
                  double b) {
  img(y, x, 0) = r;
  img(y, x, 1) = g;
  img(y, x, 2) = b;
  lab(y, x) = cls;
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace detail

// Layered street-scene composition: sky gradient on top, building backdrop,
// sidewalk strip, road at the bottom, then object_density foreground objects
// cycling through vegetation blobs, vehicles, and extra building blocks.
// Per-class texture noise is added last. Bit-identical for identical specs.
inline LabeledScene generate_scene(const SceneSpec& spec) {
  if (spec.class_count < 2)
    throw std::invalid_argument("generate_scene: class_count must be >= 2");
  if (spec.height < 8 || spec.width < 8)
    throw std::invalid_argument("generate_scene: scene must be at least 8x8");
  const int H = spec.height, W = spec.width;
  Rng rng(mix_seed(spec.seed, 0x5ce7ull));
  Image img(H, W, 3);
  LabelMap lab(H, W, 1);

  // Band boundaries jittered per scene so position alone cannot separate the
  // classes near the transitions.
  const int horizon = static_cast<int>(H * rng.next_range(0.34, 0.50));
  const int sidewalk_top = static_cast<int>(H * rng.next_range(0.60, 0.70));
  const int road_top = static_cast<int>(H * rng.next_range(0.80, 0.88));

  const double sky_r = rng.next_range(0.50, 0.62);
  const double sky_g = rng.next_range(0.66, 0.76);
  const double sky_b = rng.next_range(0.88, 0.97);
  const double building_base = rng.next_range(0.42, 0.52);

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (y < horizon) {
        // Sky brightens toward the horizon.
        const double t = horizon > 1 ? static_cast<double>(y) / (horizon - 1) : 0.0;
        detail::paint(img, lab, y, x, kSky, sky_r + 0.10 * t, sky_g + 0.08 * t, sky_b);
      } else if (y < sidewalk_top) {
        detail::paint(img, lab, y, x, kBuilding, building_base + 0.06, building_base,
                      building_base - 0.04);
      } else if (y < road_top) {
        detail::paint(img, lab, y, x, kSidewalk, 0.52, 0.50, 0.46);
      } else {
        detail::paint(img, lab, y, x, kRoad, 0.30, 0.30, 0.33);
      }
    }
  }

  auto fill_rect = [&](int y0, int y1, int x0, int x1, int cls, double r, double g, double b) {
    y0 = std::clamp(y0, 0, H);
    y1 = std::clamp(y1, 0, H);
    x0 = std::clamp(x0, 0, W);
    x1 = std::clamp(x1, 0, W);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) detail::paint(img, lab, y, x, cls, r, g, b);
  };

  for (int i = 0; i < spec.object_density; ++i) {
    switch (i % 3) {
      case 0: {  // vegetation blob straddling the sky/building boundary
        const int cy = horizon - H / 12 + rng.next_int(std::max(1, (sidewalk_top - horizon)));
        const int cx = rng.next_int(W);
        const int ry = 3 + rng.next_int(std::max(2, H / 8));
        const int rx = 3 + rng.next_int(std::max(2, W / 7));
        const double g = rng.next_range(0.42, 0.58);
        for (int y = std::max(0, cy - ry); y <= std::min(H - 1, cy + ry); ++y) {
          for (int x = std::max(0, cx - rx); x <= std::min(W - 1, cx + rx); ++x) {
            const double dy = static_cast<double>(y - cy) / ry;
            const double dx = static_cast<double>(x - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) detail::paint(img, lab, y, x, kVegetation, 0.16, g, 0.20);
          }
        }
        break;
      }
      case 1: {  // vehicle box sitting on the road or sidewalk
        const int vh = 4 + rng.next_int(std::max(2, H / 10));
        const int vw = 7 + rng.next_int(std::max(3, W / 6));
        const int bottom = sidewalk_top + 1 + rng.next_int(std::max(1, H - sidewalk_top - 1));
        const int left = rng.next_int(std::max(1, W - vw));
        const double shade = rng.next_range(0.55, 0.80);
        fill_rect(bottom - vh, bottom, left, left + vw, kVehicle, shade, shade * 0.35,
                  shade * 0.30);
        break;
      }
      default: {  // building block poking into the sky
        const int bw = 6 + rng.next_int(std::max(2, W / 5));
        const int left = rng.next_int(std::max(1, W - bw));
        const int top = std::max(0, horizon - 2 - rng.next_int(std::max(2, horizon / 2)));
        const double shade = rng.next_range(0.38, 0.55);
        fill_rect(top, sidewalk_top, left, left + bw, kBuilding, shade + 0.05, shade,
                  shade - 0.04);
        break;
      }
    }
  }

  // Per-class texture noise; vegetation is the roughest surface. High
  // frequency on purpose: multi-scale view averaging suppresses it,
  // single-view predictions have to live with it.
  static constexpr double noise_amp[6] = {0.015, 0.04, 0.04, 0.04, 0.09, 0.05};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double amp = noise_amp[lab(y, x) % 6];
      for (int ch = 0; ch < 3; ++ch) {
        img(y, x, ch) = detail::clamp01(img(y, x, ch) + rng.next_range(-amp, amp));
      }
    }
  }
  return {std::move(img), std::move(lab)};
}

// Applies a parameterized corruption to the image only; ground truth is
// corruption-invariant by construction. Severity 0 is the exact identity for
// every kind.
inline Image corrupt(const Image& img, const DomainSpec& d) {
  if (!(d.severity >= 0.0 && d.severity <= 1.0))
    throw std::invalid_argument("corrupt: severity must be in [0,1]");
  const int H = img.height(), W = img.width();
  const double s = d.severity;
  Image out = img;
  switch (d.kind) {
    case DomainKind::kClean:
      break;
    case DomainKind::kNight: {
      // Attenuation plus subtractive per-pixel shot noise (low light is
      // noisy); the noise factor is shared across channels so hue survives
      // while luminance flickers. Both factors are <= 1, so every channel
      // value can only drop. Blue is attenuated less, shifting hue toward
      // blue.
      Rng rng(mix_seed(d.seed, 0x419a7ull));
      const double scale_rg = 1.0 - 0.65 * s;
      const double scale_b = 1.0 - 0.45 * s;
      const double noise = 0.8 * s;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const double shot = 1.0 - noise * rng.next_double();
          out(y, x, 0) = img(y, x, 0) * scale_rg * shot;
          out(y, x, 1) = img(y, x, 1) * scale_rg * shot;
          out(y, x, 2) = img(y, x, 2) * scale_b * shot;
        }
      }
      break;
    }
    case DomainKind::kFog: {
      // Convex blend toward gray 0.7, strongest at the top of the image, with
      // per-pixel density jitter (patchy fog). A 0.7-gray image is a fixed
      // point at any severity since the blend target is the pixel itself.
      Rng rng(mix_seed(d.seed, 0xf06ull));
      for (int y = 0; y < H; ++y) {
        const double row_frac = H > 1 ? static_cast<double>(y) / (H - 1) : 0.0;
        const double f_row = s * (0.35 + 0.65 * (1.0 - row_frac));
        for (int x = 0; x < W; ++x) {
          const double f = f_row * (1.0 - 0.55 * rng.next_double());
          for (int ch = 0; ch < 3; ++ch) {
            const double v = img(y, x, ch);
            out(y, x, ch) = v + f * (0.7 - v);
          }
        }
      }
      break;
    }
    case DomainKind::kRain: {
      // Slanted dark streaks (wet occlusion) overwriting at most 10%*severity
      // of pixels.
      Rng rng(mix_seed(d.seed, 0x4a13ull));
      const long budget = static_cast<long>(0.10 * s * H * W);
      long used = 0;
      while (used < budget) {
        const int y = rng.next_int(H);
        const int x = rng.next_int(W);
        const int len = 4 + rng.next_int(5);
        const int slant = rng.next_int(3) - 1;
        const double shade = rng.next_range(0.10, 0.30);
        for (int k = 0; k < len && used < budget; ++k) {
          const int yy = y + k;
          const int xx = x + (k * slant) / 2;
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) break;
          out(yy, xx, 0) = shade;
          out(yy, xx, 1) = shade + 0.02;
          out(yy, xx, 2) = shade + 0.05;
          ++used;
        }
      }
      break;
    }
    case DomainKind::kSnow: {
      // Near-white blobs overwriting at most 15%*severity of pixels,
      // concentrated on the road/sidewalk rows at the bottom of the frame.
      Rng rng(mix_seed(d.seed, 0x5a09ull));
      const long budget = static_cast<long>(0.15 * s * H * W);
      long used = 0;
      while (used < budget) {
        const bool low = rng.next_double() < 0.7;
        const int cy = low ? H - 1 - rng.next_int(std::max(1, (H * 38) / 100)) : rng.next_int(H);
        const int cx = rng.next_int(W);
        const int r = 1 + rng.next_int(3);
        const double shade = rng.next_range(0.90, 0.98);
        for (int y = std::max(0, cy - r); y <= std::min(H - 1, cy + r) && used < budget; ++y) {
          for (int x = std::max(0, cx - r); x <= std::min(W - 1, cx + r) && used < budget; ++x) {
            const int dy = y - cy, dx = x - cx;
            if (dy * dy + dx * dx > r * r) continue;
            out(y, x, 0) = shade;
            out(y, x, 1) = shade;
            out(y, x, 2) = shade + 0.02;
            ++used;
          }
        }
      }
      break;
    }
  }
  for (double& v : out.data()) v = detail::clamp01(v);
  return out;
}

struct StreamFrame {
  Image image;       // corrupted view presented to the model
  LabelMap labels;   // ground truth, untouched by corruption
  DomainKind domain = DomainKind::kClean;
  double severity = 0.0;
  int round = 0;           // 0-based repetition index
  int frame_in_domain = 0; // 0-based index within its (round, domain) block
  int global_index = 0;    // 0-based position in the stream
};

struct DomainStream {
  std::vector<StreamFrame> frames;
  std::vector<DomainKind> schedule;
  int rounds = 0;
  int frames_per_domain = 0;
  int class_count = kDefaultClassCount;
};

struct StreamConfig {
  SceneSpec scene;                     // scene.seed is the base seed for all frames
  std::vector<DomainKind> schedule = {DomainKind::kFog, DomainKind::kNight,
                                      DomainKind::kRain, DomainKind::kSnow};
  std::vector<double> severities = {0.7, 0.7, 0.7, 0.7};  // parallel to schedule
  int rounds = 3;
  int frames_per_domain = 20;
};

// Emits rounds x schedule x frames_per_domain corrupted frames. The clean
// scene for slot f and the corruption noise for (domain, f) are seeded
// independently of the round, so every round replays the identical sequence
// (repeated-sequence protocol); a no-update model therefore scores the same
// in every round.
inline DomainStream build_stream(const StreamConfig& cfg) {
  if (cfg.schedule.empty()) throw std::invalid_argument("build_stream: schedule is empty");
  if (cfg.rounds < 1) throw std::invalid_argument("build_stream: rounds must be >= 1");
  if (cfg.severities.size() != cfg.schedule.size())
    throw std::invalid_argument("build_stream: one severity per scheduled domain required");

  DomainStream stream;
  stream.schedule = cfg.schedule;
  stream.rounds = cfg.rounds;
  stream.frames_per_domain = cfg.frames_per_domain;
  stream.class_count = cfg.scene.class_count;

  // Clean scenes are shared across domains and rounds so domain difficulty is
  // directly comparable on identical content.
  std::vector<LabeledScene> clean(cfg.frames_per_domain);
  for (int f = 0; f < cfg.frames_per_domain; ++f) {
    SceneSpec spec = cfg.scene;
    spec.seed = mix_seed(cfg.scene.seed, 0xc1ea7ull, static_cast<uint64_t>(f));
    clean[f] = generate_scene(spec);
  }

  int global = 0;
  for (int round = 0; round < cfg.rounds; ++round) {
    for (size_t di = 0; di < cfg.schedule.size(); ++di) {
      for (int f = 0; f < cfg.frames_per_domain; ++f) {
        DomainSpec dom{cfg.schedule[di], cfg.severities[di],
                       mix_seed(cfg.scene.seed, 0xd0e5ull, di, static_cast<uint64_t>(f))};
        StreamFrame frame;
        frame.image = corrupt(clean[f].image, dom);
        frame.labels = clean[f].labels;
        frame.domain = dom.kind;
        frame.severity = dom.severity;
        frame.round = round;
        frame.frame_in_domain = f;
        frame.global_index = global++;
        stream.frames.push_back(std::move(frame));
      }
    }
  }
  return stream;
}

// Clean labeled frames for source pretraining / held-out evaluation.
inline std::vector<LabeledScene> clean_scenes(const SceneSpec& base, uint64_t salt, int count) {
  std::vector<LabeledScene> out(count);
  for (int i = 0; i < count; ++i) {
    SceneSpec spec = base;
    spec.seed = mix_seed(base.seed, salt, static_cast<uint64_t>(i));
    out[i] = generate_scene(spec);
  }
  return out;
}

}  // namespace cotica
