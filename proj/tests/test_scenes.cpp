#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "cotica/scene.hpp"

using namespace cotica;

TEST_CASE("same spec generates byte-identical scenes") {
  SceneSpec spec{77, 32, 48, 6, 8};
  LabeledScene a = generate_scene(spec);
  LabeledScene b = generate_scene(spec);
  CHECK(a.image == b.image);
  CHECK(a.labels == b.labels);
}

TEST_CASE("scenes stay in range and contain at least two classes") {
  for (uint64_t seed : {1ull, 2ull, 3ull, 99ull}) {
    LabeledScene s = generate_scene(SceneSpec{seed, 24, 32, 6, 6});
    for (double v : s.image.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    std::set<int32_t> present(s.labels.data().begin(), s.labels.data().end());
    CHECK(present.size() >= 2);
  }
}

TEST_CASE("zero density leaves only the background bands") {
  LabeledScene s = generate_scene(SceneSpec{5, 32, 48, 6, 0});
  std::set<int32_t> present(s.labels.data().begin(), s.labels.data().end());
  for (int32_t cls : present) {
    const bool background =
        cls == kSky || cls == kRoad || cls == kSidewalk || cls == kBuilding;
    CHECK(background);
  }
}

TEST_CASE("every class appears in at least 90% of generated scenes") {
  int present_count[6] = {0, 0, 0, 0, 0, 0};
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    LabeledScene s = generate_scene(SceneSpec{static_cast<uint64_t>(i), 64, 96, 6, 12});
    bool seen[6] = {};
    for (int32_t v : s.labels.data()) seen[v] = true;
    for (int c = 0; c < 6; ++c) present_count[c] += seen[c] ? 1 : 0;
  }
  for (int c = 0; c < 6; ++c) {
    INFO("class ", scene_class_name(c), " present in ", present_count[c], "/", n);
    CHECK(present_count[c] >= n * 9 / 10);
  }
}

TEST_CASE("small or degenerate specs are rejected") {
  CHECK_THROWS_AS(generate_scene(SceneSpec{1, 4, 32, 6, 0}), std::invalid_argument);
  CHECK_THROWS_AS(generate_scene(SceneSpec{1, 32, 32, 1, 0}), std::invalid_argument);
}

TEST_CASE("clean kind is the identity at any severity") {
  LabeledScene s = generate_scene(SceneSpec{8, 24, 32, 6, 6});
  CHECK(corrupt(s.image, {DomainKind::kClean, 0.9, 3}) == s.image);
}

TEST_CASE("severity zero is the identity for every kind") {
  LabeledScene s = generate_scene(SceneSpec{9, 24, 32, 6, 6});
  for (DomainKind k : {DomainKind::kNight, DomainKind::kFog, DomainKind::kRain,
                       DomainKind::kSnow}) {
    CHECK(corrupt(s.image, {k, 0.0, 3}) == s.image);
  }
}

TEST_CASE("night only attenuates") {
  LabeledScene s = generate_scene(SceneSpec{10, 24, 32, 6, 6});
  Image night = corrupt(s.image, {DomainKind::kNight, 1.0, 3});
  for (size_t i = 0; i < night.size(); ++i) CHECK(night.data()[i] <= s.image.data()[i]);
}

TEST_CASE("fog leaves a matching gray image unchanged") {
  Image gray(16, 16, 3, 0.7);
  CHECK(corrupt(gray, {DomainKind::kFog, 0.5, 3}) == gray);
}

TEST_CASE("rain and snow respect their pixel budgets") {
  LabeledScene s = generate_scene(SceneSpec{11, 64, 96, 6, 10});
  const double total = 64.0 * 96.0;
  for (double sev : {0.3, 0.8, 1.0}) {
    Image rain = corrupt(s.image, {DomainKind::kRain, sev, 3});
    Image snow = corrupt(s.image, {DomainKind::kSnow, sev, 3});
    int rain_changed = 0, snow_changed = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 96; ++x) {
        bool rc = false, sc = false;
        for (int ch = 0; ch < 3; ++ch) {
          rc = rc || rain(y, x, ch) != s.image(y, x, ch);
          sc = sc || snow(y, x, ch) != s.image(y, x, ch);
        }
        rain_changed += rc;
        snow_changed += sc;
      }
    CHECK(rain_changed <= 0.10 * sev * total);
    CHECK(snow_changed <= 0.15 * sev * total);
    CHECK(rain_changed > 0);
    CHECK(snow_changed > 0);
  }
}

TEST_CASE("severity out of range is rejected") {
  Image img(16, 16, 3, 0.5);
  CHECK_THROWS_AS(corrupt(img, {DomainKind::kRain, 1.5, 3}), std::invalid_argument);
  CHECK_THROWS_AS(corrupt(img, {DomainKind::kFog, -0.1, 3}), std::invalid_argument);
}

TEST_CASE("stream arithmetic and tags follow the schedule") {
  StreamConfig cfg;
  cfg.scene = SceneSpec{21, 16, 24, 6, 4};
  cfg.schedule = {DomainKind::kFog, DomainKind::kNight, DomainKind::kRain, DomainKind::kSnow};
  cfg.severities = {0.5, 0.5, 0.5, 0.5};
  cfg.rounds = 3;
  cfg.frames_per_domain = 10;
  DomainStream stream = build_stream(cfg);
  CHECK(stream.frames.size() == 120);
  int idx = 0;
  for (int round = 0; round < 3; ++round)
    for (size_t d = 0; d < cfg.schedule.size(); ++d)
      for (int f = 0; f < 10; ++f) {
        const StreamFrame& fr = stream.frames[idx];
        CHECK(fr.round == round);
        CHECK(fr.domain == cfg.schedule[d]);
        CHECK(fr.frame_in_domain == f);
        CHECK(fr.global_index == idx);
        ++idx;
      }
}

TEST_CASE("a minimal stream has one frame with round index 0") {
  StreamConfig cfg;
  cfg.scene = SceneSpec{22, 16, 24, 6, 4};
  cfg.schedule = {DomainKind::kFog};
  cfg.severities = {0.4};
  cfg.rounds = 1;
  cfg.frames_per_domain = 1;
  DomainStream stream = build_stream(cfg);
  CHECK(stream.frames.size() == 1);
  CHECK(stream.frames[0].round == 0);
}

TEST_CASE("stream generation is deterministic and rounds replay identically") {
  StreamConfig cfg;
  cfg.scene = SceneSpec{23, 16, 24, 6, 4};
  cfg.schedule = {DomainKind::kNight, DomainKind::kSnow};
  cfg.severities = {0.7, 0.7};
  cfg.rounds = 2;
  cfg.frames_per_domain = 3;
  DomainStream a = build_stream(cfg);
  DomainStream b = build_stream(cfg);
  REQUIRE(a.frames.size() == b.frames.size());
  for (size_t i = 0; i < a.frames.size(); ++i) {
    CHECK(a.frames[i].image == b.frames[i].image);
    CHECK(a.frames[i].labels == b.frames[i].labels);
  }
  // identical content in every round: round 1 replays round 0 exactly
  const size_t per_round = a.frames.size() / 2;
  for (size_t i = 0; i < per_round; ++i) {
    CHECK(a.frames[i].image == a.frames[i + per_round].image);
    CHECK(a.frames[i].labels == a.frames[i + per_round].labels);
  }
}

TEST_CASE("corruption never touches the ground truth") {
  StreamConfig cfg;
  cfg.scene = SceneSpec{24, 16, 24, 6, 4};
  cfg.schedule = {DomainKind::kRain};
  cfg.severities = {1.0};
  cfg.rounds = 1;
  cfg.frames_per_domain = 2;
  DomainStream stream = build_stream(cfg);
  for (int f = 0; f < 2; ++f) {
    SceneSpec clean = cfg.scene;
    clean.seed = mix_seed(cfg.scene.seed, 0xc1ea7ull, static_cast<uint64_t>(f));
    CHECK(stream.frames[f].labels == generate_scene(clean).labels);
  }
}
