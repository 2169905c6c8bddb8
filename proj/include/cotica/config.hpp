#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotica/adapt.hpp"
#include "cotica/augment.hpp"
#include "cotica/icat.hpp"
#include "cotica/icwl.hpp"
#include "cotica/io.hpp"
#include "cotica/scene.hpp"

namespace cotica {

// Raised for malformed files, unknown keys, and out-of-range values; the CLI
// maps it to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Full description of an experiment. Serializable; a stored config reproduces
// its run bit-exactly.
struct RunConfig {
  // scene + stream
  uint64_t scene_seed = 1234;
  int height = 64;
  int width = 96;
  int classes = 6;
  int density = 12;
  std::vector<DomainKind> schedule = {DomainKind::kFog, DomainKind::kNight, DomainKind::kRain,
                                      DomainKind::kSnow};
  double severity_clean = 0.0;
  double severity_night = 0.5;
  double severity_fog = 0.85;
  double severity_rain = 1.0;
  double severity_snow = 1.0;
  int rounds = 3;
  int frames_per_domain = 20;

  // source pretraining; the target is above the 0.85 floor so the confidence
  // profile sharpens, but training still stops well before saturation --
  // a fully saturated head barely adapts at the online learning rate
  int train_scenes = 40;
  int holdout_scenes = 12;
  int train_epochs = 150;
  double train_lr = 3e-3;
  double target_miou = 0.92;
  int hidden = 16;
  uint64_t train_seed = 42;

  // adaptation
  double adapt_lr = 1e-3;
  double teacher_momentum = 0.999;
  double fixed_threshold = 0.99;
  IcatConfig icat;
  IcwlConfig icwl;
  ViewSet views = default_view_set();
  std::vector<MethodKind> methods = {MethodKind::kSource, MethodKind::kEntropy,
                                     MethodKind::kFixedThreshold, MethodKind::kCotica};
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out_dir = "runs";
  std::string sweep;  // "key=v1,v2,...": one run per value when set

  double severity_of(DomainKind k) const {
    switch (k) {
      case DomainKind::kClean: return severity_clean;
      case DomainKind::kNight: return severity_night;
      case DomainKind::kFog: return severity_fog;
      case DomainKind::kRain: return severity_rain;
      case DomainKind::kSnow: return severity_snow;
    }
    return 0.0;
  }

  StreamConfig stream_config(uint64_t run_seed) const {
    StreamConfig sc;
    sc.scene = SceneSpec{mix_seed(scene_seed, 0xbe9cull, run_seed), height, width, classes,
                         density};
    sc.schedule = schedule;
    sc.severities.clear();
    for (DomainKind k : schedule) sc.severities.push_back(severity_of(k));
    sc.rounds = rounds;
    sc.frames_per_domain = frames_per_domain;
    return sc;
  }

  MethodSpec method_spec(MethodKind kind) const {
    MethodSpec m;
    m.kind = kind;
    m.icat = icat;
    m.icwl = icwl;
    m.views = views;
    m.lr = adapt_lr;
    m.teacher_momentum = teacher_momentum;
    m.fixed_threshold = fixed_threshold;
    return m;
  }

  void validate() const {
    if (classes < 2) throw ConfigError("scene.classes must be >= 2");
    if (height < 8 || width < 8) throw ConfigError("scene dims must be >= 8");
    if (density < 0) throw ConfigError("scene.density must be >= 0");
    if (schedule.empty()) throw ConfigError("stream.schedule must be nonempty");
    if (rounds < 1) throw ConfigError("stream.rounds must be >= 1");
    if (frames_per_domain < 1) throw ConfigError("stream.frames_per_domain must be >= 1");
    for (double s : {severity_clean, severity_night, severity_fog, severity_rain, severity_snow})
      if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("severities must be in [0,1]");
    if (train_scenes < 1 || holdout_scenes < 1) throw ConfigError("train scene counts must be >= 1");
    if (!(adapt_lr > 0.0) || !(train_lr > 0.0)) throw ConfigError("learning rates must be > 0");
    if (!(teacher_momentum >= 0.0 && teacher_momentum <= 1.0))
      throw ConfigError("adapt.teacher_momentum must be in [0,1]");
    if (!(fixed_threshold >= 0.0 && fixed_threshold <= 1.0))
      throw ConfigError("adapt.fixed_threshold must be in [0,1]");
    if (views.empty()) throw ConfigError("views must be nonempty");
    for (const View& v : views)
      if (!(v.scale > 0.0)) throw ConfigError("view scales must be > 0");
    if (methods.empty()) throw ConfigError("methods must be nonempty");
    if (seeds.empty()) throw ConfigError("seeds must be nonempty");
    try {
      icat.validate();
      icwl.validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
  }
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(d);
  } catch (...) {
    throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
  }
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw ConfigError("config: bad seed value for " + key + ": '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean value for " + key + ": '" + v + "'");
}

inline ViewSet parse_views(const std::string& key, const std::string& v) {
  ViewSet views;
  for (std::string item : split(v, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("config: empty view entry in " + key);
    bool flip = false;
    if (item.back() == 'f') {
      flip = true;
      item.pop_back();
    }
    views.push_back({parse_double(key, item), flip});
  }
  return views;
}

inline std::string views_to_string(const ViewSet& views) {
  std::string out;
  for (size_t i = 0; i < views.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(views[i].scale);
    if (views[i].flip) out += "f";
  }
  return out;
}

}  // namespace detail

// Assigns one key. Shared by the file parser and --sweep overrides so both
// accept exactly the same key set.
inline void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_u64;

  try {
    if (key == "scene.seed") cfg.scene_seed = parse_u64(key, value);
    else if (key == "scene.height") cfg.height = parse_int(key, value);
    else if (key == "scene.width") cfg.width = parse_int(key, value);
    else if (key == "scene.classes") cfg.classes = parse_int(key, value);
    else if (key == "scene.density") cfg.density = parse_int(key, value);
    else if (key == "stream.schedule") {
      cfg.schedule.clear();
      for (const std::string& d : detail::split(value, ','))
        cfg.schedule.push_back(parse_domain(detail::trim(d)));
    } else if (key == "stream.rounds") cfg.rounds = parse_int(key, value);
    else if (key == "stream.frames_per_domain") cfg.frames_per_domain = parse_int(key, value);
    else if (key == "stream.severity.clean") cfg.severity_clean = parse_double(key, value);
    else if (key == "stream.severity.night") cfg.severity_night = parse_double(key, value);
    else if (key == "stream.severity.fog") cfg.severity_fog = parse_double(key, value);
    else if (key == "stream.severity.rain") cfg.severity_rain = parse_double(key, value);
    else if (key == "stream.severity.snow") cfg.severity_snow = parse_double(key, value);
    else if (key == "train.scenes") cfg.train_scenes = parse_int(key, value);
    else if (key == "train.holdout") cfg.holdout_scenes = parse_int(key, value);
    else if (key == "train.epochs") cfg.train_epochs = parse_int(key, value);
    else if (key == "train.lr") cfg.train_lr = parse_double(key, value);
    else if (key == "train.target_miou") cfg.target_miou = parse_double(key, value);
    else if (key == "train.hidden") cfg.hidden = parse_int(key, value);
    else if (key == "train.seed") cfg.train_seed = parse_u64(key, value);
    else if (key == "adapt.lr") cfg.adapt_lr = parse_double(key, value);
    else if (key == "adapt.teacher_momentum") cfg.teacher_momentum = parse_double(key, value);
    else if (key == "adapt.fixed_threshold") cfg.fixed_threshold = parse_double(key, value);
    else if (key == "icat.initial_threshold") cfg.icat.initial_threshold = parse_double(key, value);
    else if (key == "icat.percentile_fraction")
      cfg.icat.percentile_fraction = parse_double(key, value);
    else if (key == "icat.threshold_momentum")
      cfg.icat.threshold_momentum = parse_double(key, value);
    else if (key == "icat.index_rule") cfg.icat.index_rule = parse_index_rule(value);
    else if (key == "icat.distribution_source")
      cfg.icat.distribution_source = parse_model_role(value);
    else if (key == "icat.mask_source") cfg.icat.mask_source = parse_model_role(value);
    else if (key == "icwl.weight_exponent") cfg.icwl.weight_exponent = parse_double(key, value);
    else if (key == "icwl.confidence_decay") cfg.icwl.confidence_decay = parse_double(key, value);
    else if (key == "icwl.use_augmented_views")
      cfg.icwl.use_augmented_views = parse_bool(key, value);
    else if (key == "icwl.use_ema") cfg.icwl.use_ema = parse_bool(key, value);
    else if (key == "icwl.class_mean_mode") cfg.icwl.class_mean_mode = parse_class_mean_mode(value);
    else if (key == "views") cfg.views = detail::parse_views(key, value);
    else if (key == "methods") {
      cfg.methods.clear();
      for (const std::string& m : detail::split(value, ','))
        cfg.methods.push_back(parse_method(detail::trim(m)));
    } else if (key == "seeds") {
      cfg.seeds.clear();
      for (const std::string& s : detail::split(value, ','))
        cfg.seeds.push_back(parse_u64(key, detail::trim(s)));
    } else if (key == "out") cfg.out_dir = value;
    else if (key == "sweep") cfg.sweep = value;
    else throw ConfigError("config: unknown key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config: bad value for " + key + ": " + e.what());
  }
}

// Line-oriented "key = value" format; '#' starts a comment. Unknown keys are
// rejected outright so hyperparameter typos cannot silently skew a sweep.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    config_set(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  return parse_config(detail::read_file(path));
}

inline std::string config_to_string(const RunConfig& cfg) {
  using detail::fmt_double;
  std::string s;
  auto kv = [&](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  kv("scene.seed", std::to_string(cfg.scene_seed));
  kv("scene.height", std::to_string(cfg.height));
  kv("scene.width", std::to_string(cfg.width));
  kv("scene.classes", std::to_string(cfg.classes));
  kv("scene.density", std::to_string(cfg.density));
  {
    std::string v;
    for (size_t i = 0; i < cfg.schedule.size(); ++i)
      v += std::string(i ? "," : "") + domain_name(cfg.schedule[i]);
    kv("stream.schedule", v);
  }
  kv("stream.rounds", std::to_string(cfg.rounds));
  kv("stream.frames_per_domain", std::to_string(cfg.frames_per_domain));
  kv("stream.severity.clean", fmt_double(cfg.severity_clean));
  kv("stream.severity.night", fmt_double(cfg.severity_night));
  kv("stream.severity.fog", fmt_double(cfg.severity_fog));
  kv("stream.severity.rain", fmt_double(cfg.severity_rain));
  kv("stream.severity.snow", fmt_double(cfg.severity_snow));
  kv("train.scenes", std::to_string(cfg.train_scenes));
  kv("train.holdout", std::to_string(cfg.holdout_scenes));
  kv("train.epochs", std::to_string(cfg.train_epochs));
  kv("train.lr", fmt_double(cfg.train_lr));
  kv("train.target_miou", fmt_double(cfg.target_miou));
  kv("train.hidden", std::to_string(cfg.hidden));
  kv("train.seed", std::to_string(cfg.train_seed));
  kv("adapt.lr", fmt_double(cfg.adapt_lr));
  kv("adapt.teacher_momentum", fmt_double(cfg.teacher_momentum));
  kv("adapt.fixed_threshold", fmt_double(cfg.fixed_threshold));
  kv("icat.initial_threshold", fmt_double(cfg.icat.initial_threshold));
  kv("icat.percentile_fraction", fmt_double(cfg.icat.percentile_fraction));
  kv("icat.threshold_momentum", fmt_double(cfg.icat.threshold_momentum));
  kv("icat.index_rule", index_rule_name(cfg.icat.index_rule));
  kv("icat.distribution_source", model_role_name(cfg.icat.distribution_source));
  kv("icat.mask_source", model_role_name(cfg.icat.mask_source));
  kv("icwl.weight_exponent", fmt_double(cfg.icwl.weight_exponent));
  kv("icwl.confidence_decay", fmt_double(cfg.icwl.confidence_decay));
  kv("icwl.use_augmented_views", cfg.icwl.use_augmented_views ? "true" : "false");
  kv("icwl.use_ema", cfg.icwl.use_ema ? "true" : "false");
  kv("icwl.class_mean_mode", class_mean_mode_name(cfg.icwl.class_mean_mode));
  kv("views", detail::views_to_string(cfg.views));
  {
    std::string v;
    for (size_t i = 0; i < cfg.methods.size(); ++i)
      v += std::string(i ? "," : "") + method_name(cfg.methods[i]);
    kv("methods", v);
  }
  {
    std::string v;
    for (size_t i = 0; i < cfg.seeds.size(); ++i)
      v += std::string(i ? "," : "") + std::to_string(cfg.seeds[i]);
    kv("seeds", v);
  }
  kv("out", cfg.out_dir);
  if (!cfg.sweep.empty()) kv("sweep", cfg.sweep);
  return s;
}

// Clean labeled scenes for pretraining and held-out evaluation, derived from
// the training seed with disjoint salts.
inline std::vector<LabeledScene> train_scenes_for(const RunConfig& cfg) {
  SceneSpec base{cfg.train_seed, cfg.height, cfg.width, cfg.classes, cfg.density};
  return clean_scenes(base, 0x7e41ull, cfg.train_scenes);
}

inline std::vector<LabeledScene> holdout_scenes_for(const RunConfig& cfg) {
  SceneSpec base{cfg.train_seed, cfg.height, cfg.width, cfg.classes, cfg.density};
  return clean_scenes(base, 0x801dull, cfg.holdout_scenes);
}

inline HeadParams pretrain_from_config(const RunConfig& cfg) {
  PretrainConfig pc;
  pc.hidden = cfg.hidden;
  pc.epochs = cfg.train_epochs;
  pc.lr = cfg.train_lr;
  pc.target_miou = cfg.target_miou;
  pc.init_seed = cfg.train_seed;
  return pretrain_source(train_scenes_for(cfg), holdout_scenes_for(cfg), cfg.classes, pc);
}

// Parsed "--sweep key=v1,v2,..." request.
struct SweepRequest {
  std::string key;
  std::vector<std::string> values;
};

inline SweepRequest parse_sweep(const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size())
    throw ConfigError("sweep: expected key=v1,v2,..., got '" + spec + "'");
  SweepRequest req;
  req.key = detail::trim(spec.substr(0, eq));
  for (const std::string& v : detail::split(spec.substr(eq + 1), ','))
    req.values.push_back(detail::trim(v));
  if (req.values.empty()) throw ConfigError("sweep: no values given");
  return req;
}

}  // namespace cotica
