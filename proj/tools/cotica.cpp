// Command-line front end: stream generation, source pretraining, online
// adaptation runs, reporting, and a built-in verification battery.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cotica/adapt.hpp"
#include "cotica/config.hpp"
#include "cotica/io.hpp"
#include "cotica/report.hpp"
#include "cotica/runner.hpp"
#include "cotica/stream_io.hpp"
#include "cotica/verify.hpp"

namespace fs = std::filesystem;
using namespace cotica;

namespace {

RunConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) {
    RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  return load_config(config_path);
}

struct AdaptJob {
  RunConfig cfg;  // with sweep override applied
  MethodKind method = MethodKind::kCotica;
  uint64_t seed = 0;
  std::string sweep_key, sweep_value;
  std::string run_dir;
  std::string stream_manifest;  // when set, replaces in-memory generation
  bool dump_loss_maps = false;
};

void execute_adapt_job(const AdaptJob& job, const HeadParams& source) {
  const auto t0 = std::chrono::steady_clock::now();
  const DomainStream stream = job.stream_manifest.empty()
                                  ? build_stream(job.cfg.stream_config(job.seed))
                                  : read_stream(job.stream_manifest);
  fs::create_directories(job.run_dir);

  FrameObserver observer;
  if (job.dump_loss_maps) {
    const std::string dir = job.run_dir + "/loss_maps";
    fs::create_directories(dir);
    observer = [dir](const FrameArtifacts& a) {
      if (!a.pseudo || !a.student_pred) return;
      char base[32];
      std::snprintf(base, sizeof(base), "/f%06d", a.frame->global_index);
      const GridD map = weighted_loss_map(*a.student_pred, *a.pseudo, a.weights);
      write_cgrd(dir + base + ".cgrd", map);
      write_grid_csv(dir + base + ".csv", map);
    };
  }

  const MethodSpec spec = job.cfg.method_spec(job.method);
  const AdaptResult result = adapt_stream(stream, source, spec, observer);

  const std::string method_str = method_name(job.method);
  detail::write_file(job.run_dir + "/records.csv",
                     run_records_to_csv(method_str, job.seed, result.records,
                                        stream.class_count));
  if (!result.reports.empty())
    detail::write_file(job.run_dir + "/thresholds.csv",
                       threshold_reports_to_csv(method_str, job.seed, result.records,
                                                result.reports));
  write_params(job.run_dir + "/final_student.cprm", result.state.student);
  write_params(job.run_dir + "/final_teacher.cprm", result.state.teacher);
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  std::string meta;
  meta += "method=" + method_str + "\n";
  meta += "seed=" + std::to_string(job.seed) + "\n";
  if (!job.sweep_key.empty()) {
    meta += "sweep_key=" + job.sweep_key + "\n";
    meta += "sweep_value=" + job.sweep_value + "\n";
  }
  meta += "frames=" + std::to_string(result.records.size()) + "\n";
  meta += "wall_ms=" + std::to_string(wall_ms) + "\n";
  detail::write_file(job.run_dir + "/meta.txt", meta);
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '.' || c == '/' || c == '=') c = '_';
  return s;
}

int cmd_gen_stream(const std::string& config_path, std::string out_dir, int64_t seed_flag) {
  RunConfig cfg = load_or_default(config_path);
  if (out_dir.empty()) out_dir = cfg.out_dir;
  const uint64_t seed = seed_flag >= 0 ? static_cast<uint64_t>(seed_flag) : cfg.seeds.front();
  const DomainStream stream = build_stream(cfg.stream_config(seed));
  const std::string dir = (fs::path(out_dir) / ("stream_s" + std::to_string(seed))).string();
  write_stream(stream, dir);
  std::cout << "wrote " << stream.frames.size() << " frames to " << dir << "/manifest.txt\n";
  return 0;
}

int cmd_train_source(const std::string& config_path, std::string out_dir) {
  RunConfig cfg = load_or_default(config_path);
  if (out_dir.empty()) out_dir = cfg.out_dir;
  const HeadParams params = pretrain_from_config(cfg);
  const double score = evaluate_miou(params, holdout_scenes_for(cfg));
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "source.cprm").string();
  write_params(path, params);
  std::cout << "wrote " << path << " (holdout mIoU " << score << ")\n";
  return 0;
}

int cmd_adapt(const std::string& config_path, std::string out_dir, int64_t seed_flag,
              const std::string& method_flag, const std::string& sweep_flag,
              const std::string& stream_manifest, const std::string& params_path,
              bool dump_loss_maps) {
  RunConfig cfg = load_or_default(config_path);
  if (out_dir.empty()) out_dir = cfg.out_dir;
  if (seed_flag >= 0) cfg.seeds = {static_cast<uint64_t>(seed_flag)};
  if (!method_flag.empty()) cfg.methods = {parse_method(method_flag)};
  if (!sweep_flag.empty()) cfg.sweep = sweep_flag;
  cfg.validate();
  if (!stream_manifest.empty() && cfg.seeds.size() > 1)
    throw ConfigError("adapt: a fixed --stream manifest needs a single --seed label");

  HeadParams source;
  if (!params_path.empty()) {
    source = read_params(params_path);
  } else if (fs::exists(fs::path(out_dir) / "source.cprm")) {
    source = read_params((fs::path(out_dir) / "source.cprm").string());
  } else {
    std::cout << "no --params given and no source.cprm in " << out_dir
              << "; pretraining source model\n";
    source = pretrain_from_config(cfg);
    fs::create_directories(out_dir);
    write_params((fs::path(out_dir) / "source.cprm").string(), source);
  }
  if (source.classes != cfg.classes)
    throw ConfigError("adapt: source model class count does not match config");

  std::vector<AdaptJob> jobs;
  auto add_jobs = [&](const RunConfig& run_cfg, const std::string& key,
                      const std::string& value) {
    for (MethodKind method : run_cfg.methods) {
      for (uint64_t seed : run_cfg.seeds) {
        AdaptJob job;
        job.cfg = run_cfg;
        job.method = method;
        job.seed = seed;
        job.sweep_key = key;
        job.sweep_value = value;
        job.stream_manifest = stream_manifest;
        job.dump_loss_maps = dump_loss_maps;
        std::string dir = std::string(method_name(method)) + "_s" + std::to_string(seed);
        if (!key.empty()) dir += "__" + sanitize(key) + "_" + sanitize(value);
        job.run_dir = (fs::path(out_dir) / "runs" / dir).string();
        jobs.push_back(std::move(job));
      }
    }
  };

  if (cfg.sweep.empty()) {
    add_jobs(cfg, "", "");
  } else {
    const SweepRequest sweep = parse_sweep(cfg.sweep);
    for (const std::string& value : sweep.values) {
      RunConfig swept = cfg;
      swept.sweep.clear();
      config_set(swept, sweep.key, value);
      swept.validate();
      add_jobs(swept, sweep.key, value);
    }
  }

  std::vector<std::function<void()>> tasks;
  tasks.reserve(jobs.size());
  for (const AdaptJob& job : jobs)
    tasks.push_back([&job, &source] { execute_adapt_job(job, source); });
  run_parallel(tasks);
  std::cout << "completed " << jobs.size() << " runs under " << out_dir << "/runs\n";
  return 0;
}

int cmd_report(std::string runs_dir, std::string report_dir, const std::string& config_path) {
  if (runs_dir.empty()) {
    RunConfig cfg = load_or_default(config_path);
    runs_dir = (fs::path(cfg.out_dir) / "runs").string();
    if (report_dir.empty()) report_dir = (fs::path(cfg.out_dir) / "report").string();
  }
  if (report_dir.empty()) report_dir = (fs::path(runs_dir).parent_path() / "report").string();
  const std::vector<LoadedRun> runs = load_runs(runs_dir);
  write_report(report_dir, runs);
  std::cout << "report for " << runs.size() << " runs written to " << report_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual test-time adaptation workbench for synthetic dense prediction"};
  app.require_subcommand(1);

  std::string config_path, out_dir, method_flag, sweep_flag, stream_manifest, params_path;
  std::string runs_dir, report_dir;
  int64_t seed_flag = -1;
  bool dump_loss_maps = false;

  auto* gen = app.add_subcommand("gen-stream", "generate a domain-shift stream on disk");
  gen->add_option("--config", config_path, "run config file");
  gen->add_option("--out", out_dir, "output directory (default from config)");
  gen->add_option("--seed", seed_flag, "stream seed (default: first config seed)");

  auto* train = app.add_subcommand("train-source", "pretrain the source model on clean scenes");
  train->add_option("--config", config_path, "run config file");
  train->add_option("--out", out_dir, "output directory (default from config)");

  auto* adapt = app.add_subcommand("adapt", "run adaptation methods over the stream");
  adapt->add_option("--config", config_path, "run config file");
  adapt->add_option("--out", out_dir, "output directory (default from config)");
  adapt->add_option("--seed", seed_flag, "run a single seed instead of the config list");
  adapt->add_option("--method", method_flag, "run a single method instead of the config list");
  adapt->add_option("--sweep", sweep_flag, "hyperparameter sweep, e.g. icat.initial_threshold=0.7,0.9,0.99");
  adapt->add_option("--stream", stream_manifest, "stream manifest to adapt on (default: generate in memory)");
  adapt->add_option("--params", params_path, "source model parameters (.cprm)");
  adapt->add_flag("--dump-loss-maps", dump_loss_maps, "export per-frame weighted loss maps");

  auto* report = app.add_subcommand("report", "aggregate run CSVs into tables and SVG charts");
  report->add_option("--runs", runs_dir, "directory containing run subdirectories");
  report->add_option("--out", report_dir, "report output directory");
  report->add_option("--config", config_path, "run config file (for default paths)");

  auto* verify = app.add_subcommand("verify", "run the built-in invariant and oracle battery");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_stream(config_path, out_dir, seed_flag);
    if (train->parsed()) return cmd_train_source(config_path, out_dir);
    if (adapt->parsed())
      return cmd_adapt(config_path, out_dir, seed_flag, method_flag, sweep_flag, stream_manifest,
                       params_path, dump_loss_maps);
    if (report->parsed()) return cmd_report(runs_dir, report_dir, config_path);
    if (verify->parsed()) return run_verify_battery(std::cout) ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
