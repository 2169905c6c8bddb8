#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotica/adapt.hpp"
#include "cotica/io.hpp"
#include "cotica/metrics.hpp"
#include "cotica/svg.hpp"

namespace cotica {

// Rollup of the per-run CSVs into summary tables and charts. Every number
// emitted here is recomputed from the per-frame rows; the rollups carry no
// state of their own.

struct RunRecordRow {
  int frame = 0;
  int round = 0;
  std::string domain;
  double loss = 0.0;
  double miou = 0.0;
  std::vector<double> iou, accept, conf_ema, weights;
  std::vector<int64_t> cm;  // classes*classes, ground truth major
};

struct ThresholdRow {
  int frame = 0;
  int round = 0;
  std::string domain;
  int cls = 0;
  int64_t dist_pixels = 0;
  double percentile = 0.0;
  double threshold = 0.0;
  int64_t mask_pixels = 0;
  int64_t accepted = 0;
};

struct LoadedRun {
  std::string method;
  uint64_t seed = 0;
  std::string sweep_key;    // empty for plain runs
  std::string sweep_value;
  int classes = 0;
  std::vector<RunRecordRow> rows;
  std::vector<ThresholdRow> thresholds;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline LoadedRun parse_records_csv(const std::string& text) {
  LoadedRun run;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("records.csv: empty file");
  const auto header = split_csv_line(line);
  int classes = 0;
  for (const std::string& h : header)
    if (h.rfind("iou_", 0) == 0) ++classes;
  if (classes == 0) throw std::runtime_error("records.csv: no iou columns in header");
  run.classes = classes;

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw std::runtime_error("records.csv: ragged row");
    RunRecordRow row;
    size_t i = 0;
    run.method = f[i++];
    run.seed = std::stoull(f[i++]);
    row.frame = std::stoi(f[i++]);
    row.round = std::stoi(f[i++]);
    row.domain = f[i++];
    row.loss = std::strtod(f[i++].c_str(), nullptr);
    row.miou = std::strtod(f[i++].c_str(), nullptr);
    for (int c = 0; c < classes; ++c) row.iou.push_back(std::strtod(f[i++].c_str(), nullptr));
    for (int c = 0; c < classes; ++c) row.accept.push_back(std::strtod(f[i++].c_str(), nullptr));
    for (int c = 0; c < classes; ++c) row.conf_ema.push_back(std::strtod(f[i++].c_str(), nullptr));
    for (int c = 0; c < classes; ++c) row.weights.push_back(std::strtod(f[i++].c_str(), nullptr));
    for (int k = 0; k < classes * classes; ++k) row.cm.push_back(std::stoll(f[i++]));
    run.rows.push_back(std::move(row));
  }
  if (run.rows.empty()) throw std::runtime_error("records.csv: no data rows");
  return run;
}

inline std::vector<ThresholdRow> parse_thresholds_csv(const std::string& text) {
  std::vector<ThresholdRow> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < 12) throw std::runtime_error("thresholds.csv: ragged row");
    ThresholdRow row;
    row.frame = std::stoi(f[2]);
    row.round = std::stoi(f[3]);
    row.domain = f[4];
    row.cls = std::stoi(f[5]);
    row.dist_pixels = std::stoll(f[6]);
    row.percentile = std::strtod(f[7].c_str(), nullptr);
    row.threshold = std::strtod(f[8].c_str(), nullptr);
    row.mask_pixels = std::stoll(f[9]);
    row.accepted = std::stoll(f[10]);
    rows.push_back(row);
  }
  return rows;
}

inline std::map<std::string, std::string> parse_meta(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace detail

// Loads every run directory (containing records.csv) under runs_dir, sorted
// by path for deterministic output.
inline std::vector<LoadedRun> load_runs(const std::string& runs_dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(runs_dir)) throw std::runtime_error("run directory not found: " + runs_dir);
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(runs_dir))
    if (e.is_directory() && fs::exists(e.path() / "records.csv")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw std::runtime_error("no runs (records.csv) found under " + runs_dir);

  std::vector<LoadedRun> runs;
  for (const fs::path& dir : dirs) {
    LoadedRun run = detail::parse_records_csv(detail::read_file((dir / "records.csv").string()));
    if (fs::exists(dir / "thresholds.csv"))
      run.thresholds =
          detail::parse_thresholds_csv(detail::read_file((dir / "thresholds.csv").string()));
    if (fs::exists(dir / "meta.txt")) {
      const auto meta = detail::parse_meta(detail::read_file((dir / "meta.txt").string()));
      if (auto it = meta.find("sweep_key"); it != meta.end()) run.sweep_key = it->second;
      if (auto it = meta.find("sweep_value"); it != meta.end()) run.sweep_value = it->second;
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

namespace detail {

// (round, domain) cell key in first-seen stream order.
struct CellIndex {
  std::vector<std::pair<int, std::string>> cells;

  int index_of(int round, const std::string& domain) {
    for (size_t i = 0; i < cells.size(); ++i)
      if (cells[i].first == round && cells[i].second == domain) return static_cast<int>(i);
    cells.push_back({round, domain});
    return static_cast<int>(cells.size()) - 1;
  }
};

// Pooled-confusion mIoU per (round, domain) cell of one run.
inline std::vector<double> cell_mious(const LoadedRun& run, CellIndex& cells) {
  std::vector<ConfusionMatrix> cms;
  for (const RunRecordRow& row : run.rows) {
    const int idx = cells.index_of(row.round, row.domain);
    while (static_cast<int>(cms.size()) <= idx) cms.emplace_back(run.classes);
    for (int g = 0; g < run.classes; ++g)
      for (int p = 0; p < run.classes; ++p)
        cms[idx].at(g, p) += row.cm[static_cast<size_t>(g) * run.classes + p];
  }
  std::vector<double> out;
  for (auto& cm : cms) out.push_back(miou(cm));
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

// Per-class mean threshold and pooled augmentation-usage ratio of one run,
// restricted to classes that ever had mask pixels. Feeds the scatter chart
// and the rank correlation.
struct ThresholdUsage {
  std::vector<int> cls;
  std::vector<double> mean_threshold;
  std::vector<double> usage;
};

inline ThresholdUsage threshold_usage_of(const LoadedRun& run) {
  ThresholdUsage out;
  if (run.thresholds.empty() || run.classes == 0) return out;
  std::vector<double> tau_sum(run.classes, 0.0);
  std::vector<int64_t> tau_n(run.classes, 0), mask(run.classes, 0), acc(run.classes, 0);
  for (const ThresholdRow& r : run.thresholds) {
    tau_sum[r.cls] += r.threshold;
    tau_n[r.cls] += 1;
    mask[r.cls] += r.mask_pixels;
    acc[r.cls] += r.accepted;
  }
  for (int c = 0; c < run.classes; ++c) {
    if (mask[c] == 0 || tau_n[c] == 0) continue;
    out.cls.push_back(c);
    out.mean_threshold.push_back(tau_sum[c] / static_cast<double>(tau_n[c]));
    out.usage.push_back(1.0 - static_cast<double>(acc[c]) / static_cast<double>(mask[c]));
  }
  return out;
}

// Writes summary tables and charts for all runs into report_dir.
inline void write_report(const std::string& report_dir, const std::vector<LoadedRun>& runs) {
  namespace fs = std::filesystem;
  if (runs.empty()) throw std::runtime_error("write_report: no runs");
  fs::create_directories(report_dir);
  auto out_path = [&](const std::string& name) { return (fs::path(report_dir) / name).string(); };

  // Group by sweep coordinates; plain runs form the base group.
  std::map<std::pair<std::string, std::string>, std::vector<const LoadedRun*>> groups;
  for (const LoadedRun& r : runs) groups[{r.sweep_key, r.sweep_value}].push_back(&r);

  // --- base-group summary -------------------------------------------------
  const auto base_it = groups.find({"", ""});
  if (base_it != groups.end()) {
    const auto& base = base_it->second;
    detail::CellIndex cells;
    // method -> per-seed cell tables
    std::map<std::string, std::vector<std::vector<double>>, std::less<>> per_method;
    std::map<std::string, std::vector<uint64_t>, std::less<>> per_method_seeds;
    for (const LoadedRun* run : base) {
      per_method[run->method].push_back(detail::cell_mious(*run, cells));
      per_method_seeds[run->method].push_back(run->seed);
    }

    std::string header = "method";
    for (const auto& [round, domain] : cells.cells)
      header += ",r" + std::to_string(round + 1) + "_" + domain;
    header += ",mean,std,acc,gain_vs_source";

    // stream-pooled pixel accuracy per method (mean over seeds)
    std::map<std::string, double, std::less<>> method_acc;
    for (const LoadedRun* run : base) {
      ConfusionMatrix total(run->classes);
      for (const RunRecordRow& row : run->rows)
        for (int g = 0; g < run->classes; ++g)
          for (int p = 0; p < run->classes; ++p)
            total.at(g, p) += row.cm[static_cast<size_t>(g) * run->classes + p];
      method_acc[run->method] +=
          pixel_accuracy(total) / static_cast<double>(per_method[run->method].size());
    }

    // Per-seed table.
    std::string per_seed = "method,seed";
    for (const auto& [round, domain] : cells.cells)
      per_seed += ",r" + std::to_string(round + 1) + "_" + domain;
    per_seed += ",mean\n";

    std::map<std::string, double, std::less<>> method_mean;
    std::map<std::string, double, std::less<>> method_std;
    std::map<std::string, std::vector<double>, std::less<>> method_cells_mean;
    for (const auto& [method, tables] : per_method) {
      std::vector<double> run_means;
      std::vector<double> cell_mean(cells.cells.size(), 0.0);
      for (size_t s = 0; s < tables.size(); ++s) {
        const auto& t = tables[s];
        per_seed += method + "," + std::to_string(per_method_seeds[method][s]);
        for (size_t i = 0; i < cells.cells.size(); ++i) {
          const double v = i < t.size() ? t[i] : std::nan("");
          per_seed += "," + detail::fmt_double(v);
          cell_mean[i] += v / static_cast<double>(tables.size());
        }
        const double m = detail::mean_of(t);
        run_means.push_back(m);
        per_seed += "," + detail::fmt_double(m) + "\n";
      }
      method_mean[method] = detail::mean_of(run_means);
      method_std[method] = detail::stddev_of(run_means);
      method_cells_mean[method] = cell_mean;
    }

    const double source_mean =
        method_mean.count("source") ? method_mean["source"] : std::nan("");
    std::string summary = header + "\n";
    for (const auto& [method, m] : method_mean) {
      summary += method;
      for (double v : method_cells_mean[method]) summary += "," + detail::fmt_double(v);
      summary += "," + detail::fmt_double(m) + "," + detail::fmt_double(method_std[method]) +
                 "," + detail::fmt_double(method_acc[method]) + "," +
                 detail::fmt_double(m - source_mean) + "\n";
    }
    detail::write_file(out_path("summary.csv"), summary);
    detail::write_file(out_path("summary_per_seed.csv"), per_seed);

    // Per-round line chart, one series per method.
    {
      std::set<int> rounds;
      for (const auto& [round, domain] : cells.cells) rounds.insert(round);
      std::vector<SvgSeries> series;
      for (const auto& [method, cell_mean] : method_cells_mean) {
        SvgSeries s{method, {}};
        for (int round : rounds) {
          double sum = 0.0;
          int n = 0;
          for (size_t i = 0; i < cells.cells.size(); ++i)
            if (cells.cells[i].first == round) {
              sum += cell_mean[i];
              ++n;
            }
          if (n > 0) s.points.push_back({round + 1.0, sum / n});
        }
        series.push_back(std::move(s));
      }
      write_line_chart(out_path("summary_rounds.svg"), "mean mIoU per round", "round", "mIoU",
                       series);
    }

    // Per-class IoU, pooled confusion per (method, seed, round, domain).
    {
      std::string csv = "method,seed,round,domain,class,iou\n";
      std::map<std::string, std::vector<double>, std::less<>> class_pool_sum;
      std::map<std::string, std::vector<int>, std::less<>> class_pool_n;
      for (const LoadedRun* run : base) {
        std::map<std::pair<int, std::string>, ConfusionMatrix> cm;
        for (const RunRecordRow& row : run->rows) {
          auto [it, fresh] = cm.try_emplace({row.round, row.domain}, run->classes);
          for (int g = 0; g < run->classes; ++g)
            for (int p = 0; p < run->classes; ++p)
              it->second.at(g, p) += row.cm[static_cast<size_t>(g) * run->classes + p];
        }
        auto& sums = class_pool_sum[run->method];
        auto& ns = class_pool_n[run->method];
        sums.resize(run->classes, 0.0);
        ns.resize(run->classes, 0);
        for (const auto& [key, mat] : cm) {
          const auto iou = iou_per_class(mat);
          for (int c = 0; c < run->classes; ++c) {
            csv += run->method + "," + std::to_string(run->seed) + "," +
                   std::to_string(key.first + 1) + "," + key.second + "," + std::to_string(c) +
                   "," + detail::fmt_double(iou[c]) + "\n";
            if (!std::isnan(iou[c])) {
              sums[c] += iou[c];
              ns[c] += 1;
            }
          }
        }
      }
      detail::write_file(out_path("per_class_iou.csv"), csv);

      std::vector<std::string> class_names;
      int classes = base.front()->classes;
      for (int c = 0; c < classes; ++c) class_names.push_back(scene_class_name(c));
      std::vector<SvgSeries> series;
      for (const auto& [method, sums] : class_pool_sum) {
        SvgSeries s{method, {}};
        for (int c = 0; c < classes; ++c) {
          const int n = class_pool_n[method][c];
          s.points.push_back({static_cast<double>(c), n > 0 ? sums[c] / n : 0.0});
        }
        series.push_back(std::move(s));
      }
      write_bar_chart(out_path("per_class_iou.svg"), "per-class IoU", "IoU", class_names, series);
    }

    // Threshold vs augmentation usage + rank correlation.
    {
      std::string usage_csv = "method,seed,class,mean_threshold,usage_ratio\n";
      std::string rho_csv = "method,seed,rho,degenerate,classes_used\n";
      std::vector<SvgSeries> scatter;
      for (const LoadedRun* run : base) {
        const ThresholdUsage tu = threshold_usage_of(*run);
        if (tu.cls.empty()) continue;
        SvgSeries s{run->method + " s" + std::to_string(run->seed), {}};
        for (size_t i = 0; i < tu.cls.size(); ++i) {
          usage_csv += run->method + "," + std::to_string(run->seed) + "," +
                       std::to_string(tu.cls[i]) + "," + detail::fmt_double(tu.mean_threshold[i]) +
                       "," + detail::fmt_double(tu.usage[i]) + "\n";
          s.points.push_back({tu.mean_threshold[i], tu.usage[i]});
        }
        scatter.push_back(std::move(s));
        if (tu.cls.size() >= 3) {
          const SpearmanResult rho = spearman(tu.mean_threshold, tu.usage);
          rho_csv += run->method + "," + std::to_string(run->seed) + "," +
                     detail::fmt_double(rho.rho) + "," + (rho.degenerate ? "1" : "0") + "," +
                     std::to_string(tu.cls.size()) + "\n";
        }
      }
      detail::write_file(out_path("threshold_usage.csv"), usage_csv);
      detail::write_file(out_path("threshold_usage_rho.csv"), rho_csv);
      if (!scatter.empty())
        write_scatter_chart(out_path("threshold_usage.svg"),
                            "mean class threshold vs augmentation usage", "mean threshold",
                            "usage ratio", scatter);
    }
  }

  // --- sensitivity tables per swept key ------------------------------------
  std::set<std::string> sweep_keys;
  for (const LoadedRun& r : runs)
    if (!r.sweep_key.empty()) sweep_keys.insert(r.sweep_key);
  for (const std::string& key : sweep_keys) {
    // value -> method -> per-seed mean mIoU and per-round means
    std::map<double, std::map<std::string, std::vector<std::vector<double>>>> by_value;
    std::set<int> rounds;
    for (const auto& [gk, members] : groups) {
      if (gk.first != key) continue;
      const double value = std::strtod(gk.second.c_str(), nullptr);
      for (const LoadedRun* run : members) {
        detail::CellIndex cells;
        const auto mious = detail::cell_mious(*run, cells);
        std::map<int, std::pair<double, int>> per_round;
        for (size_t i = 0; i < cells.cells.size(); ++i) {
          per_round[cells.cells[i].first].first += mious[i];
          per_round[cells.cells[i].first].second += 1;
        }
        std::vector<double> round_means;
        for (const auto& [round, acc] : per_round) {
          rounds.insert(round);
          round_means.push_back(acc.first / acc.second);
        }
        by_value[value][run->method].push_back(round_means);
      }
    }
    std::string csv = "key,value,method,round,miou\n";
    std::map<std::string, SvgSeries, std::less<>> series;
    for (const auto& [value, methods] : by_value) {
      for (const auto& [method, tables] : methods) {
        const size_t nrounds = tables.front().size();
        double overall = 0.0;
        for (size_t r = 0; r < nrounds; ++r) {
          double m = 0.0;
          for (const auto& t : tables) m += t[r];
          m /= static_cast<double>(tables.size());
          overall += m / static_cast<double>(nrounds);
          csv += key + "," + detail::fmt_double(value) + "," + method + "," +
                 std::to_string(r + 1) + "," + detail::fmt_double(m) + "\n";
        }
        csv += key + "," + detail::fmt_double(value) + "," + method + ",all," +
               detail::fmt_double(overall) + "\n";
        auto [it, fresh] = series.try_emplace(method, SvgSeries{method, {}});
        it->second.points.push_back({value, overall});
      }
    }
    std::string safe_key = key;
    std::replace(safe_key.begin(), safe_key.end(), '.', '_');
    detail::write_file(out_path("sensitivity_" + safe_key + ".csv"), csv);
    std::vector<SvgSeries> chart;
    for (auto& [m, s] : series) {
      std::sort(s.points.begin(), s.points.end());
      chart.push_back(s);
    }
    write_line_chart(out_path("sensitivity_" + safe_key + ".svg"), "sensitivity: " + key, key,
                     "mean mIoU", chart);
  }
}

}  // namespace cotica
