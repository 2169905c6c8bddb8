#pragma once

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotica/io.hpp"
#include "cotica/scene.hpp"

namespace cotica {

// On-disk stream layout: a manifest listing every frame plus one CGRD image
// and one CGRD label map per frame under frames/.
//
//   cotica-stream v1
//   classes = 6
//   height = 64
//   width = 96
//   rounds = 3
//   frames_per_domain = 20
//   schedule = fog,night,rain,snow
//   frames = 240
//   frame 0 round=0 domain=fog findex=0 severity=0.8 image=frames/f000000.img.cgrd labels=frames/f000000.lab.cgrd
//   ...
//
// Frame paths are relative to the manifest's directory.

inline void write_stream(const DomainStream& stream, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "frames");

  std::string manifest = "cotica-stream v1\n";
  manifest += "classes = " + std::to_string(stream.class_count) + "\n";
  manifest += "height = " + std::to_string(stream.frames.front().image.height()) + "\n";
  manifest += "width = " + std::to_string(stream.frames.front().image.width()) + "\n";
  manifest += "rounds = " + std::to_string(stream.rounds) + "\n";
  manifest += "frames_per_domain = " + std::to_string(stream.frames_per_domain) + "\n";
  manifest += "schedule = ";
  for (size_t i = 0; i < stream.schedule.size(); ++i)
    manifest += std::string(i ? "," : "") + domain_name(stream.schedule[i]);
  manifest += "\n";
  manifest += "frames = " + std::to_string(stream.frames.size()) + "\n";

  for (const StreamFrame& f : stream.frames) {
    char base[32];
    std::snprintf(base, sizeof(base), "f%06d", f.global_index);
    const std::string img_rel = std::string("frames/") + base + ".img.cgrd";
    const std::string lab_rel = std::string("frames/") + base + ".lab.cgrd";
    write_cgrd((fs::path(dir) / img_rel).string(), f.image);
    write_cgrd((fs::path(dir) / lab_rel).string(), f.labels);
    manifest += "frame " + std::to_string(f.global_index) + " round=" + std::to_string(f.round) +
                " domain=" + domain_name(f.domain) +
                " findex=" + std::to_string(f.frame_in_domain) +
                " severity=" + detail::fmt_double(f.severity) + " image=" + img_rel +
                " labels=" + lab_rel + "\n";
  }
  detail::write_file((fs::path(dir) / "manifest.txt").string(), manifest);
}

namespace detail {

inline std::string manifest_value(const std::string& line, const std::string& key) {
  const std::string prefix = key + "=";
  const size_t pos = line.find(prefix);
  if (pos == std::string::npos)
    throw std::runtime_error("stream manifest: missing field '" + key + "' in: " + line);
  const size_t start = pos + prefix.size();
  const size_t end = line.find(' ', start);
  return line.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

}  // namespace detail

inline DomainStream read_stream(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(manifest_path).parent_path();
  std::istringstream in(detail::read_file(manifest_path));
  std::string line;
  if (!std::getline(in, line) || line != "cotica-stream v1")
    throw std::runtime_error("not a cotica stream manifest: " + manifest_path);

  DomainStream stream;
  size_t expected_frames = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("frame ", 0) == 0) {
      StreamFrame f;
      std::istringstream ls(line);
      std::string word;
      ls >> word >> f.global_index;
      f.round = std::stoi(detail::manifest_value(line, "round"));
      f.domain = parse_domain(detail::manifest_value(line, "domain"));
      f.frame_in_domain = std::stoi(detail::manifest_value(line, "findex"));
      f.severity = std::stod(detail::manifest_value(line, "severity"));
      f.image = read_cgrd((base / detail::manifest_value(line, "image")).string());
      f.labels = read_cgrd_labels((base / detail::manifest_value(line, "labels")).string());
      stream.frames.push_back(std::move(f));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("stream manifest: bad line: " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (value.empty()) throw std::runtime_error("stream manifest: empty value: " + line);
    if (key == "classes") stream.class_count = std::stoi(value);
    else if (key == "rounds") stream.rounds = std::stoi(value);
    else if (key == "frames_per_domain") stream.frames_per_domain = std::stoi(value);
    else if (key == "schedule") {
      std::istringstream ss(value);
      std::string d;
      while (std::getline(ss, d, ',')) stream.schedule.push_back(parse_domain(d));
    } else if (key == "frames") expected_frames = std::stoul(value);
    else if (key == "height" || key == "width") {
      // informational; frame grids carry their own dims
    } else {
      throw std::runtime_error("stream manifest: unknown field '" + key + "'");
    }
  }
  if (stream.frames.size() != expected_frames)
    throw std::runtime_error("stream manifest: frame count mismatch");
  return stream;
}

}  // namespace cotica
