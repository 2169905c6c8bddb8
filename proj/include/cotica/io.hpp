#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cotica/grid.hpp"

namespace cotica {
namespace detail {

// Little-endian encoding helpers shared by the CGRD and CPRM containers.

inline void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double v) {
  uint64_t bits = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const char* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline double get_f64(const char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

// Shortest decimal that round-trips an IEEE-754 double.
inline std::string fmt_double(double v) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    const double back = std::strtod(buf, nullptr);
    if (back == v || (std::isnan(back) && std::isnan(v))) break;
  }
  return buf;
}

inline std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// CGRD flat binary grid container:
//   bytes 0-3   magic "CGRD"
//   u32 LE      version (1)
//   u32 LE      height, width, channels
//   payload     height*width*channels f64 LE, row-major, channels interleaved
//               (index (y*W + x)*C + ch)
// Integer grids (label maps) store their values as exact f64.

inline constexpr uint32_t kCgrdVersion = 1;

inline void write_cgrd(const std::string& path, const GridD& g) {
  std::string buf;
  buf.reserve(20 + g.size() * 8);
  buf.append("CGRD");
  detail::put_u32(buf, kCgrdVersion);
  detail::put_u32(buf, static_cast<uint32_t>(g.height()));
  detail::put_u32(buf, static_cast<uint32_t>(g.width()));
  detail::put_u32(buf, static_cast<uint32_t>(g.channels()));
  for (double v : g.data()) detail::put_f64(buf, v);
  detail::write_file(path, buf);
}

inline GridD read_cgrd(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() < 20 || bytes.compare(0, 4, "CGRD") != 0)
    throw std::runtime_error("not a CGRD file: " + path);
  const uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kCgrdVersion) throw std::runtime_error("unsupported CGRD version in " + path);
  const uint32_t h = detail::get_u32(bytes.data() + 8);
  const uint32_t w = detail::get_u32(bytes.data() + 12);
  const uint32_t c = detail::get_u32(bytes.data() + 16);
  const size_t n = static_cast<size_t>(h) * w * c;
  if (bytes.size() != 20 + n * 8) throw std::runtime_error("truncated CGRD file: " + path);
  GridD g(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (size_t i = 0; i < n; ++i) g.data()[i] = detail::get_f64(bytes.data() + 20 + i * 8);
  return g;
}

inline void write_cgrd(const std::string& path, const GridI& g) {
  GridD d(g.height(), g.width(), g.channels());
  for (size_t i = 0; i < g.size(); ++i) d.data()[i] = static_cast<double>(g.data()[i]);
  write_cgrd(path, d);
}

inline GridI read_cgrd_labels(const std::string& path) {
  GridD d = read_cgrd(path);
  GridI g(d.height(), d.width(), d.channels());
  for (size_t i = 0; i < d.size(); ++i) g.data()[i] = static_cast<int32_t>(std::llround(d.data()[i]));
  return g;
}

// Lossless CSV debug export: one header row "height,width,channels", then one
// row per pixel with round-trip-exact decimal values.
inline void write_grid_csv(const std::string& path, const GridD& g) {
  std::string buf;
  buf += std::to_string(g.height()) + "," + std::to_string(g.width()) + "," +
         std::to_string(g.channels()) + "\n";
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      auto px = g.pixel(y, x);
      for (int c = 0; c < g.channels(); ++c) {
        if (c) buf += ",";
        buf += detail::fmt_double(px[c]);
      }
      buf += "\n";
    }
  }
  detail::write_file(path, buf);
}

inline void write_grid_csv(const std::string& path, const GridI& g) {
  std::string buf;
  buf += std::to_string(g.height()) + "," + std::to_string(g.width()) + "," +
         std::to_string(g.channels()) + "\n";
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      auto px = g.pixel(y, x);
      for (int c = 0; c < g.channels(); ++c) {
        if (c) buf += ",";
        buf += std::to_string(px[c]);
      }
      buf += "\n";
    }
  }
  detail::write_file(path, buf);
}

}  // namespace cotica
