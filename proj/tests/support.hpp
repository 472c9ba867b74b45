#pragma once

// Seeded generators, brute-force oracles and scratch directories shared by
// the test binaries.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "exmap/confmap.hpp"
#include "exmap/geometry.hpp"
#include "exmap/raster.hpp"

namespace exmap::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool coin() { return (rng_() >> 63) != 0; }
  std::mt19937_64& engine() { return rng_; }

  Point2 point(double x0, double x1, double y0, double y1) { return {uniform(x0, x1), uniform(y0, y1)}; }

  /// Segment with endpoints anywhere in a margin around the grid, long enough
  /// to be well conditioned, and a centre on its line (possibly outside it).
  std::pair<Segment2, Point2> segment_and_center(GridShape shape) {
    const double w = shape.width, h = shape.height;
    for (;;) {
      const Point2 p = point(-0.25 * w, 1.25 * w, -0.25 * h, 1.25 * h);
      const Point2 q = point(-0.25 * w, 1.25 * w, -0.25 * h, 1.25 * h);
      const Segment2 seg{p, q};
      if (seg.length() < 2.0) continue;
      const double t = uniform(-0.3, 1.3);
      return {seg, p + t * (q - p)};
    }
  }

  /// Extreme points whose segments cross inside the grid at a healthy angle.
  ExtremePoints extremes(GridShape shape) {
    const double w = shape.width - 1.0, h = shape.height - 1.0;
    ExtremePoints e;
    e.left = point(0.0, 0.3 * w, 0.3 * h, 0.7 * h);
    e.right = point(0.7 * w, w, 0.3 * h, 0.7 * h);
    e.top = point(0.3 * w, 0.7 * w, 0.0, 0.3 * h);
    e.bottom = point(0.3 * w, 0.7 * w, 0.7 * h, h);
    return e;
  }

 private:
  std::mt19937_64 rng_;
};

inline BinaryMask disk_mask(GridShape shape, Point2 centre, double radius) {
  BinaryMask m(shape);
  for (int y = 0; y < shape.height; ++y) {
    for (int x = 0; x < shape.width; ++x) {
      const double dx = x - centre.x, dy = y - centre.y;
      m(x, y) = dx * dx + dy * dy <= radius * radius;
    }
  }
  return m;
}

/// Union of a few random disks and rectangles: a connected-ish blob with
/// plenty of ties along its extreme rows and columns.
inline BinaryMask blob_mask(GridShape shape, Gen& g) {
  BinaryMask m(shape);
  const int parts = g.integer(1, 5);
  Point2 anchor = g.point(0.3 * shape.width, 0.7 * shape.width, 0.3 * shape.height, 0.7 * shape.height);
  for (int i = 0; i < parts; ++i) {
    const Point2 c = anchor + Point2{g.uniform(-8, 8), g.uniform(-8, 8)};
    const double r = g.uniform(1.5, 9.0);
    const bool rect = g.coin();
    for (int y = 0; y < shape.height; ++y) {
      for (int x = 0; x < shape.width; ++x) {
        const double dx = x - c.x, dy = y - c.y;
        const bool in = rect ? std::abs(dx) <= r && std::abs(dy) <= 0.6 * r : dx * dx + dy * dy <= r * r;
        if (in) m(x, y) = 1;
      }
    }
    anchor = c;
  }
  return m;
}

/// Scan oracle for extreme points: collect every foreground pixel, keep those
/// at the extreme coordinate, and take the lower median of the other one.
inline ExtremePoints scan_extremes(const BinaryMask& m) {
  std::vector<std::pair<int, int>> px;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m(x, y)) px.emplace_back(x, y);
    }
  }
  const auto pick = [&](bool by_x, bool want_max) {
    int best = want_max ? -1 : 1 << 30;
    for (auto [x, y] : px) {
      const int v = by_x ? x : y;
      best = want_max ? std::max(best, v) : std::min(best, v);
    }
    std::vector<int> other;
    for (auto [x, y] : px) {
      if ((by_x ? x : y) == best) other.push_back(by_x ? y : x);
    }
    std::sort(other.begin(), other.end());
    const int med = other[(other.size() - 1) / 2];
    return by_x ? Point2{double(best), double(med)} : Point2{double(med), double(best)};
  };
  return {pick(true, false), pick(true, true), pick(false, false), pick(false, true)};
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("exmap-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  /// Sorted relative names of everything under the directory.
  std::vector<std::string> listing() const {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(path_)) {
      out.push_back(std::filesystem::relative(e.path(), path_).generic_string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::filesystem::path path_;
};

inline double max_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace exmap::testing
