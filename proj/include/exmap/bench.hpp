#pragma once

// Timing harness for the raster kernel against the per-pixel reference.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "exmap/confmap.hpp"
#include "exmap/geometry.hpp"

namespace exmap {

struct TimingSummary {
  double median_ms = 0.0;
  double min_ms = 0.0;
};

struct BenchReport {
  GridShape shape;
  int iterations = 0;
  TimingSummary confmap;     // both fast fields + side normalization + combination
  TimingSummary fast_field;  // one distance_field_fast
  TimingSummary naive_field; // one distance_field_naive
  double max_abs_diff = 0.0;
  bool equivalent = true;

  double speedup() const { return naive_field.median_ms / fast_field.median_ms; }
};

inline TimingSummary summarize(std::vector<double> ms) {
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  const double median = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  return {median, ms.front()};
}

/// Extreme points whose cue segments cross near-perpendicularly somewhere
/// inside the grid: each point is drawn from its own outer third.
inline ExtremePoints random_extremes(GridShape shape, std::mt19937_64& rng) {
  const double w = shape.width - 1.0;
  const double h = shape.height - 1.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  ExtremePoints e;
  e.left = {in(0.0, w / 3), in(h / 3, 2 * h / 3)};
  e.right = {in(2 * w / 3, w), in(h / 3, 2 * h / 3)};
  e.top = {in(w / 3, 2 * w / 3), in(0.0, h / 3)};
  e.bottom = {in(w / 3, 2 * w / 3), in(2 * h / 3, h)};
  return e;
}

inline double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

/// Keeps freed blocks in the heap so repeated raster allocations do not pay a
/// page fault per 4 KiB. Without it glibc returns each multi-megabyte result
/// to the kernel on free and the timings measure page faulting rather than the
/// kernels. Process-wide; a no-op off glibc.
inline void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

/// Steady-state timings (see retain_freed_memory). Each iteration draws a fresh cue, checks the fast field of its first
/// segment against the reference (tolerance 1e-9), then times the kernels.
inline BenchReport run_bench(GridShape shape, int iterations, std::uint64_t seed,
                             double tolerance = 1e-9) {
  using clock = std::chrono::steady_clock;
  const auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };
  retain_freed_memory();
  std::mt19937_64 rng(seed);
  BenchReport report;
  report.shape = shape;
  report.iterations = iterations;
  std::vector<double> confmap_ms, fast_ms, naive_ms;
  for (int i = 0; i < iterations; ++i) {
    const CuePair cue = cue_pair_from_extremes(random_extremes(shape, rng));

    auto t0 = clock::now();
    const auto fast = distance_field_fast(shape, cue.seg_a, cue.c);
    fast_ms.push_back(ms_since(t0));

    t0 = clock::now();
    const ScalarField naive = distance_field_naive(shape, cue.seg_a);
    naive_ms.push_back(ms_since(t0));

    const double diff = max_abs_diff(fast.field, naive);
    report.max_abs_diff = std::max(report.max_abs_diff, diff);
    if (!(diff <= tolerance)) {
      report.equivalent = false;
      return report;
    }

    t0 = clock::now();
    const ConfidenceMap map = confidence_map(shape, cue);
    confmap_ms.push_back(ms_since(t0));
    if (map.field.size() != shape.size()) report.equivalent = false;
  }
  report.confmap = summarize(confmap_ms);
  report.fast_field = summarize(fast_ms);
  report.naive_field = summarize(naive_ms);
  return report;
}

}  // namespace exmap
