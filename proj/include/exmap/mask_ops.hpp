#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <limits>
#include <vector>

#include "exmap/confmap.hpp"
#include "exmap/error.hpp"
#include "exmap/geometry.hpp"
#include "exmap/raster.hpp"
#include "exmap/sym2.hpp"

namespace exmap {

namespace detail {

inline int lower_median(const std::vector<int>& sorted) {
  return sorted[(sorted.size() - 1) / 2];
}

}  // namespace detail

/// Leftmost, rightmost, topmost and bottommost foreground pixels. Among pixels
/// sharing the extreme coordinate the one at the lower median of the other
/// coordinate wins.
inline ExtremePoints extract_extreme_points(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  int min_x = std::numeric_limits<int>::max(), max_x = -1;
  int min_y = std::numeric_limits<int>::max(), max_y = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y)) continue;
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
  }
  if (max_x < 0) throw Error(ErrorCode::EmptyMask, "mask has no foreground pixels");

  const auto column = [&](int x) {
    std::vector<int> ys;
    for (int y = 0; y < h; ++y) {
      if (mask(x, y)) ys.push_back(y);
    }
    return ys;
  };
  const auto row = [&](int y) {
    std::vector<int> xs;
    for (int x = 0; x < w; ++x) {
      if (mask(x, y)) xs.push_back(x);
    }
    return xs;
  };
  const auto pt = [](int x, int y) { return Point2{static_cast<double>(x), static_cast<double>(y)}; };

  ExtremePoints e;
  e.left = pt(min_x, detail::lower_median(column(min_x)));
  e.right = pt(max_x, detail::lower_median(column(max_x)));
  e.top = pt(detail::lower_median(row(min_y)), min_y);
  e.bottom = pt(detail::lower_median(row(max_y)), max_y);
  return e;
}

struct BoxSize {
  double w = 0.0;
  double h = 0.0;

  double longest() const noexcept { return std::max(w, h); }
};

inline BoxSize bounding_box(const ExtremePoints& e) {
  validate(e);
  return {e.right.x - e.left.x, e.bottom.y - e.top.y};
}

struct MaskStats {
  Point2 centroid;
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d R = Eigen::Matrix2d::Identity();
  std::array<double, 2> lambda{0.0, 0.0};
  std::size_t count = 0;
};

/// Population covariance of foreground pixel coordinates and its eigenframe.
inline MaskStats mask_covariance(const BinaryMask& mask) {
  MaskStats stats;
  double sx = 0.0, sy = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      sx += x;
      sy += y;
      ++stats.count;
    }
  }
  if (stats.count == 0) throw Error(ErrorCode::EmptyMask, "mask has no foreground pixels");
  if (stats.count < 3) {
    throw Error(ErrorCode::SingularCovariance, "covariance needs at least 3 foreground pixels");
  }
  const double n = static_cast<double>(stats.count);
  stats.centroid = {sx / n, sy / n};

  double cxx = 0.0, cxy = 0.0, cyy = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      const double dx = x - stats.centroid.x;
      const double dy = y - stats.centroid.y;
      cxx += dx * dx;
      cxy += dx * dy;
      cyy += dy * dy;
    }
  }
  stats.S << cxx / n, cxy / n, cxy / n, cyy / n;

  const Sym2Eigen eig = eigen_sym2(stats.S);
  if (eig.lambda[1] < kSigmaFloor) {
    throw Error(ErrorCode::SingularCovariance, "foreground pixels are collinear");
  }
  stats.R = eig.rotation;
  stats.lambda = eig.lambda;
  return stats;
}

enum class StatsCenter { SegmentIntersection, Centroid };

/// Statistics for the simplified map derived from a ground-truth mask.
inline SimplifiedStats simplified_stats_from_mask(const BinaryMask& mask, double tau = kDefaultTau,
                                                  StatsCenter center = StatsCenter::SegmentIntersection) {
  const MaskStats stats = mask_covariance(mask);
  Point2 c = stats.centroid;
  if (center == StatsCenter::SegmentIntersection) {
    c = cue_pair_from_extremes(extract_extreme_points(mask)).c;
  }
  return SimplifiedStats::from_covariance(c, stats.S, tau);
}

}  // namespace exmap
