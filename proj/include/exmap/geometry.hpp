#pragma once

// Scalar segment geometry and the raster distance-field kernel.
//
// distance_field_fast evaluates the distance to a segment for a whole grid by
// moving into a frame centred on a point of the segment's line and aligned
// with it: pixels whose rotated along-axis coordinate falls outside the
// endpoints measure to the nearest endpoint, all others measure the
// perpendicular offset. distance_field_naive is the per-pixel reference.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "exmap/error.hpp"
#include "exmap/raster.hpp"

namespace exmap {

/// Lower bound applied to every per-side spread.
inline constexpr double kSigmaFloor = 1e-6;
/// Segments shorter than this are degenerate.
inline constexpr double kDegenerateLength = 1e-12;

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Point2 operator+(Point2 a, Point2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point2 operator-(Point2 a, Point2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point2 operator*(double s, Point2 a) noexcept { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(const Point2&, const Point2&) = default;
};

constexpr double dot(Point2 a, Point2 b) noexcept { return a.x * b.x + a.y * b.y; }
constexpr double cross(Point2 a, Point2 b) noexcept { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) noexcept { return std::hypot(a.x, a.y); }
inline bool is_finite(Point2 a) noexcept { return std::isfinite(a.x) && std::isfinite(a.y); }

struct Segment2 {
  Point2 p;
  Point2 q;

  double length() const noexcept { return norm(q - p); }
  bool degenerate() const noexcept { return length() < kDegenerateLength; }

  friend constexpr bool operator==(const Segment2&, const Segment2&) = default;
};

/// Frame centred at c with the x axis along the segment (endpoint 1 toward 2).
struct RotatedFrame {
  Point2 c;
  double cos_t = 1.0;
  double sin_t = 0.0;
  double x1_rot = 0.0;
  double x2_rot = 0.0;

  double along(Point2 p) const noexcept { return (p.x - c.x) * cos_t + (p.y - c.y) * sin_t; }
  double across(Point2 p) const noexcept { return -(p.x - c.x) * sin_t + (p.y - c.y) * cos_t; }

  /// Spread on the side of c holding endpoint 1 (along <= 0) and endpoint 2.
  double sigma_first() const noexcept { return std::max(std::abs(x1_rot), kSigmaFloor); }
  double sigma_second() const noexcept { return std::max(std::abs(x2_rot), kSigmaFloor); }
};

/// Region labels produced by distance_field_fast. m_x1/m_x2/m_p partition the
/// grid: beyond endpoint 1, beyond endpoint 2, and the perpendicular strip.
/// m_left/m_right split it about c (m_right is along > 0, the endpoint-2 side).
struct SideMasks {
  BoolRaster m_x1;
  BoolRaster m_x2;
  BoolRaster m_p;
  BoolRaster m_left;
  BoolRaster m_right;
};

struct DistanceFieldResult {
  ScalarField field;
  SideMasks masks;
  RotatedFrame frame;
};

namespace detail {

inline void require_finite(Point2 p, const char* what) {
  if (!is_finite(p)) throw Error(ErrorCode::NonFinite, std::string(what) + " is not finite");
}

inline void require_finite(const Segment2& s, const char* what) {
  if (!is_finite(s.p) || !is_finite(s.q)) {
    throw Error(ErrorCode::NonFinite, std::string(what) + " is not finite");
  }
}

using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ByteArray = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Expr>
BoolRaster to_raster(GridShape shape, const Expr& mask) {
  BoolRaster out(shape);
  Eigen::Map<Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      out.data(), shape.height, shape.width) = mask.template cast<std::uint8_t>();
  return out;
}

}  // namespace detail

/// Euclidean distance from p to the closed segment. A zero-length segment is
/// treated as a point.
inline double point_segment_distance(Point2 p, const Segment2& seg) {
  detail::require_finite(p, "point");
  detail::require_finite(seg, "segment");
  const Point2 d = seg.q - seg.p;
  const double len2 = dot(d, d);
  if (len2 == 0.0) return norm(p - seg.p);
  const double t = std::clamp(dot(p - seg.p, d) / len2, 0.0, 1.0);
  const Point2 foot = seg.p + t * d;
  return norm(p - foot);
}

/// Intersection of the infinite lines through s1 and s2. The point need not lie
/// inside either segment.
inline Point2 segment_intersection(const Segment2& s1, const Segment2& s2) {
  detail::require_finite(s1, "segment");
  detail::require_finite(s2, "segment");
  if (s1.degenerate() || s2.degenerate()) {
    throw Error(ErrorCode::Degenerate, "cannot intersect a zero-length segment");
  }
  const Point2 d1 = s1.q - s1.p;
  const Point2 d2 = s2.q - s2.p;
  const double denom = cross(d1, d2);
  if (std::abs(denom) <= 1e-9 * s1.length() * s2.length()) {
    throw Error(ErrorCode::NearParallel, "segment lines are parallel or nearly so");
  }
  const double t = cross(s2.p - s1.p, d2) / denom;
  return s1.p + t * d1;
}

/// Reference distance field: one point_segment_distance call per pixel center.
inline ScalarField distance_field_naive(GridShape shape, const Segment2& seg) {
  require_valid(shape);
  detail::require_finite(seg, "segment");
  ScalarField out(shape);
  for (int y = 0; y < shape.height; ++y) {
    for (int x = 0; x < shape.width; ++x) {
      out(x, y) = point_segment_distance({static_cast<double>(x), static_cast<double>(y)}, seg);
    }
  }
  return out;
}

/// Builds the rotated frame for seg centred at c. c is first projected onto the
/// segment's line so endpoint across-coordinates vanish.
inline RotatedFrame make_frame(const Segment2& seg, Point2 c) {
  detail::require_finite(seg, "segment");
  detail::require_finite(c, "center");
  const double len = seg.length();
  if (len < kDegenerateLength) throw Error(ErrorCode::Degenerate, "zero-length segment");

  const Point2 u = (1.0 / len) * (seg.q - seg.p);
  const double offset = cross(u, c - seg.p);
  if (std::abs(offset) > 1e-6 * len) {
    throw Error(ErrorCode::CenterOffLine, "center is " + std::to_string(std::abs(offset)) +
                                              " px off the segment line");
  }
  RotatedFrame frame;
  frame.cos_t = u.x;
  frame.sin_t = u.y;
  frame.c = seg.p + dot(c - seg.p, u) * u;
  frame.x1_rot = frame.along(seg.p);
  frame.x2_rot = frame.along(seg.q);
  return frame;
}

/// Whole-raster distance field to seg, expressed in a frame centred at c (a
/// point on seg's line). Agrees with distance_field_naive to 1e-9.
inline DistanceFieldResult distance_field_fast(GridShape shape, const Segment2& seg, Point2 c) {
  require_valid(shape);
  const RotatedFrame frame = make_frame(seg, c);
  const Eigen::Index w = shape.width;
  const Eigen::Index h = shape.height;

  DistanceFieldResult result;
  result.field = ScalarField(shape);
  result.masks = {BoolRaster(shape), BoolRaster(shape), BoolRaster(shape), BoolRaster(shape),
                  BoolRaster(shape)};
  auto field = Eigen::Map<detail::RowArray>(result.field.data(), h, w);
  const auto mask_map = [&](BoolRaster& m) { return Eigen::Map<detail::ByteArray>(m.data(), h, w); };
  auto m_x1 = mask_map(result.masks.m_x1);
  auto m_x2 = mask_map(result.masks.m_x2);
  auto m_p = mask_map(result.masks.m_p);
  auto m_left = mask_map(result.masks.m_left);
  auto m_right = mask_map(result.masks.m_right);

  // meshgrid shifted to the centre and rotated into the segment frame. Both
  // rotated coordinates are affine in (x, y): each grid row is a fixed row
  // vector plus a per-row offset. Evaluated over row tiles so the
  // intermediates stay cache resident.
  const Eigen::ArrayXd xs = Eigen::ArrayXd::LinSpaced(w, 0.0, static_cast<double>(w - 1)) - frame.c.x;
  const Eigen::ArrayXd ys = Eigen::ArrayXd::LinSpaced(h, 0.0, static_cast<double>(h - 1)) - frame.c.y;
  const Eigen::Array<double, 1, Eigen::Dynamic> xs_cos = (xs * frame.cos_t).transpose();
  const Eigen::Array<double, 1, Eigen::Dynamic> xs_sin = (xs * frame.sin_t).transpose();
  const Eigen::Index tile = std::max<Eigen::Index>(1, std::min<Eigen::Index>(h, 8192 / w + 1));
  detail::RowArray x_rot(tile, w);
  detail::RowArray y_rot(tile, w);
  for (Eigen::Index y0 = 0; y0 < h; y0 += tile) {
    const Eigen::Index n = std::min(tile, h - y0);
    for (Eigen::Index i = 0; i < n; ++i) {
      x_rot.row(i) = xs_cos + ys(y0 + i) * frame.sin_t;
      y_rot.row(i) = ys(y0 + i) * frame.cos_t - xs_sin;
    }
    const auto xr = x_rot.topRows(n);
    const auto yr = y_rot.topRows(n);

    // Comparisons go through a 0/1 double select so the byte casts vectorize.
    const auto ones = detail::RowArray::Ones(n, w);
    auto x1_rows = m_x1.middleRows(y0, n);
    auto x2_rows = m_x2.middleRows(y0, n);
    auto right_rows = m_right.middleRows(y0, n);
    x1_rows = (xr < frame.x1_rot).select(ones, 0.0).template cast<std::uint8_t>();
    x2_rows = (xr > frame.x2_rot).select(ones, 0.0).template cast<std::uint8_t>();
    right_rows = (xr > 0.0).select(ones, 0.0).template cast<std::uint8_t>();
    m_p.middleRows(y0, n) = 1 - x1_rows - x2_rows;
    m_left.middleRows(y0, n) = 1 - right_rows;

    // Blend of endpoint and perpendicular distances. The along-axis overshoot
    // is x1_rot - x_rot on the first mask, x_rot - x2_rot on the second and
    // zero in the strip; at most one of the two clamped terms is nonzero.
    const auto overshoot = (frame.x1_rot - xr).max(0.0) + (xr - frame.x2_rot).max(0.0);
    field.middleRows(y0, n) = (overshoot.square() + yr.square()).sqrt();
  }
  result.frame = frame;
  return result;
}

/// Divides each pixel by the spread of its side of c: the endpoint-2 side uses
/// |x2_rot|, the other side |x1_rot|, each floored at kSigmaFloor.
inline ScalarField normalize_by_side_variance(const ScalarField& field, const SideMasks& masks,
                                              const RotatedFrame& frame) {
  if (masks.m_right.shape() != field.shape()) {
    throw Error(ErrorCode::InvalidShape, "side masks do not match the field");
  }
  const GridShape shape = field.shape();
  const Eigen::Index w = shape.width;
  const Eigen::Index h = shape.height;
  const auto right = Eigen::Map<const detail::ByteArray>(masks.m_right.data(), h, w);
  const auto in = Eigen::Map<const detail::RowArray>(field.data(), h, w);

  ScalarField out(shape);
  Eigen::Map<detail::RowArray>(out.data(), h, w) =
      in / (right != 0).select(detail::RowArray::Constant(h, w, frame.sigma_second()),
                                 frame.sigma_first());
  return out;
}

}  // namespace exmap
