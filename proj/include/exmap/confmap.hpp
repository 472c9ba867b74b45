#pragma once

// Confidence maps from four extreme points.
//
// The generalized map normalizes the distance to each cue segment by the
// spread of the side of c the pixel lies on, then combines the two normalized
// distances d_a, d_b as f = 1 / (1 + min(d_a, d_b) * hypot(d_a, d_b)).
// The simplified map uses a covariance eigenframe instead of the segments.

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exmap/error.hpp"
#include "exmap/geometry.hpp"
#include "exmap/raster.hpp"
#include "exmap/sym2.hpp"

namespace exmap {

inline constexpr double kDefaultTau = 3.0;
inline constexpr double kDefaultGaussianSigma = 10.0;

struct ExtremePoints {
  Point2 left;
  Point2 right;
  Point2 top;
  Point2 bottom;

  std::array<Point2, 4> as_array() const noexcept { return {left, right, top, bottom}; }

  friend constexpr bool operator==(const ExtremePoints&, const ExtremePoints&) = default;
};

/// Throws SchemaViolation naming the offending role.
inline void validate(const ExtremePoints& e) {
  const std::array<std::pair<const char*, Point2>, 4> named{
      {{"left", e.left}, {"right", e.right}, {"top", e.top}, {"bottom", e.bottom}}};
  for (const auto& [name, p] : named) {
    if (!is_finite(p)) throw SchemaError(name, "coordinates must be finite");
  }
  if (e.left.x > e.right.x) throw SchemaError("left", "left.x exceeds right.x");
  if (e.top.y > e.bottom.y) throw SchemaError("top", "top.y exceeds bottom.y");
}

inline void validate(const ExtremePoints& e, GridShape shape) {
  validate(e);
  const std::array<std::pair<const char*, Point2>, 4> named{
      {{"left", e.left}, {"right", e.right}, {"top", e.top}, {"bottom", e.bottom}}};
  for (const auto& [name, p] : named) {
    if (!shape.contains(p.x, p.y)) throw SchemaError(name, "point lies outside the grid");
  }
}

/// Per-side spreads of one cue segment: first is the side holding the
/// segment's first endpoint, second the side holding its second endpoint.
struct SidePair {
  double first = kSigmaFloor;
  double second = kSigmaFloor;
};

struct CuePair {
  Segment2 seg_a;  // left -> right
  Segment2 seg_b;  // top -> bottom
  Point2 c;
  SidePair sigma_a;
  SidePair sigma_b;
};

inline CuePair cue_pair_from_extremes(const ExtremePoints& e) {
  validate(e);
  CuePair cue;
  cue.seg_a = {e.left, e.right};
  cue.seg_b = {e.top, e.bottom};
  if (cue.seg_a.degenerate()) throw Error(ErrorCode::Degenerate, "left and right coincide");
  if (cue.seg_b.degenerate()) throw Error(ErrorCode::Degenerate, "top and bottom coincide");
  cue.c = segment_intersection(cue.seg_a, cue.seg_b);
  const auto spread = [&](Point2 endpoint) { return std::max(norm(endpoint - cue.c), kSigmaFloor); };
  cue.sigma_a = {spread(e.left), spread(e.right)};
  cue.sigma_b = {spread(e.top), spread(e.bottom)};
  return cue;
}

struct ConfidenceOptions {
  /// When set, pixels whose combined distance exceeds tau are zeroed.
  std::optional<double> tau;
};

struct ConfidenceMap {
  ScalarField field;
};

namespace detail {

inline double combine_distances(double da, double db, const ConfidenceOptions& options) {
  const double d1 = std::min(da, db);
  const double d2 = std::hypot(da, db);
  if (options.tau && d2 > *options.tau) return 0.0;
  return 1.0 / (1.0 + d1 * d2);
}

inline double side_normalized(Point2 p, const Segment2& seg, Point2 c, SidePair sigma) {
  const bool second_side = dot(p - c, seg.q - seg.p) > 0.0;
  return point_segment_distance(p, seg) / (second_side ? sigma.second : sigma.first);
}

}  // namespace detail

/// Scalar evaluation of the generalized map at one point.
inline double confidence_at(const CuePair& cue, Point2 p, const ConfidenceOptions& options = {}) {
  const double da = detail::side_normalized(p, cue.seg_a, cue.c, cue.sigma_a);
  const double db = detail::side_normalized(p, cue.seg_b, cue.c, cue.sigma_b);
  return detail::combine_distances(da, db, options);
}

/// Generalized confidence map over a grid, built from two raster distance
/// fields. Values lie in (0, 1] (or [0, 1] with a tau cutoff).
inline ConfidenceMap confidence_map(GridShape shape, const CuePair& cue,
                                    const ConfidenceOptions& options = {}) {
  const auto a = distance_field_fast(shape, cue.seg_a, cue.c);
  const auto b = distance_field_fast(shape, cue.seg_b, cue.c);
  const ScalarField da = normalize_by_side_variance(a.field, a.masks, a.frame);
  const ScalarField db = normalize_by_side_variance(b.field, b.masks, b.frame);

  const Eigen::Index n = static_cast<Eigen::Index>(shape.size());
  const auto va = Eigen::Map<const Eigen::ArrayXd>(da.data(), n);
  const auto vb = Eigen::Map<const Eigen::ArrayXd>(db.data(), n);
  const Eigen::ArrayXd d1 = va.min(vb);
  const Eigen::ArrayXd d2 = (va.square() + vb.square()).sqrt();

  ConfidenceMap out{ScalarField(shape)};
  auto f = Eigen::Map<Eigen::ArrayXd>(out.field.data(), n);
  f = (1.0 + d1 * d2).inverse();
  if (options.tau) f = (d2 > *options.tau).select(0.0, f);
  return out;
}

/// Covariance-frame statistics for the simplified map.
struct SimplifiedStats {
  Point2 c;
  Eigen::Matrix2d S = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d R = Eigen::Matrix2d::Identity();
  std::array<double, 2> lambda{1.0, 1.0};
  double tau = kDefaultTau;

  static SimplifiedStats from_covariance(Point2 c, const Eigen::Matrix2d& S,
                                         double tau = kDefaultTau) {
    if (!is_finite(c) || !S.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite statistics");
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
    const Sym2Eigen eig = eigen_sym2(S);
    if (eig.lambda[1] < kSigmaFloor) {
      throw Error(ErrorCode::SingularCovariance,
                  "covariance eigenvalue " + std::to_string(eig.lambda[1]) + " below floor");
    }
    SimplifiedStats stats;
    stats.c = c;
    stats.S = S;
    stats.R = eig.rotation;
    stats.lambda = eig.lambda;
    stats.tau = tau;
    return stats;
  }
};

struct SimplifiedTerms {
  double d1 = 0.0;  // Chebyshev-like: smallest whitened component
  double d2 = 0.0;  // Mahalanobis
};

/// d1 and d2 evaluated through the eigenframe.
inline SimplifiedTerms simplified_terms(const SimplifiedStats& stats, Point2 p) {
  const Eigen::Vector2d v(p.x - stats.c.x, p.y - stats.c.y);
  const Eigen::Vector2d z = stats.R.transpose() * v;
  const double w0 = std::abs(z(0)) / std::sqrt(stats.lambda[0]);
  const double w1 = std::abs(z(1)) / std::sqrt(stats.lambda[1]);
  return {std::min(w0, w1), std::hypot(w0, w1)};
}

/// sqrt(v^T S^-1 v) through an explicit inverse.
inline double mahalanobis_direct(const Eigen::Matrix2d& S, Point2 v) {
  const Eigen::Vector2d x(v.x, v.y);
  return std::sqrt(x.dot(S.inverse() * x));
}

inline double simplified_confidence_at(const SimplifiedStats& stats, Point2 p) {
  const SimplifiedTerms t = simplified_terms(stats, p);
  if (t.d2 > stats.tau) return 0.0;
  return 1.0 / (1.0 + t.d1 * t.d2);
}

inline ConfidenceMap confidence_map_simplified(GridShape shape, const SimplifiedStats& stats) {
  require_valid(shape);
  if (stats.lambda[1] < kSigmaFloor || stats.lambda[0] < kSigmaFloor) {
    throw Error(ErrorCode::SingularCovariance, "covariance eigenvalue below floor");
  }
  ConfidenceMap out{ScalarField(shape)};
  for (int y = 0; y < shape.height; ++y) {
    for (int x = 0; x < shape.width; ++x) {
      out.field(x, y) =
          simplified_confidence_at(stats, {static_cast<double>(x), static_cast<double>(y)});
    }
  }
  return out;
}

/// Baseline cue: the maximum of four isotropic Gaussians centred on the
/// extreme points.
inline ScalarField gaussian_cue(GridShape shape, const ExtremePoints& e,
                                double sigma = kDefaultGaussianSigma) {
  require_valid(shape);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::InvalidArgument, "gaussian sigma must be positive");
  }
  const auto points = e.as_array();
  const double inv = 1.0 / (2.0 * sigma * sigma);
  ScalarField out(shape);
  for (int y = 0; y < shape.height; ++y) {
    for (int x = 0; x < shape.width; ++x) {
      double nearest = std::numeric_limits<double>::infinity();
      for (const Point2& p : points) {
        const double dx = x - p.x;
        const double dy = y - p.y;
        nearest = std::min(nearest, dx * dx + dy * dy);
      }
      out(x, y) = std::exp(-nearest * inv);
    }
  }
  return out;
}

enum class CueVariant { CM, EP, CM_EP };

inline std::string_view variant_name(CueVariant v) noexcept {
  switch (v) {
    case CueVariant::CM: return "cm";
    case CueVariant::EP: return "ep";
    case CueVariant::CM_EP: return "cm-ep";
  }
  return "cm";
}

inline CueVariant parse_variant(std::string_view name) {
  if (name == "cm") return CueVariant::CM;
  if (name == "ep") return CueVariant::EP;
  if (name == "cm-ep") return CueVariant::CM_EP;
  throw Error(ErrorCode::InvalidArgument, "unknown variant '" + std::string(name) + "'");
}

inline constexpr std::string_view kConfidenceChannel = "confidence";
inline constexpr std::string_view kGaussianChannel = "gaussians";

struct CueOptions {
  ConfidenceOptions confidence;
  double gaussian_sigma = kDefaultGaussianSigma;
};

using NamedChannel = std::pair<std::string, ScalarField>;

/// The cue channels a variant needs, in stacking order.
inline std::vector<std::string> cue_channel_names(CueVariant variant) {
  switch (variant) {
    case CueVariant::CM: return {std::string(kConfidenceChannel)};
    case CueVariant::EP: return {std::string(kGaussianChannel)};
    case CueVariant::CM_EP: return {std::string(kConfidenceChannel), std::string(kGaussianChannel)};
  }
  return {};
}

inline ScalarField compute_cue_channel(std::string_view name, GridShape shape,
                                       const ExtremePoints& e, const CueOptions& options) {
  if (name == kConfidenceChannel) {
    return confidence_map(shape, cue_pair_from_extremes(e), options.confidence).field;
  }
  if (name == kGaussianChannel) return gaussian_cue(shape, e, options.gaussian_sigma);
  throw Error(ErrorCode::MissingCue, "no cue channel named '" + std::string(name) + "'");
}

inline std::vector<NamedChannel> compute_cue_channels(GridShape shape, const ExtremePoints& e,
                                                      CueVariant variant,
                                                      const CueOptions& options = {}) {
  std::vector<NamedChannel> out;
  for (auto& name : cue_channel_names(variant)) {
    ScalarField field = compute_cue_channel(name, shape, e, options);
    out.emplace_back(std::move(name), std::move(field));
  }
  return out;
}

}  // namespace exmap
