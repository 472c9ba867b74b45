#pragma once

// CT input pipeline: intensity windowing, zoomed crops around the annotated
// object, geometric augmentation and cue-channel stacking. Cue channels are
// never resampled; every transform recomputes them from the mapped points.

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exmap/confmap.hpp"
#include "exmap/error.hpp"
#include "exmap/geometry.hpp"
#include "exmap/mask_ops.hpp"
#include "exmap/raster.hpp"

namespace exmap {

inline constexpr int kDefaultOutSize = 512;
inline constexpr double kMinTargetBox = 350.0;
inline constexpr double kMaxTargetBox = 400.0;

struct HUWindow {
  double lo = -200.0;
  double hi = 250.0;
};

/// Clamps to [lo, hi] and maps affinely onto [0, 1].
inline ScalarField window_normalize(const ScalarField& img, HUWindow window = {}) {
  if (!(window.lo < window.hi)) throw Error(ErrorCode::InvalidArgument, "window needs lo < hi");
  require_finite(img);
  const double span = window.hi - window.lo;
  ScalarField out(img.shape());
  auto dst = out.values();
  auto src = img.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = (std::clamp(src[i], window.lo, window.hi) - window.lo) / span;
  }
  return out;
}

/// b_m / max(w, h) for the extreme-point bounding box.
inline double zoom_factor(const ExtremePoints& e, double b_m) {
  const double b = bounding_box(e).longest();
  if (!(b > 0.0)) throw Error(ErrorCode::DegenerateBox, "bounding box has zero extent");
  if (!(b_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "target box size must be positive");
  return b_m / b;
}

/// Uniform draw of the target box side from [350, 400].
inline double draw_target_box(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return kMinTargetBox + u * (kMaxTargetBox - kMinTargetBox);
}

/// Affine map dst = A * src + t between pixel coordinate frames.
struct Affine2 {
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  Eigen::Vector2d t = Eigen::Vector2d::Zero();

  Point2 apply(Point2 p) const {
    const Eigen::Vector2d r = A * Eigen::Vector2d(p.x, p.y) + t;
    return {r(0), r(1)};
  }

  Affine2 inverse() const {
    Affine2 inv;
    inv.A = A.inverse();
    inv.t = -(inv.A * t);
    return inv;
  }
};

struct Provenance {
  std::string source_id;
  std::vector<std::string> transforms;
};

struct Sample {
  ScalarField image;
  ExtremePoints extremes;
  std::vector<NamedChannel> cue_channels;
  std::optional<BinaryMask> mask;
  Provenance meta;
  CueOptions cue_options;

  const ScalarField* find_channel(std::string_view name) const {
    for (const auto& [n, field] : cue_channels) {
      if (n == name) return &field;
    }
    return nullptr;
  }
};

/// Computes any cue channel the variant needs that the sample lacks.
inline void ensure_cues(Sample& sample, CueVariant variant) {
  for (const auto& name : cue_channel_names(variant)) {
    if (sample.find_channel(name)) continue;
    sample.cue_channels.emplace_back(
        name, compute_cue_channel(name, sample.image.shape(), sample.extremes, sample.cue_options));
  }
}

namespace detail {

inline double sample_bilinear(const ScalarField& img, double x, double y, double pad) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double fx = x - fx0;
  const double fy = y - fy0;
  const auto at = [&](double xi, double yi) {
    if (xi < 0.0 || yi < 0.0 || xi > img.width() - 1.0 || yi > img.height() - 1.0) return pad;
    return img(static_cast<int>(xi), static_cast<int>(yi));
  };
  return (1.0 - fx) * (1.0 - fy) * at(fx0, fy0) + fx * (1.0 - fy) * at(fx0 + 1.0, fy0) +
         (1.0 - fx) * fy * at(fx0, fy0 + 1.0) + fx * fy * at(fx0 + 1.0, fy0 + 1.0);
}

inline ScalarField warp_image(const ScalarField& img, const Affine2& forward, GridShape out_shape,
                              double pad) {
  const Affine2 back = forward.inverse();
  ScalarField out(out_shape);
  for (int y = 0; y < out_shape.height; ++y) {
    for (int x = 0; x < out_shape.width; ++x) {
      const Point2 s = back.apply({static_cast<double>(x), static_cast<double>(y)});
      out(x, y) = sample_bilinear(img, s.x, s.y, pad);
    }
  }
  return out;
}

inline BinaryMask warp_mask(const BinaryMask& mask, const Affine2& forward, GridShape out_shape) {
  const Affine2 back = forward.inverse();
  BinaryMask out(out_shape);
  for (int y = 0; y < out_shape.height; ++y) {
    for (int x = 0; x < out_shape.width; ++x) {
      const Point2 s = back.apply({static_cast<double>(x), static_cast<double>(y)});
      const double sx = std::round(s.x);
      const double sy = std::round(s.y);
      if (sx < 0.0 || sy < 0.0 || sx > mask.width() - 1.0 || sy > mask.height() - 1.0) continue;
      out(x, y) = mask(static_cast<int>(sx), static_cast<int>(sy));
    }
  }
  return out;
}

inline ExtremePoints roles_from_points(const std::array<Point2, 4>& pts) {
  ExtremePoints e{pts[0], pts[0], pts[0], pts[0]};
  for (const Point2& p : pts) {
    if (p.x < e.left.x) e.left = p;
    if (p.x > e.right.x) e.right = p;
    if (p.y < e.top.y) e.top = p;
    if (p.y > e.bottom.y) e.bottom = p;
  }
  return e;
}

inline bool any_set(const BinaryMask& mask) {
  for (auto b : mask.values()) {
    if (b) return true;
  }
  return false;
}

/// Applies forward to every raster of the sample and recomputes its cues.
inline Sample transform_sample(const Sample& in, const Affine2& forward, GridShape out_shape,
                               std::string step) {
  Sample out;
  out.cue_options = in.cue_options;
  out.meta = in.meta;
  out.meta.transforms.push_back(std::move(step));
  out.image = warp_image(in.image, forward, out_shape, 0.0);

  std::array<Point2, 4> mapped{};
  const auto src = in.extremes.as_array();
  for (std::size_t i = 0; i < 4; ++i) mapped[i] = forward.apply(src[i]);
  out.extremes = {mapped[0], mapped[1], mapped[2], mapped[3]};

  if (in.mask) out.mask = warp_mask(*in.mask, forward, out_shape);

  for (const auto& [name, _] : in.cue_channels) {
    out.cue_channels.emplace_back(
        name, compute_cue_channel(name, out_shape, out.extremes, out.cue_options));
  }
  return out;
}

inline std::string fmt_num(double v) {
  std::string s = std::to_string(v);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

}  // namespace detail

struct CropSpec {
  Point2 center;
  double zoom = 1.0;
  int out_size = kDefaultOutSize;
  double b_m = kMinTargetBox;

  /// Crop centred on the extreme-point bounding box, scaled so its longest
  /// side becomes b_m pixels.
  static CropSpec around(const ExtremePoints& e, double b_m, int out_size = kDefaultOutSize) {
    if (b_m < kMinTargetBox || b_m > kMaxTargetBox) {
      throw Error(ErrorCode::InvalidArgument, "target box size must lie in [350, 400]");
    }
    CropSpec spec;
    spec.center = {0.5 * (e.left.x + e.right.x), 0.5 * (e.top.y + e.bottom.y)};
    spec.zoom = zoom_factor(e, b_m);
    spec.out_size = out_size;
    spec.b_m = b_m;
    return spec;
  }

  /// Source pixel -> output pixel. The crop centre lands on the output centre.
  Affine2 transform() const {
    const double o = 0.5 * (out_size - 1);
    Affine2 f;
    f.A = zoom * Eigen::Matrix2d::Identity();
    f.t = Eigen::Vector2d(o - zoom * center.x, o - zoom * center.y);
    return f;
  }
};

/// Resampled out_size x out_size crop of side out_size / zoom around the
/// centre. Image bilinear, mask nearest, padding 0; cues recomputed.
inline Sample crop_resize(const Sample& sample, const CropSpec& spec) {
  if (!(spec.zoom > 0.0) || !std::isfinite(spec.zoom)) {
    throw Error(ErrorCode::DegenerateBox, "crop zoom must be positive");
  }
  if (spec.out_size <= 0) throw Error(ErrorCode::InvalidArgument, "crop size must be positive");
  const std::string step = "crop(center=" + detail::fmt_num(spec.center.x) + "," +
                           detail::fmt_num(spec.center.y) + ";zoom=" + detail::fmt_num(spec.zoom) +
                           ";size=" + std::to_string(spec.out_size) + ")";
  return detail::transform_sample(sample, spec.transform(), {spec.out_size, spec.out_size}, step);
}

struct AugmentParams {
  double scale = 1.0;
  double rotation_deg = 0.0;
  bool hflip = false;
  std::uint64_t seed = 0;

  /// Draws scale in [0.9, 1.1], rotation in [-30, 30] degrees and a fair flip.
  static AugmentParams draw(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    AugmentParams p;
    p.seed = seed;
    p.scale = 0.9 + 0.2 * unit();
    p.rotation_deg = -30.0 + 60.0 * unit();
    p.hflip = unit() < 0.5;
    return p;
  }

  void validate() const {
    if (!(scale >= 0.9 && scale <= 1.1)) {
      throw Error(ErrorCode::InvalidArgument, "augment scale must lie in [0.9, 1.1]");
    }
    if (!(rotation_deg >= -30.0 && rotation_deg <= 30.0)) {
      throw Error(ErrorCode::InvalidArgument, "augment rotation must lie in [-30, 30] degrees");
    }
  }

  /// Flip, then scale, then rotate, all about the grid centre, as one map.
  Affine2 transform(GridShape shape) const {
    const Eigen::Vector2d centre(0.5 * (shape.width - 1), 0.5 * (shape.height - 1));
    const double theta = rotation_deg * std::numbers::pi / 180.0;
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    Eigen::Matrix2d flip = Eigen::Matrix2d::Identity();
    if (hflip) flip(0, 0) = -1.0;
    Affine2 f;
    f.A = rot * (scale * flip);
    f.t = centre - f.A * centre;
    return f;
  }
};

/// One affine resampling of the sample. Extreme-point roles are re-derived
/// from the transformed mask when there is one, else from the mapped points.
inline Sample augment(const Sample& sample, const AugmentParams& params) {
  params.validate();
  const GridShape shape = sample.image.shape();
  const std::string step = "augment(scale=" + detail::fmt_num(params.scale) +
                           ";rot=" + detail::fmt_num(params.rotation_deg) +
                           ";hflip=" + (params.hflip ? "1" : "0") + ")";

  Sample base = sample;
  const std::vector<NamedChannel> cues = std::move(base.cue_channels);
  base.cue_channels.clear();
  Sample out = detail::transform_sample(base, params.transform(shape), shape, step);

  if (out.mask && detail::any_set(*out.mask)) {
    out.extremes = extract_extreme_points(*out.mask);
  } else {
    out.extremes = detail::roles_from_points(out.extremes.as_array());
  }
  for (const auto& [name, _] : cues) {
    out.cue_channels.emplace_back(name,
                                  compute_cue_channel(name, shape, out.extremes, out.cue_options));
  }
  return out;
}

struct MultiChannelRaster {
  GridShape shape;
  std::vector<NamedChannel> channels;
};

inline constexpr std::string_view kImageChannel = "image";

/// image followed by the variant's cue channels: cm -> [image, confidence],
/// ep -> [image, gaussians], cm-ep -> [image, confidence, gaussians].
inline MultiChannelRaster stack_cues(const Sample& sample, CueVariant variant) {
  MultiChannelRaster out;
  out.shape = sample.image.shape();
  out.channels.emplace_back(std::string(kImageChannel), sample.image);
  for (const auto& name : cue_channel_names(variant)) {
    const ScalarField* field = sample.find_channel(name);
    if (!field) throw Error(ErrorCode::MissingCue, "sample has no '" + name + "' channel");
    if (field->shape() != out.shape) {
      throw Error(ErrorCode::InvalidShape, "channel '" + name + "' does not match the image");
    }
    out.channels.emplace_back(name, *field);
  }
  return out;
}

}  // namespace exmap
