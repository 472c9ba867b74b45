#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exmap/error.hpp"

namespace exmap {

/// Raster dimensions. x is the column index, y the row index, origin at the
/// top-left pixel, pixel centers at integer coordinates.
struct GridShape {
  int width = 0;
  int height = 0;

  constexpr std::size_t size() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  constexpr bool valid() const noexcept { return width > 0 && height > 0; }
  constexpr bool contains(double x, double y) const noexcept {
    return x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0;
  }

  friend constexpr bool operator==(const GridShape&, const GridShape&) = default;
};

inline void require_valid(GridShape shape) {
  if (!shape.valid()) {
    throw Error(ErrorCode::InvalidShape,
                "grid shape must be positive, got " + std::to_string(shape.width) + "x" +
                    std::to_string(shape.height));
  }
}

/// Dense row-major raster of T.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;

  explicit Raster(GridShape shape, T fill = T{}) : shape_(shape) {
    require_valid(shape);
    values_.assign(shape.size(), fill);
  }

  Raster(GridShape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    require_valid(shape);
    if (values_.size() != shape.size()) {
      throw Error(ErrorCode::InvalidShape, "buffer length " + std::to_string(values_.size()) +
                                               " does not match " + std::to_string(shape.width) +
                                               "x" + std::to_string(shape.height));
    }
  }

  GridShape shape() const noexcept { return shape_; }
  int width() const noexcept { return shape_.width; }
  int height() const noexcept { return shape_.height; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(int x, int y) { return values_[index(x, y)]; }
  const T& operator()(int x, int y) const { return values_[index(x, y)]; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }

  std::span<const T> row(int y) const noexcept {
    return std::span<const T>(values_).subspan(static_cast<std::size_t>(y) * shape_.width,
                                               shape_.width);
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(shape_.width) +
           static_cast<std::size_t>(x);
  }

  GridShape shape_{};
  std::vector<T> values_;
};

/// Distance fields, confidence maps and images.
using ScalarField = Raster<double>;
/// Nonzero bytes are true.
using BoolRaster = Raster<std::uint8_t>;
using BinaryMask = BoolRaster;

inline bool all_finite(const ScalarField& field) noexcept {
  for (double v : field.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void require_finite(const ScalarField& field) {
  if (!all_finite(field)) throw Error(ErrorCode::NonFinite, "raster contains non-finite values");
}

}  // namespace exmap
