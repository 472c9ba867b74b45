#pragma once

// File formats.
//
//   CMAP  "CMAP" | u16 version=1 | u32 width | u32 height | f32[w*h]   (LE, row-major)
//   CTSL  "CTSL" | u32 width | u32 height | i16[w*h] HU                (LE, row-major)
//   PGM   netpbm P2/P5, maxval up to 65535 (P5 16-bit samples big-endian)
//   PointsDoc  {"left":[x,y],"right":[x,y],"top":[x,y],"bottom":[x,y],"shape":[w,h]}
//   Manifest   [{"id","image_path","format","mask_path"?,"points_path"?,"label"?}, ...]

#include <json.hpp>

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exmap/confmap.hpp"
#include "exmap/contours.hpp"
#include "exmap/error.hpp"
#include "exmap/preprocess.hpp"
#include "exmap/raster.hpp"

namespace exmap {

using Bytes = std::vector<std::uint8_t>;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "little-endian host required");
static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 binary32 required");

namespace detail {

class ByteWriter {
 public:
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void i16(std::int16_t v) { put(v); }
  void f32(float v) { put(v); }
  Bytes take() { return std::move(out_); }

 private:
  template <typename T>
  void put(T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.insert(out_.end(), buf, buf + sizeof(T));
  }
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (std::memcmp(data_.data(), magic.data(), magic.size()) != 0) {
      throw MalformedError(0, "bad magic, expected \"" + std::string(magic) + "\"");
    }
    pos_ += magic.size();
  }
  std::uint16_t u16(const char* what) { return get<std::uint16_t>(what); }
  std::uint32_t u32(const char* what) { return get<std::uint32_t>(what); }
  std::int16_t i16(const char* what) { return get<std::int16_t>(what); }
  float f32(const char* what) { return get<float>(what); }

  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n) {
      throw MalformedError(data_.size(), "truncated " + what + ": needed " + std::to_string(n) +
                                             " bytes at offset " + std::to_string(pos_) +
                                             ", have " + std::to_string(remaining()));
    }
  }
  void expect_end() const {
    if (remaining() != 0) {
      throw MalformedError(pos_, std::to_string(remaining()) + " trailing bytes");
    }
  }

 private:
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline GridShape checked_shape(std::uint32_t w, std::uint32_t h, std::size_t offset) {
  constexpr std::uint32_t kMax = std::numeric_limits<int>::max();
  if (w == 0 || h == 0 || w > kMax || h > kMax ||
      static_cast<std::uint64_t>(w) * h > (std::uint64_t{1} << 31)) {
    throw MalformedError(offset, "invalid dimensions " + std::to_string(w) + "x" + std::to_string(h));
  }
  return {static_cast<int>(w), static_cast<int>(h)};
}

}  // namespace detail

// ---------------------------------------------------------------- files

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  const std::filesystem::path tmp =
      path.parent_path() / ("." + path.filename().string() + ".tmp" + std::to_string(rng()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::Io, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot move into place " + path.string());
  }
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------- CMAP

inline constexpr std::uint16_t kCmapVersion = 1;
inline constexpr std::size_t kCmapHeaderSize = 14;

/// Narrows to binary32 (round to nearest) and serializes.
inline Bytes write_float_raster(const ScalarField& field) {
  require_finite(field);
  detail::ByteWriter w;
  w.raw("CMAP");
  w.u16(kCmapVersion);
  w.u32(static_cast<std::uint32_t>(field.width()));
  w.u32(static_cast<std::uint32_t>(field.height()));
  for (double v : field.values()) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw Error(ErrorCode::NonFinite, "value overflows binary32");
    w.f32(f);
  }
  return w.take();
}

inline ScalarField read_float_raster(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic("CMAP");
  const std::uint16_t version = r.u16("version");
  if (version != kCmapVersion) {
    throw MalformedError(4, "unsupported CMAP version " + std::to_string(version));
  }
  const std::uint32_t w = r.u32("width");
  const std::uint32_t h = r.u32("height");
  const GridShape shape = detail::checked_shape(w, h, 6);
  r.need(4 * shape.size(), "payload");
  ScalarField out(shape);
  for (double& v : out.values()) {
    const std::size_t at = r.offset();
    const float f = r.f32("value");
    if (!std::isfinite(f)) throw MalformedError(at, "non-finite value");
    v = f;
  }
  r.expect_end();
  return out;
}

// ---------------------------------------------------------------- CTSL

inline constexpr std::size_t kCtslHeaderSize = 12;

/// HU values are rounded to the nearest integer and must fit in int16.
inline Bytes write_ctsl(const ScalarField& hu) {
  require_finite(hu);
  detail::ByteWriter w;
  w.raw("CTSL");
  w.u32(static_cast<std::uint32_t>(hu.width()));
  w.u32(static_cast<std::uint32_t>(hu.height()));
  for (double v : hu.values()) {
    const double r = std::round(v);
    if (r < std::numeric_limits<std::int16_t>::min() || r > std::numeric_limits<std::int16_t>::max()) {
      throw Error(ErrorCode::InvalidArgument, "HU value out of int16 range");
    }
    w.i16(static_cast<std::int16_t>(r));
  }
  return w.take();
}

inline ScalarField read_ctsl(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic("CTSL");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t h = r.u32("height");
  const GridShape shape = detail::checked_shape(w, h, 4);
  r.need(2 * shape.size(), "payload");
  ScalarField out(shape);
  for (double& v : out.values()) v = r.i16("value");
  r.expect_end();
  return out;
}

// ---------------------------------------------------------------- PGM

struct PgmImage {
  ScalarField pixels;
  int maxval = 255;
};

namespace detail {

class PgmHeaderParser {
 public:
  PgmHeaderParser(std::span<const std::uint8_t> data, std::size_t pos) : data_(data), pos_(pos) {}

  std::size_t offset() const noexcept { return pos_; }

  // Skips whitespace and comments, then reads a decimal integer.
  long integer(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < data_.size() && std::isdigit(data_[pos_])) {
      v = v * 10 + (data_[pos_] - '0');
      if (v > 1'000'000'000L) throw MalformedError(start, std::string(what) + " too large");
      ++pos_;
    }
    if (pos_ == start) {
      if (pos_ >= data_.size()) throw MalformedError(pos_, std::string("truncated before ") + what);
      throw MalformedError(pos_, std::string("expected ") + what);
    }
    return v;
  }

  void skip_space() {
    while (pos_ < data_.size()) {
      if (data_[pos_] == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(data_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  // Exactly one whitespace byte separates the header from a binary raster.
  void single_space() {
    if (pos_ >= data_.size() || !std::isspace(data_[pos_])) {
      throw MalformedError(pos_, "expected whitespace after maxval");
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline PgmImage read_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5')) {
    throw MalformedError(0, "not a P2/P5 PGM");
  }
  const bool binary = bytes[1] == '5';
  detail::PgmHeaderParser p(bytes, 2);
  const long w = p.integer("width");
  const long h = p.integer("height");
  const long maxval = p.integer("maxval");
  const GridShape shape = detail::checked_shape(static_cast<std::uint32_t>(w),
                                                static_cast<std::uint32_t>(h), 2);
  if (maxval < 1 || maxval > 65535) throw MalformedError(p.offset(), "maxval out of range");

  PgmImage img{ScalarField(shape), static_cast<int>(maxval)};
  if (binary) {
    p.single_space();
    const std::size_t start = p.offset();
    const std::size_t bps = maxval < 256 ? 1 : 2;
    const std::size_t need = bps * shape.size();
    if (bytes.size() - start < need) {
      throw MalformedError(bytes.size(), "truncated raster: needed " + std::to_string(need) +
                                             " bytes from offset " + std::to_string(start));
    }
    if (bytes.size() - start > need) {
      throw MalformedError(start + need, "trailing bytes after raster");
    }
    auto vals = img.pixels.values();
    for (std::size_t i = 0; i < shape.size(); ++i) {
      const std::size_t at = start + bps * i;
      const long v = bps == 1 ? bytes[at] : (bytes[at] << 8) | bytes[at + 1];
      if (v > maxval) throw MalformedError(at, "sample exceeds maxval");
      vals[i] = static_cast<double>(v);
    }
  } else {
    auto vals = img.pixels.values();
    for (std::size_t i = 0; i < shape.size(); ++i) {
      const long v = p.integer("sample");
      if (v > maxval) throw MalformedError(p.offset(), "sample exceeds maxval");
      vals[i] = static_cast<double>(v);
    }
    p.skip_space();
    if (p.offset() != bytes.size()) {
      throw MalformedError(p.offset(), "trailing data after raster");
    }
  }
  return img;
}

/// Values are rounded and must lie in [0, maxval].
inline Bytes write_pgm(const ScalarField& field, int maxval = 255, bool binary = true) {
  if (maxval < 1 || maxval > 65535) throw Error(ErrorCode::InvalidArgument, "maxval out of range");
  std::string header = std::string(binary ? "P5" : "P2") + "\n" + std::to_string(field.width()) +
                       " " + std::to_string(field.height()) + "\n" + std::to_string(maxval) + "\n";
  Bytes out(header.begin(), header.end());
  for (double v : field.values()) {
    const double r = std::round(v);
    if (!(r >= 0.0 && r <= maxval)) throw Error(ErrorCode::InvalidArgument, "sample outside maxval");
    const auto s = static_cast<unsigned>(r);
    if (!binary) {
      const std::string t = std::to_string(s) + "\n";
      out.insert(out.end(), t.begin(), t.end());
    } else if (maxval < 256) {
      out.push_back(static_cast<std::uint8_t>(s));
    } else {
      out.push_back(static_cast<std::uint8_t>(s >> 8));
      out.push_back(static_cast<std::uint8_t>(s & 0xff));
    }
  }
  return out;
}

// ---------------------------------------------------------------- images

enum class ImageFormat { Pgm, Ctsl };

inline ImageFormat parse_format(std::string_view name) {
  if (name == "pgm") return ImageFormat::Pgm;
  if (name == "ctsl") return ImageFormat::Ctsl;
  throw Error(ErrorCode::UnsupportedFormat, "unsupported image format '" + std::string(name) + "'");
}

inline std::string_view format_name(ImageFormat f) noexcept {
  return f == ImageFormat::Pgm ? "pgm" : "ctsl";
}

struct LoadedImage {
  ScalarField pixels;
  ImageFormat format = ImageFormat::Pgm;
  int maxval = 255;

  /// CT slices use the HU window; PGM images span [0, maxval].
  HUWindow window() const {
    if (format == ImageFormat::Ctsl) return HUWindow{};
    return HUWindow{0.0, static_cast<double>(maxval)};
  }
};

inline LoadedImage decode_image(std::span<const std::uint8_t> bytes, ImageFormat format) {
  if (format == ImageFormat::Ctsl) return {read_ctsl(bytes), format, 0};
  PgmImage pgm = read_pgm(bytes);
  return {std::move(pgm.pixels), format, pgm.maxval};
}

inline LoadedImage load_image(const std::filesystem::path& path, ImageFormat format) {
  return decode_image(read_file(path), format);
}

inline ScalarField read_image(const std::filesystem::path& path, ImageFormat format) {
  return load_image(path, format).pixels;
}

inline BinaryMask to_mask(const ScalarField& img) {
  BinaryMask mask(img.shape());
  auto dst = mask.values();
  auto src = img.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] != 0.0;
  return mask;
}

// ---------------------------------------------------------------- JSON helpers

namespace detail {

inline void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                                const std::string& prefix) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError(prefix + key, "unknown key");
  }
}

inline double number_at(const json& v, const std::string& path) {
  if (!v.is_number()) throw SchemaError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw SchemaError(path, "expected a finite number");
  return d;
}

inline const json& member(const json& obj, const char* key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path, "missing required key");
  return *it;
}

inline Point2 point_at(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw SchemaError(path, "expected [x, y]");
  return {number_at(v[0], path + "[0]"), number_at(v[1], path + "[1]")};
}

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedError(e.byte == 0 ? 0 : e.byte - 1, "invalid JSON");
  }
}

inline json point_json(Point2 p) { return json::array({p.x, p.y}); }

}  // namespace detail

// ---------------------------------------------------------------- PointsDoc

struct PointsDoc {
  ExtremePoints points;
  GridShape shape;

  friend bool operator==(const PointsDoc&, const PointsDoc&) = default;
};

inline PointsDoc points_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("$", "expected an object");
  detail::reject_unknown_keys(doc, {"left", "right", "top", "bottom", "shape"}, "");
  PointsDoc out;
  out.points.left = detail::point_at(detail::member(doc, "left", "left"), "left");
  out.points.right = detail::point_at(detail::member(doc, "right", "right"), "right");
  out.points.top = detail::point_at(detail::member(doc, "top", "top"), "top");
  out.points.bottom = detail::point_at(detail::member(doc, "bottom", "bottom"), "bottom");

  const json& shape = detail::member(doc, "shape", "shape");
  if (!shape.is_array() || shape.size() != 2) throw SchemaError("shape", "expected [w, h]");
  for (int i = 0; i < 2; ++i) {
    const std::string path = "shape[" + std::to_string(i) + "]";
    if (!shape[i].is_number_integer() && !shape[i].is_number_unsigned()) {
      throw SchemaError(path, "expected a positive integer");
    }
    const auto v = shape[i].get<std::int64_t>();
    if (v <= 0 || v > std::numeric_limits<int>::max()) throw SchemaError(path, "expected a positive integer");
    (i == 0 ? out.shape.width : out.shape.height) = static_cast<int>(v);
  }
  validate(out.points, out.shape);
  return out;
}

inline json points_to_json(const PointsDoc& doc) {
  validate(doc.points, doc.shape);
  json j = json::object();
  j["left"] = detail::point_json(doc.points.left);
  j["right"] = detail::point_json(doc.points.right);
  j["top"] = detail::point_json(doc.points.top);
  j["bottom"] = detail::point_json(doc.points.bottom);
  j["shape"] = json::array({doc.shape.width, doc.shape.height});
  return j;
}

inline PointsDoc read_points(std::string_view text) { return points_from_json(detail::parse_json(text)); }

inline std::string write_points(const PointsDoc& doc) { return points_to_json(doc).dump(2) + "\n"; }

inline PointsDoc load_points(const std::filesystem::path& path) { return read_points(read_text(path)); }

// ---------------------------------------------------------------- Manifest

struct ManifestRecord {
  std::string id;
  std::filesystem::path image_path;
  ImageFormat format = ImageFormat::Pgm;
  std::optional<std::filesystem::path> mask_path;
  std::optional<std::filesystem::path> points_path;
  std::optional<std::string> label;
};

struct Manifest {
  /// Relative record paths resolve against this directory.
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }
  const ManifestRecord* find(std::string_view id) const {
    for (const auto& r : records) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }
};

/// Parses a manifest. With check_paths, every referenced file must exist.
inline Manifest read_manifest(std::string_view text, std::filesystem::path base_dir = {},
                              bool check_paths = false) {
  const json doc = detail::parse_json(text);
  if (!doc.is_array()) throw SchemaError("$", "expected an array of records");
  Manifest out;
  out.base_dir = std::move(base_dir);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string at = "[" + std::to_string(i) + "]";
    const json& rec = doc[i];
    if (!rec.is_object()) throw SchemaError(at, "expected an object");
    detail::reject_unknown_keys(rec, {"id", "image_path", "format", "mask_path", "points_path", "label"},
                                at + ".");
    const auto string_at = [&](const char* key) -> std::string {
      const json& v = detail::member(rec, key, at + "." + key);
      if (!v.is_string() || v.get<std::string>().empty()) {
        throw SchemaError(at + "." + key, "expected a non-empty string");
      }
      return v.get<std::string>();
    };
    const auto optional_string = [&](const char* key) -> std::optional<std::string> {
      if (!rec.contains(key)) return std::nullopt;
      return string_at(key);
    };

    ManifestRecord r;
    r.id = string_at("id");
    if (!seen.insert(r.id).second) throw SchemaError(at + ".id", "duplicate id '" + r.id + "'");
    r.image_path = string_at("image_path");
    try {
      r.format = parse_format(string_at("format"));
    } catch (const SchemaError&) {
      throw;
    } catch (const Error&) {
      throw SchemaError(at + ".format", "expected \"pgm\" or \"ctsl\"");
    }
    if (auto v = optional_string("mask_path")) r.mask_path = *v;
    if (auto v = optional_string("points_path")) r.points_path = *v;
    r.label = optional_string("label");
    out.records.push_back(std::move(r));
  }
  if (check_paths) {
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      const auto& r = out.records[i];
      const std::string at = "[" + std::to_string(i) + "]";
      if (!std::filesystem::exists(out.resolve(r.image_path))) {
        throw SchemaError(at + ".image_path", "file not found: " + r.image_path.string());
      }
      if (r.mask_path && !std::filesystem::exists(out.resolve(*r.mask_path))) {
        throw SchemaError(at + ".mask_path", "file not found: " + r.mask_path->string());
      }
      if (r.points_path && !std::filesystem::exists(out.resolve(*r.points_path))) {
        throw SchemaError(at + ".points_path", "file not found: " + r.points_path->string());
      }
    }
  }
  return out;
}

inline Manifest load_manifest(const std::filesystem::path& path, bool check_paths = false) {
  return read_manifest(read_text(path), path.parent_path(), check_paths);
}

inline std::string write_manifest(const Manifest& m) {
  json doc = json::array();
  for (const auto& r : m.records) {
    json j = {{"id", r.id}, {"image_path", r.image_path.generic_string()},
              {"format", std::string(format_name(r.format))}};
    if (r.mask_path) j["mask_path"] = r.mask_path->generic_string();
    if (r.points_path) j["points_path"] = r.points_path->generic_string();
    if (r.label) j["label"] = *r.label;
    doc.push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------- contours

inline json contours_to_json(const ContourSet& set) {
  json levels = json::array();
  for (std::size_t i = 0; i < set.levels.size(); ++i) {
    json lines = json::array();
    for (const auto& line : set.polylines[i]) {
      json pts = json::array();
      for (const Point2& p : line) pts.push_back(detail::point_json(p));
      lines.push_back(std::move(pts));
    }
    levels.push_back({{"level", set.levels[i]}, {"polylines", std::move(lines)}});
  }
  return {{"levels", std::move(levels)}};
}

}  // namespace exmap
