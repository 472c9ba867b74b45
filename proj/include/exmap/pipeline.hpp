#pragma once

// Shared compute and export path for the command-line tool and the
// annotation service. Both produce bytes through these functions only.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "exmap/confmap.hpp"
#include "exmap/io.hpp"
#include "exmap/mask_ops.hpp"
#include "exmap/preprocess.hpp"

namespace exmap {

/// Cue channels for a points document at its own grid shape.
inline std::vector<NamedChannel> cue_channels_for(const PointsDoc& doc, CueVariant variant,
                                                  const CueOptions& options = {}) {
  validate(doc.points, doc.shape);
  return compute_cue_channels(doc.shape, doc.points, variant, options);
}

/// `<prefix>_<channel>.cmap`
inline std::filesystem::path channel_path(const std::filesystem::path& prefix,
                                          std::string_view channel) {
  return prefix.parent_path() / (prefix.filename().string() + "_" + std::string(channel) + ".cmap");
}

struct EncodedFile {
  std::filesystem::path path;
  Bytes bytes;
};

inline std::vector<EncodedFile> encode_channels(const std::filesystem::path& prefix,
                                                const std::vector<NamedChannel>& channels) {
  std::vector<EncodedFile> files;
  for (const auto& [name, field] : channels) {
    files.push_back({channel_path(prefix, name), write_float_raster(field)});
  }
  return files;
}

/// Writes all files or none: every payload is staged to a temporary sibling
/// before any is renamed into place.
inline void commit_files(const std::vector<EncodedFile>& files) {
  std::vector<std::filesystem::path> staged;
  const auto discard = [&] {
    std::error_code ec;
    for (const auto& p : staged) std::filesystem::remove(p, ec);
  };
  try {
    for (const auto& f : files) {
      const std::filesystem::path tmp =
          f.path.parent_path() / ("." + f.path.filename().string() + ".staged");
      write_file_atomic(tmp, f.bytes);
      staged.push_back(tmp);
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
      std::filesystem::rename(staged[i], files[i].path);
    }
  } catch (const std::filesystem::filesystem_error& e) {
    discard();
    throw Error(ErrorCode::Io, e.what());
  } catch (...) {
    discard();
    throw;
  }
}

/// Normalized image plus the extreme points; cues computed for variant.
inline Sample make_sample(const LoadedImage& image, const ExtremePoints& extremes, CueVariant variant,
                          const CueOptions& options, std::string source_id,
                          std::optional<BinaryMask> mask = std::nullopt) {
  validate(extremes, image.pixels.shape());
  Sample s;
  s.image = window_normalize(image.pixels, image.window());
  s.extremes = extremes;
  s.mask = std::move(mask);
  s.meta.source_id = std::move(source_id);
  s.meta.transforms.push_back("window(" + detail::fmt_num(image.window().lo) + "," +
                              detail::fmt_num(image.window().hi) + ")");
  s.cue_options = options;
  ensure_cues(s, variant);
  return s;
}

struct PreprocessOptions {
  CueVariant variant = CueVariant::CM;
  CueOptions cues;
  bool crop = false;
  /// Fixed target box side; drawn from the seed when unset.
  std::optional<double> b_m;
  bool augment = false;
  std::uint64_t seed = 0;
  int out_size = kDefaultOutSize;
};

/// Per-sample seed derived from the run seed and the sample index.
inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Window, optional crop and augmentation, then stacking.
inline MultiChannelRaster preprocess_sample(const LoadedImage& image, const ExtremePoints& extremes,
                                            const PreprocessOptions& options, std::string source_id,
                                            std::optional<BinaryMask> mask, std::uint64_t seed) {
  Sample s = make_sample(image, extremes, options.variant, options.cues, std::move(source_id),
                         std::move(mask));
  if (options.crop) {
    const double b_m = options.b_m ? *options.b_m : draw_target_box(seed);
    s = crop_resize(s, CropSpec::around(s.extremes, b_m, options.out_size));
  }
  if (options.augment) s = augment(s, AugmentParams::draw(seed ^ 0xA5A5A5A5A5A5A5A5ULL));
  return stack_cues(s, options.variant);
}

/// Extreme points for a manifest record: explicit points file first, else
/// derived from the mask.
inline ExtremePoints record_extremes(const Manifest& manifest, const ManifestRecord& rec,
                                     GridShape shape, std::optional<BinaryMask>* mask_out = nullptr) {
  std::optional<BinaryMask> mask;
  if (rec.mask_path) {
    mask = to_mask(read_image(manifest.resolve(*rec.mask_path), ImageFormat::Pgm));
    if (mask->shape() != shape) {
      throw Error(ErrorCode::InvalidShape, "mask of '" + rec.id + "' does not match its image");
    }
  }
  ExtremePoints e;
  if (rec.points_path) {
    const PointsDoc doc = load_points(manifest.resolve(*rec.points_path));
    if (doc.shape != shape) throw SchemaError("shape", "points shape does not match image");
    e = doc.points;
  } else if (mask) {
    e = extract_extreme_points(*mask);
  } else {
    throw Error(ErrorCode::MissingCue, "record '" + rec.id + "' has neither points nor mask");
  }
  if (mask_out) *mask_out = std::move(mask);
  return e;
}

}  // namespace exmap
