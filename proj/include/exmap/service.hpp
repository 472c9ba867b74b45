#pragma once

// HTTP annotation service.
//
//   GET  /api/slices                 manifest slices with shape and annotation state
//   POST /api/confmap                cue channels + contours for posted points
//   POST /api/annotations            save points (and variant) for a slice
//   GET  /api/annotations/<id>       saved annotation
//   POST /api/export                 stacked cue rasters for a saved annotation
//   GET  /                           UI bundle (static directory)
//
// Handlers are plain methods returning (status, JSON) so they can be driven
// without a socket; mount() binds them to an httplib::Server.

// Eigen must precede httplib: <resolv.h> defines a `_res` macro that
// collides with Eigen parameter names.
#include <Eigen/Dense>
#include <httplib.h>

#include <cctype>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "exmap/confmap.hpp"
#include "exmap/contours.hpp"
#include "exmap/error.hpp"
#include "exmap/io.hpp"
#include "exmap/pipeline.hpp"

namespace exmap {

struct HttpReply {
  int status = 200;
  json body;
};

struct FieldStats {
  double min = 0.0;
  double max = 0.0;
  int argmax_x = 0;
  int argmax_y = 0;
};

inline FieldStats field_stats(const ScalarField& f) {
  FieldStats s;
  s.min = s.max = f.values()[0];
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const double v = f(x, y);
      s.min = std::min(s.min, v);
      if (v > s.max) {
        s.max = v;
        s.argmax_x = x;
        s.argmax_y = y;
      }
    }
  }
  return s;
}

/// Maps library errors to HTTP: geometry 422, input 400, missing resources
/// 404, I/O 500.
inline HttpReply error_reply(const Error& e) {
  json body = {{"error", e.what()}, {"code", std::string(code_name(e.code()))}};
  if (const auto* s = dynamic_cast<const SchemaError*>(&e)) body["path"] = s->path();
  if (const auto* m = dynamic_cast<const MalformedError*>(&e)) body["offset"] = m->offset();
  if (is_geometric(e.code())) return {422, body};
  if (e.code() == ErrorCode::Io) return {500, body};
  return {400, body};
}

class AnnotationService {
 public:
  AnnotationService(Manifest manifest, std::filesystem::path export_dir,
                    std::optional<std::filesystem::path> static_dir = std::nullopt)
      : manifest_(std::move(manifest)),
        export_dir_(std::move(export_dir)),
        static_dir_(std::move(static_dir)) {}

  const Manifest& manifest() const noexcept { return manifest_; }

  HttpReply list_slices() const {
    json out = json::array();
    for (const auto& rec : manifest_.records) {
      json item = {{"id", rec.id}, {"has_annotation", has_annotation(rec)}};
      try {
        const GridShape shape = slice_shape(rec);
        item["width"] = shape.width;
        item["height"] = shape.height;
      } catch (const std::exception& e) {
        item["error"] = e.what();
      }
      out.push_back(std::move(item));
    }
    return {200, out};
  }

  HttpReply confmap(std::string_view body) const {
    return guarded([&]() -> HttpReply {
      const json req = detail::parse_json(body);
      require_object(req, {"slice_id", "points", "variant", "tau", "gaussian_sigma", "levels"});
      const ManifestRecord& rec = record_for(req);
      const PointsDoc doc = points_from_json(detail::member(req, "points", "points"));
      if (doc.shape != slice_shape(rec)) throw SchemaError("points.shape", "does not match the slice");
      const CueVariant variant = variant_of(req);
      const CueOptions options = options_of(req);
      std::vector<double> levels = default_contour_levels();
      if (req.contains("levels")) {
        levels.clear();
        if (!req["levels"].is_array()) throw SchemaError("levels", "expected an array");
        for (std::size_t i = 0; i < req["levels"].size(); ++i) {
          levels.push_back(detail::number_at(req["levels"][i], "levels[" + std::to_string(i) + "]"));
        }
      }

      const auto start = std::chrono::steady_clock::now();
      const auto channels = cue_channels_for(doc, variant, options);
      const double elapsed =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

      const ScalarField& primary = channels.front().second;
      json encoded = json::object();
      for (const auto& [name, field] : channels) encoded[name] = base64(write_float_raster(field));
      const FieldStats stats = field_stats(primary);
      return {200,
              {{"field", encoded[channels.front().first]},
               {"channel", channels.front().first},
               {"channels", encoded},
               {"contours", contours_to_json(iso_contours(primary, levels))},
               {"stats",
                {{"min", stats.min},
                 {"max", stats.max},
                 {"argmax", {stats.argmax_x, stats.argmax_y}},
                 {"elapsed_ms", elapsed}}}}};
    });
  }

  HttpReply save_annotation(std::string_view body) {
    return guarded([&]() -> HttpReply {
      const json req = detail::parse_json(body);
      require_object(req, {"slice_id", "points", "variant"});
      const ManifestRecord& rec = record_for(req);
      const PointsDoc doc = points_from_json(detail::member(req, "points", "points"));
      if (doc.shape != slice_shape(rec)) throw SchemaError("points.shape", "does not match the slice");
      const CueVariant variant = variant_of(req);
      if (!safe_file_stem(rec.id)) throw SchemaError("slice_id", "id is not usable as a file name");

      std::lock_guard lock(slice_mutex(rec.id));
      write_file_atomic(annotation_path(rec.id), write_points(doc));
      write_file_atomic(variant_path(rec.id), std::string(variant_name(variant)) + "\n");
      return {200, {{"slice_id", rec.id}, {"path", annotation_path(rec.id).string()}}};
    });
  }

  HttpReply get_annotation(std::string_view id) const {
    return guarded([&]() -> HttpReply {
      const ManifestRecord* rec = manifest_.find(id);
      if (!rec) return {404, {{"error", "unknown slice"}, {"code", "not_found"}}};
      const auto saved = saved_annotation(*rec);
      if (!saved) return {404, {{"error", "slice has no annotation"}, {"code", "not_found"}}};
      return {200,
              {{"slice_id", rec->id},
               {"points", points_to_json(saved->first)},
               {"variant", std::string(variant_name(saved->second))}}};
    });
  }

  HttpReply export_slice(std::string_view body) {
    return guarded([&]() -> HttpReply {
      const json req = detail::parse_json(body);
      require_object(req, {"slice_id", "variant", "tau", "gaussian_sigma"});
      const ManifestRecord& rec = record_for(req);
      const CueVariant variant = variant_of(req);
      const CueOptions options = options_of(req);

      std::lock_guard lock(slice_mutex(rec.id));
      const auto saved = saved_annotation(rec);
      if (!saved) return {409, {{"error", "slice has no saved annotation"}, {"code", "conflict"}}};

      const LoadedImage image = load_image(manifest_.resolve(rec.image_path), rec.format);
      const Sample sample = make_sample(image, saved->first.points, variant, options, rec.id);
      const MultiChannelRaster stacked = stack_cues(sample, variant);
      if (!safe_file_stem(rec.id)) throw SchemaError("slice_id", "id is not usable as a file name");
      std::filesystem::create_directories(export_dir_);
      const auto files = encode_channels(export_dir_ / rec.id, stacked.channels);
      commit_files(files);

      json paths = json::array();
      for (const auto& f : files) paths.push_back(f.path.string());
      return {200, {{"slice_id", rec.id}, {"variant", std::string(variant_name(variant))}, {"paths", paths}}};
    });
  }

  void mount(httplib::Server& server) {
    const auto send = [](httplib::Response& res, const HttpReply& reply) {
      res.status = reply.status;
      res.set_content(reply.body.dump(), "application/json");
    };
    server.Get("/api/slices", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, list_slices());
    });
    server.Post("/api/confmap", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, confmap(req.body));
    });
    server.Post("/api/annotations", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, save_annotation(req.body));
    });
    server.Get(R"(/api/annotations/([^/]+))",
               [this, send](const httplib::Request& req, httplib::Response& res) {
                 send(res, get_annotation(req.matches[1].str()));
               });
    server.Post("/api/export", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, export_slice(req.body));
    });
    if (static_dir_ && std::filesystem::is_directory(*static_dir_)) {
      server.set_mount_point("/", static_dir_->string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(
            "<!doctype html><title>exmap</title><p>UI bundle not installed; API under /api/.</p>",
            "text/html");
      });
    }
  }

  std::filesystem::path annotation_path(std::string_view id) const {
    return manifest_.base_dir / (std::string(id) + ".points.json");
  }

 private:
  std::filesystem::path variant_path(std::string_view id) const {
    return manifest_.base_dir / (std::string(id) + ".variant");
  }

  static bool safe_file_stem(std::string_view id) {
    if (id.empty() || id == "." || id == "..") return false;
    for (char ch : id) {
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '_' && ch != '-') {
        return false;
      }
    }
    return true;
  }

  template <typename F>
  static HttpReply guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      return error_reply(e);
    } catch (const std::exception& e) {
      return {500, {{"error", e.what()}, {"code", "internal"}}};
    }
  }

  static void require_object(const json& req, std::initializer_list<std::string_view> allowed) {
    if (!req.is_object()) throw SchemaError("$", "expected an object");
    detail::reject_unknown_keys(req, allowed, "");
  }

  static CueVariant variant_of(const json& req) {
    if (!req.contains("variant")) return CueVariant::CM;
    if (!req["variant"].is_string()) throw SchemaError("variant", "expected a string");
    try {
      return parse_variant(req["variant"].get<std::string>());
    } catch (const Error&) {
      throw SchemaError("variant", "expected \"cm\", \"ep\" or \"cm-ep\"");
    }
  }

  static CueOptions options_of(const json& req) {
    CueOptions options;
    if (req.contains("tau") && !req["tau"].is_null()) {
      const double tau = detail::number_at(req["tau"], "tau");
      if (!(tau > 0.0)) throw SchemaError("tau", "must be positive");
      options.confidence.tau = tau;
    }
    if (req.contains("gaussian_sigma")) {
      options.gaussian_sigma = detail::number_at(req["gaussian_sigma"], "gaussian_sigma");
      if (!(options.gaussian_sigma > 0.0)) throw SchemaError("gaussian_sigma", "must be positive");
    }
    return options;
  }

  const ManifestRecord& record_for(const json& req) const {
    const json& id = detail::member(req, "slice_id", "slice_id");
    if (!id.is_string()) throw SchemaError("slice_id", "expected a string");
    const ManifestRecord* rec = manifest_.find(id.get<std::string>());
    if (!rec) throw SchemaError("slice_id", "unknown slice '" + id.get<std::string>() + "'");
    return *rec;
  }

  GridShape slice_shape(const ManifestRecord& rec) const {
    return read_image(manifest_.resolve(rec.image_path), rec.format).shape();
  }

  bool has_annotation(const ManifestRecord& rec) const {
    return std::filesystem::exists(annotation_path(rec.id)) || rec.points_path.has_value();
  }

  std::optional<std::pair<PointsDoc, CueVariant>> saved_annotation(const ManifestRecord& rec) const {
    std::filesystem::path path = annotation_path(rec.id);
    CueVariant variant = CueVariant::CM;
    if (!std::filesystem::exists(path)) {
      if (!rec.points_path) return std::nullopt;
      path = manifest_.resolve(*rec.points_path);
    } else if (std::filesystem::exists(variant_path(rec.id))) {
      std::string text = read_text(variant_path(rec.id));
      while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
      variant = parse_variant(text);
    }
    return std::make_pair(load_points(path), variant);
  }

  std::mutex& slice_mutex(const std::string& id) {
    std::lock_guard lock(registry_mutex_);
    auto& m = slice_mutexes_[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  static std::string base64(const Bytes& bytes) {
    return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
  }

  Manifest manifest_;
  std::filesystem::path export_dir_;
  std::optional<std::filesystem::path> static_dir_;
  std::mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> slice_mutexes_;
};

}  // namespace exmap
