// exmap: extreme-point cue toolkit.
//
// Subcommands: extract | confmap | preprocess | contours | bench | serve.
// stdout carries JSON lines; diagnostics go to stderr.
// Exit codes: 0 ok, 2 validation, 3 geometric degeneracy, 4 internal consistency.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "exmap/bench.hpp"
#include "exmap/confmap.hpp"
#include "exmap/contours.hpp"
#include "exmap/io.hpp"
#include "exmap/mask_ops.hpp"
#include "exmap/pipeline.hpp"
#include "exmap/service.hpp"

#include <CLI11.hpp>

namespace fs = std::filesystem;
using namespace exmap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitGeometry = 3;
constexpr int kExitInternal = 4;

struct InternalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

GridShape parse_shape(const std::string& text) {
  const auto x = text.find('x');
  try {
    std::size_t used = 0;
    if (x == std::string::npos) {
      const int n = std::stoi(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return {n, n};
    }
    const int w = std::stoi(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    const std::string rest = text.substr(x + 1);
    const int h = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    const GridShape shape{w, h};
    require_valid(shape);
    return shape;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidArgument, "bad size '" + text + "', expected N or WxH");
  }
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument, "bad contour level '" + item + "'");
    }
  }
  return out;
}

CueOptions cue_options(const std::optional<double>& tau, double gaussian_sigma) {
  CueOptions options;
  if (tau) {
    if (!(*tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "--tau must be positive");
    options.confidence.tau = tau;
  }
  if (!(gaussian_sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "--gaussian-sigma must be positive");
  options.gaussian_sigma = gaussian_sigma;
  return options;
}

json paths_json(const std::vector<EncodedFile>& files) {
  json out = json::array();
  for (const auto& f : files) out.push_back(f.path.string());
  return out;
}

void emit(const json& line) { std::cout << line.dump() << std::endl; }

// ---------------------------------------------------------------- extract

struct ExtractArgs {
  std::string mask;
  std::string format = "pgm";
  std::string out;
};

int run_extract(const ExtractArgs& a) {
  const BinaryMask mask = to_mask(read_image(a.mask, parse_format(a.format)));
  const PointsDoc doc{extract_extreme_points(mask), mask.shape()};
  const std::string text = write_points(doc);
  write_file_atomic(a.out, text);
  emit({{"out", a.out}, {"points", points_to_json(doc)}});
  return kExitOk;
}

// ---------------------------------------------------------------- confmap

struct ConfmapArgs {
  std::string image;
  std::string format = "pgm";
  std::string shape;
  std::string points;
  std::string variant = "cm";
  std::string out;
  std::optional<double> tau;
  double gaussian_sigma = kDefaultGaussianSigma;
};

int run_confmap(const ConfmapArgs& a) {
  const CueVariant variant = parse_variant(a.variant);
  const CueOptions options = cue_options(a.tau, a.gaussian_sigma);
  const PointsDoc doc = load_points(a.points);
  if (!a.image.empty()) {
    const GridShape shape = read_image(a.image, parse_format(a.format)).shape();
    if (shape != doc.shape) throw SchemaError("shape", "points shape does not match the image");
  }
  if (!a.shape.empty() && parse_shape(a.shape) != doc.shape) {
    throw SchemaError("shape", "points shape does not match --shape");
  }

  const auto start = std::chrono::steady_clock::now();
  const auto channels = cue_channels_for(doc, variant, options);
  const double elapsed =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  const auto files = encode_channels(a.out, channels);
  commit_files(files);
  const FieldStats stats = field_stats(channels.front().second);
  emit({{"min", stats.min},
        {"max", stats.max},
        {"argmax", {stats.argmax_x, stats.argmax_y}},
        {"elapsed_ms", elapsed},
        {"paths", paths_json(files)}});
  return kExitOk;
}

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
  std::string image;
  std::string format = "pgm";
  std::string points;
  std::string mask;
  std::string out;
  std::string manifest;
  std::string out_dir;
  std::string variant = "cm";
  std::optional<double> tau;
  double gaussian_sigma = kDefaultGaussianSigma;
  bool crop = false;
  std::optional<double> b_m;
  bool augment = false;
  std::uint64_t seed = 0;
  int out_size = kDefaultOutSize;
  int threads = 1;
};

PreprocessOptions preprocess_options(const PreprocessArgs& a) {
  PreprocessOptions o;
  o.variant = parse_variant(a.variant);
  o.cues = cue_options(a.tau, a.gaussian_sigma);
  o.crop = a.crop;
  o.b_m = a.b_m;
  if (o.b_m && (*o.b_m < kMinTargetBox || *o.b_m > kMaxTargetBox)) {
    throw Error(ErrorCode::InvalidArgument, "--b-m must lie in [350, 400]");
  }
  o.augment = a.augment;
  o.seed = a.seed;
  o.out_size = a.out_size;
  if (o.out_size <= 0) throw Error(ErrorCode::InvalidArgument, "--out-size must be positive");
  return o;
}

int run_preprocess_single(const PreprocessArgs& a, const PreprocessOptions& o) {
  if (a.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required with --image");
  const LoadedImage image = load_image(a.image, parse_format(a.format));
  std::optional<BinaryMask> mask;
  if (!a.mask.empty()) {
    mask = to_mask(read_image(a.mask, ImageFormat::Pgm));
    if (mask->shape() != image.pixels.shape()) {
      throw Error(ErrorCode::InvalidShape, "mask does not match the image");
    }
  }
  ExtremePoints e;
  if (!a.points.empty()) {
    const PointsDoc doc = load_points(a.points);
    if (doc.shape != image.pixels.shape()) throw SchemaError("shape", "points shape does not match the image");
    e = doc.points;
  } else if (mask) {
    e = extract_extreme_points(*mask);
  } else {
    throw Error(ErrorCode::InvalidArgument, "--points or --mask is required");
  }
  const std::string id = fs::path(a.image).stem().string();
  const auto stacked = preprocess_sample(image, e, o, id, std::move(mask), sample_seed(o.seed, 0));
  const auto files = encode_channels(a.out, stacked.channels);
  commit_files(files);
  emit({{"id", id}, {"shape", {stacked.shape.width, stacked.shape.height}}, {"paths", paths_json(files)}});
  return kExitOk;
}

int run_preprocess_batch(const PreprocessArgs& a, const PreprocessOptions& o) {
  if (a.out_dir.empty()) throw Error(ErrorCode::InvalidArgument, "--out-dir is required with --manifest");
  const Manifest manifest = load_manifest(a.manifest, true);
  const std::size_t n = manifest.records.size();
  std::vector<std::vector<EncodedFile>> results(n);
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const ManifestRecord& rec = manifest.records[i];
        const LoadedImage image = load_image(manifest.resolve(rec.image_path), rec.format);
        std::optional<BinaryMask> mask;
        const ExtremePoints e = record_extremes(manifest, rec, image.pixels.shape(), &mask);
        const auto stacked =
            preprocess_sample(image, e, o, rec.id, std::move(mask), sample_seed(o.seed, i));
        results[i] = encode_channels(fs::path(a.out_dir) / rec.id, stacked.channels);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(a.threads, static_cast<int>(std::max<std::size_t>(n, 1))));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  fs::create_directories(a.out_dir);
  std::vector<EncodedFile> all;
  for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
  commit_files(all);
  for (std::size_t i = 0; i < n; ++i) {
    emit({{"id", manifest.records[i].id}, {"paths", paths_json(results[i])}});
  }
  return kExitOk;
}

int run_preprocess(const PreprocessArgs& a) {
  const PreprocessOptions o = preprocess_options(a);
  if (a.threads <= 0) throw Error(ErrorCode::InvalidArgument, "--threads must be positive");
  if (!a.manifest.empty() == !a.image.empty()) {
    throw Error(ErrorCode::InvalidArgument, "give exactly one of --image or --manifest");
  }
  return a.manifest.empty() ? run_preprocess_single(a, o) : run_preprocess_batch(a, o);
}

// ---------------------------------------------------------------- contours

struct ContoursArgs {
  std::string field;
  std::string levels;
  std::string out;
};

int run_contours(const ContoursArgs& a) {
  const std::vector<double> levels = a.levels.empty() ? default_contour_levels() : parse_levels(a.levels);
  const ScalarField field = read_float_raster(read_file(a.field));
  const ContourSet set = iso_contours(field, levels);
  const json doc = contours_to_json(set);
  std::size_t count = 0;
  for (const auto& lines : set.polylines) count += lines.size();
  if (!a.out.empty()) {
    write_file_atomic(a.out, doc.dump() + "\n");
    emit({{"out", a.out}, {"levels", set.levels}, {"polylines", count}});
  } else {
    emit(doc);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string sizes = "512";
  int iterations = 10;
  std::uint64_t seed = 0;
};

int run_bench_cmd(const BenchArgs& a) {
  if (a.iterations < 3) throw Error(ErrorCode::InvalidArgument, "--iterations must be at least 3");
  std::vector<GridShape> shapes;
  std::stringstream ss(a.sizes);
  std::string item;
  while (std::getline(ss, item, ',')) shapes.push_back(parse_shape(item));
  if (shapes.empty()) throw Error(ErrorCode::InvalidArgument, "--sizes is empty");

  for (const GridShape& shape : shapes) {
    const BenchReport r = run_bench(shape, a.iterations, a.seed);
    if (!r.equivalent) {
      throw InternalFailure("fast and reference distance fields differ by " +
                            std::to_string(r.max_abs_diff) + " on " + std::to_string(shape.width) +
                            "x" + std::to_string(shape.height));
    }
    const auto timing = [](const TimingSummary& t) {
      return json{{"median_ms", t.median_ms}, {"min_ms", t.min_ms}};
    };
    emit({{"size", {shape.width, shape.height}},
          {"iterations", r.iterations},
          {"confmap", timing(r.confmap)},
          {"fast_field", timing(r.fast_field)},
          {"naive_field", timing(r.naive_field)},
          {"speedup", r.speedup()},
          {"max_abs_diff", r.max_abs_diff}});
  }
  return kExitOk;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string manifest;
  std::string export_dir;
  std::string static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  int threads = 1;
};

int run_serve(const ServeArgs& a) {
  if (a.port <= 0 || a.port > 65535) throw Error(ErrorCode::InvalidArgument, "--port out of range");
  Manifest manifest = load_manifest(a.manifest);
  const fs::path export_dir = a.export_dir.empty() ? fs::path(a.manifest).parent_path() / "export"
                                                   : fs::path(a.export_dir);
  std::optional<fs::path> static_dir;
  if (!a.static_dir.empty()) static_dir = a.static_dir;
  AnnotationService service(std::move(manifest), export_dir, static_dir);

  httplib::Server server;
  server.new_task_queue = [n = a.threads] { return new httplib::ThreadPool(std::max(1, n)); };
  service.mount(server);
  if (!server.bind_to_port(a.host, a.port)) {
    throw Error(ErrorCode::Io, "cannot bind " + a.host + ":" + std::to_string(a.port));
  }
  emit({{"listening", a.host + ":" + std::to_string(a.port)}});
  server.listen_after_bind();
  return kExitOk;
}

int default_threads() {
  if (const char* env = std::getenv("EXMAP_THREADS")) {
    try {
      return std::stoi(env);
    } catch (const std::logic_error&) {
    }
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exmap: confidence maps from extreme points"};
  app.require_subcommand(1);

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "extreme points of a binary mask");
  c_extract->add_option("--mask", extract.mask, "mask image (nonzero = foreground)")->required();
  c_extract->add_option("--format", extract.format, "pgm | ctsl");
  c_extract->add_option("--out", extract.out, "output PointsDoc")->required();

  ConfmapArgs confmap;
  auto* c_confmap = app.add_subcommand("confmap", "cue channels for a PointsDoc");
  c_confmap->add_option("--image", confmap.image, "image whose shape must match");
  c_confmap->add_option("--format", confmap.format, "pgm | ctsl");
  c_confmap->add_option("--shape", confmap.shape, "WxH check against the points shape");
  c_confmap->add_option("--points", confmap.points, "PointsDoc")->required();
  c_confmap->add_option("--variant", confmap.variant, "cm | ep | cm-ep");
  c_confmap->add_option("--out", confmap.out, "output prefix: <out>_<channel>.cmap")->required();
  c_confmap->add_option("--tau", confmap.tau, "zero pixels whose combined distance exceeds tau");
  c_confmap->add_option("--gaussian-sigma", confmap.gaussian_sigma, "EP Gaussian sigma in px");

  PreprocessArgs pre;
  pre.threads = default_threads();
  auto* c_pre = app.add_subcommand("preprocess", "windowed image + stacked cue channels");
  c_pre->add_option("--image", pre.image, "single image");
  c_pre->add_option("--format", pre.format, "pgm | ctsl");
  c_pre->add_option("--points", pre.points, "PointsDoc for --image");
  c_pre->add_option("--mask", pre.mask, "mask for --image (PGM)");
  c_pre->add_option("--out", pre.out, "output prefix for --image");
  c_pre->add_option("--manifest", pre.manifest, "batch over a manifest");
  c_pre->add_option("--out-dir", pre.out_dir, "batch output directory");
  c_pre->add_option("--variant", pre.variant, "cm | ep | cm-ep");
  c_pre->add_option("--tau", pre.tau);
  c_pre->add_option("--gaussian-sigma", pre.gaussian_sigma);
  c_pre->add_flag("--crop", pre.crop, "zoomed crop around the bounding box");
  c_pre->add_option("--b-m", pre.b_m, "target box side in [350, 400]; drawn from --seed if unset");
  c_pre->add_flag("--augment", pre.augment, "random scale/rotation/flip from --seed");
  c_pre->add_option("--seed", pre.seed);
  c_pre->add_option("--out-size", pre.out_size, "crop side in px");
  c_pre->add_option("--threads", pre.threads, "worker threads (default $EXMAP_THREADS or 1)");

  ContoursArgs contours;
  auto* c_contours = app.add_subcommand("contours", "iso-contours of a CMAP raster");
  c_contours->add_option("--field", contours.field, "CMAP raster")->required();
  c_contours->add_option("--levels", contours.levels, "comma-separated levels in (0,1)");
  c_contours->add_option("--out", contours.out, "output JSON (stdout when omitted)");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "time the raster kernel against the reference");
  c_bench->add_option("--sizes", bench.sizes, "comma-separated N or WxH");
  c_bench->add_option("--iterations", bench.iterations);
  c_bench->add_option("--seed", bench.seed);

  ServeArgs serve;
  serve.threads = default_threads();
  auto* c_serve = app.add_subcommand("serve", "annotation HTTP service");
  c_serve->add_option("--manifest", serve.manifest)->required();
  c_serve->add_option("--export-dir", serve.export_dir);
  c_serve->add_option("--static", serve.static_dir, "UI bundle directory");
  c_serve->add_option("--host", serve.host);
  c_serve->add_option("--port", serve.port);
  c_serve->add_option("--threads", serve.threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*c_extract) return run_extract(extract);
    if (*c_confmap) return run_confmap(confmap);
    if (*c_pre) return run_preprocess(pre);
    if (*c_contours) return run_contours(contours);
    if (*c_bench) return run_bench_cmd(bench);
    if (*c_serve) return run_serve(serve);
  } catch (const InternalFailure& e) {
    std::cerr << "exmap: " << e.what() << "\n";
    return kExitInternal;
  } catch (const Error& e) {
    std::cerr << "exmap: " << e.what() << "\n";
    return is_geometric(e.code()) ? kExitGeometry : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "exmap: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
