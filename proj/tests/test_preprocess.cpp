#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "exmap/pipeline.hpp"
#include "exmap/preprocess.hpp"
#include "support.hpp"

using namespace exmap;
using exmap::testing::Gen;

namespace {

template <typename F>
void expect_error(ErrorCode code, F&& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << code_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

LoadedImage ct_slice(GridShape shape, Gen& g) {
  ScalarField hu(shape);
  for (double& v : hu.values()) v = std::round(g.uniform(-1000, 1000));
  return {hu, ImageFormat::Ctsl, 0};
}

Sample disk_sample(GridShape shape, Point2 centre, double r, CueVariant variant, std::uint64_t seed = 1) {
  Gen g(seed);
  BinaryMask mask = exmap::testing::disk_mask(shape, centre, r);
  const ExtremePoints e = extract_extreme_points(mask);
  return make_sample(ct_slice(shape, g), e, variant, {}, "disk", std::move(mask));
}

double max_confidence_error(const Sample& s) {
  const ScalarField* f = s.find_channel(kConfidenceChannel);
  const CuePair cue = cue_pair_from_extremes(s.extremes);
  double worst = 0.0;
  for (int y = 0; y < f->height(); ++y) {
    for (int x = 0; x < f->width(); ++x) {
      worst = std::max(worst, std::abs((*f)(x, y) - confidence_at(cue, {double(x), double(y)})));
    }
  }
  return worst;
}

}  // namespace

TEST(WindowNormalize, WorkedValues) {
  const ScalarField out = window_normalize(ScalarField({3, 1}, {-500.0, 25.0, 250.0}));
  EXPECT_EQ(out, ScalarField({3, 1}, {0.0, 0.5, 1.0}));
  EXPECT_EQ(window_normalize(ScalarField({1, 1}, {4000.0}))(0, 0), 1.0);
}

TEST(WindowNormalize, RejectsEmptyWindowAndNonFinite) {
  expect_error(ErrorCode::InvalidArgument, [] { window_normalize(ScalarField({1, 1}), {5, 5}); });
  expect_error(ErrorCode::NonFinite, [] { window_normalize(ScalarField({1, 1}, {std::nan("")})); });
}

TEST(WindowNormalizeProperty, MonotoneBoundedAndIdempotent) {
  Gen g(51);
  ScalarField hu({200, 1});
  for (double& v : hu.values()) v = g.uniform(-2000, 2000);
  const ScalarField a = window_normalize(hu);
  for (std::size_t i = 0; i < hu.size(); ++i) {
    ASSERT_GE(a.values()[i], 0.0);
    ASSERT_LE(a.values()[i], 1.0);
    for (std::size_t j = 0; j < hu.size(); ++j) {
      if (hu.values()[i] <= hu.values()[j]) {
        ASSERT_LE(a.values()[i], a.values()[j]);
      }
    }
  }
  EXPECT_EQ(window_normalize(a, {0.0, 1.0}), a);
}

TEST(ZoomFactor, WorkedValues) {
  EXPECT_DOUBLE_EQ(zoom_factor({{10, 50}, {110, 40}, {60, 20}, {60, 80}}, 375), 3.75);
  EXPECT_DOUBLE_EQ(zoom_factor({{0, 175}, {350, 175}, {175, 0}, {175, 200}}, 350), 1.0);
  EXPECT_DOUBLE_EQ(zoom_factor({{0, 5}, {20, 5}, {10, 0}, {10, 10}}, 350), 17.5);
}

TEST(ZoomFactor, PointBoxIsDegenerate) {
  expect_error(ErrorCode::DegenerateBox, [] { zoom_factor({{5, 7}, {5, 7}, {5, 7}, {5, 7}}, 350); });
}

TEST(DrawTargetBox, RangeAndDeterminism) {
  for (std::uint64_t s = 0; s < 500; ++s) {
    const double b = draw_target_box(s);
    ASSERT_GE(b, 350.0);
    ASSERT_LE(b, 400.0);
    ASSERT_EQ(b, draw_target_box(s));
  }
}

TEST(CropSpec, RejectsTargetOutsideRange) {
  const ExtremePoints e{{0, 5}, {20, 5}, {10, 0}, {10, 10}};
  expect_error(ErrorCode::InvalidArgument, [&] { CropSpec::around(e, 349.9); });
  expect_error(ErrorCode::InvalidArgument, [&] { CropSpec::around(e, 400.1); });
}

TEST(CropResize, BoxLongSideBecomesTarget) {
  const Sample s = disk_sample({120, 100}, {60.4, 47.2}, 18, CueVariant::CM);
  for (double b_m : {350.0, 377.0, 400.0}) {
    const CropSpec spec = CropSpec::around(s.extremes, b_m);
    const Sample c = crop_resize(s, spec);
    EXPECT_EQ(c.image.shape(), (GridShape{512, 512}));
    EXPECT_NEAR(bounding_box(c.extremes).longest(), b_m, 1e-9);
    // the resampled mask agrees to within one source pixel
    const double mask_side = bounding_box(extract_extreme_points(*c.mask)).longest();
    EXPECT_NEAR(mask_side, b_m, spec.zoom + 1.0);
    EXPECT_LE(max_confidence_error(c), 1e-9);
  }
}

TEST(CropResize, SourceWindowSide) {
  // box side 100, target 350: the 512 output spans 512 / 3.5 source pixels
  const ExtremePoints e{{50, 100}, {150, 100}, {100, 60}, {100, 140}};
  const CropSpec spec = CropSpec::around(e, 350);
  const Affine2 back = spec.transform().inverse();
  const Point2 a = back.apply({0, 0});
  const Point2 b = back.apply({511, 511});
  EXPECT_NEAR((b.x - a.x) * 512.0 / 511.0, 146.28571428571428, 1e-9);
  EXPECT_NEAR(0.5 * (a.x + b.x), 100.0, 1e-12);
  EXPECT_NEAR(0.5 * (a.y + b.y), 100.0, 1e-12);
}

TEST(CropResize, IdentityCropIsBitExact) {
  Sample s = disk_sample({64, 64}, {30, 33}, 9, CueVariant::CM_EP);
  CropSpec spec;
  spec.center = {31.5, 31.5};
  spec.zoom = 1.0;
  spec.out_size = 64;
  const Sample c = crop_resize(s, spec);
  EXPECT_EQ(c.image, s.image);
  EXPECT_EQ(*c.mask, *s.mask);
  EXPECT_EQ(c.extremes, s.extremes);
  EXPECT_EQ(*c.find_channel(kGaussianChannel), *s.find_channel(kGaussianChannel));
  EXPECT_EQ(c.meta.transforms.size(), s.meta.transforms.size() + 1);
}

TEST(CropResize, OutsideTheImageIsZeroPadded) {
  Sample s;
  s.image = ScalarField({100, 100}, 1.0);
  s.extremes = {{0, 5}, {20, 5}, {10, 0}, {10, 10}};
  CropSpec spec;
  spec.center = {0.0, 0.0};
  spec.out_size = 64;
  const Sample c = crop_resize(s, spec);
  // output x maps to source x - 31.5, so columns and rows 32..63 are fully inside
  int ones = 0, zeros = 0;
  for (double v : c.image.values()) {
    ones += v == 1.0;
    zeros += v == 0.0;
  }
  EXPECT_EQ(ones, 32 * 32);
  EXPECT_EQ(zeros, 64 * 64 - 33 * 33);
}

TEST(CropResizeProperty, PointsRoundTrip) {
  Gen g(52);
  for (int i = 0; i < 50; ++i) {
    const ExtremePoints e = g.extremes({200, 150});
    const CropSpec spec = CropSpec::around(e, g.uniform(350, 400), g.integer(64, 600));
    const Affine2 f = spec.transform();
    const Affine2 b = f.inverse();
    for (const Point2& p : e.as_array()) {
      const Point2 back = b.apply(f.apply(p));
      ASSERT_NEAR(back.x, p.x, 1e-6);
      ASSERT_NEAR(back.y, p.y, 1e-6);
    }
  }
}

TEST(Augment, IdentityIsBitExact) {
  const Sample s = disk_sample({80, 70}, {35, 30}, 12, CueVariant::CM_EP);
  const Sample a = augment(s, {});
  EXPECT_EQ(a.image, s.image);
  EXPECT_EQ(*a.mask, *s.mask);
  EXPECT_EQ(a.extremes, s.extremes);
  EXPECT_EQ(*a.find_channel(kConfidenceChannel), *s.find_channel(kConfidenceChannel));
}

TEST(Augment, HorizontalFlipMirrorsAndSwapsRoles) {
  const Sample s = disk_sample({80, 70}, {25, 30}, 12, CueVariant::CM);
  AugmentParams p;
  p.hflip = true;
  const Sample a = augment(s, p);
  for (int y = 0; y < 70; ++y) {
    for (int x = 0; x < 80; ++x) {
      ASSERT_EQ(a.image(x, y), s.image(79 - x, y));
      ASSERT_EQ((*a.mask)(x, y), (*s.mask)(79 - x, y));
    }
  }
  EXPECT_EQ(a.extremes.left, (Point2{79 - s.extremes.right.x, s.extremes.right.y}));
  EXPECT_EQ(a.extremes.right, (Point2{79 - s.extremes.left.x, s.extremes.left.y}));
  EXPECT_EQ(a.extremes.top.y, s.extremes.top.y);
  EXPECT_LE(max_confidence_error(a), 1e-9);
}

TEST(Augment, RotatedDiskExtremesFollowTheCentre) {
  const GridShape shape{101, 101};
  const Point2 c0{70, 50};
  const Sample s = disk_sample(shape, c0, 10, CueVariant::CM);
  AugmentParams p;
  p.rotation_deg = 30.0;
  const Sample a = augment(s, p);
  const Point2 c1 = p.transform(shape).apply(c0);
  EXPECT_NEAR(a.extremes.left.x, c1.x - 10, 1.0);
  EXPECT_NEAR(a.extremes.right.x, c1.x + 10, 1.0);
  EXPECT_NEAR(a.extremes.top.y, c1.y - 10, 1.0);
  EXPECT_NEAR(a.extremes.bottom.y, c1.y + 10, 1.0);
  EXPECT_NEAR(a.extremes.left.y, c1.y, 1.0);
  EXPECT_NEAR(a.extremes.top.x, c1.x, 1.0);
  EXPECT_LE(max_confidence_error(a), 1e-9);
}

TEST(Augment, WithoutMaskRolesComeFromMappedPoints) {
  Sample s = disk_sample({64, 64}, {32, 32}, 10, CueVariant::CM);
  s.mask.reset();
  AugmentParams p;
  p.rotation_deg = 30.0;
  const Sample a = augment(s, p);
  for (const Point2& q : a.extremes.as_array()) {
    EXPECT_LE(a.extremes.left.x, q.x);
    EXPECT_GE(a.extremes.right.x, q.x);
    EXPECT_LE(a.extremes.top.y, q.y);
    EXPECT_GE(a.extremes.bottom.y, q.y);
  }
  EXPECT_LE(max_confidence_error(a), 1e-9);
}

TEST(Augment, DrawIsReproducibleAndInRange) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const AugmentParams a = AugmentParams::draw(seed);
    const AugmentParams b = AugmentParams::draw(seed);
    ASSERT_EQ(a.scale, b.scale);
    ASSERT_EQ(a.rotation_deg, b.rotation_deg);
    ASSERT_EQ(a.hflip, b.hflip);
    ASSERT_NO_THROW(a.validate());
  }
  const Sample s = disk_sample({48, 48}, {24, 20}, 8, CueVariant::CM_EP);
  const Sample x = augment(s, AugmentParams::draw(9));
  const Sample y = augment(s, AugmentParams::draw(9));
  EXPECT_EQ(x.image, y.image);
  EXPECT_EQ(x.extremes, y.extremes);
}

TEST(Augment, RejectsOutOfRangeParameters) {
  const Sample s = disk_sample({32, 32}, {16, 16}, 6, CueVariant::CM);
  AugmentParams p;
  p.scale = 1.2;
  expect_error(ErrorCode::InvalidArgument, [&] { augment(s, p); });
  p.scale = 1.0;
  p.rotation_deg = -31;
  expect_error(ErrorCode::InvalidArgument, [&] { augment(s, p); });
}

TEST(StackCues, ChannelOrderPerVariant) {
  const Sample s = disk_sample({40, 40}, {20, 20}, 7, CueVariant::CM_EP);
  const auto names = [](const MultiChannelRaster& r) {
    std::vector<std::string> out;
    for (const auto& [n, _] : r.channels) out.push_back(n);
    return out;
  };
  EXPECT_EQ(names(stack_cues(s, CueVariant::CM)), (std::vector<std::string>{"image", "confidence"}));
  EXPECT_EQ(names(stack_cues(s, CueVariant::EP)), (std::vector<std::string>{"image", "gaussians"}));
  EXPECT_EQ(names(stack_cues(s, CueVariant::CM_EP)),
            (std::vector<std::string>{"image", "confidence", "gaussians"}));
  EXPECT_EQ(stack_cues(s, CueVariant::CM).channels[0].second, s.image);
}

TEST(StackCues, MissingChannelIsAnError) {
  const Sample s = disk_sample({40, 40}, {20, 20}, 7, CueVariant::CM);
  expect_error(ErrorCode::MissingCue, [&] { stack_cues(s, CueVariant::EP); });
  Sample fixed = s;
  ensure_cues(fixed, CueVariant::CM_EP);
  EXPECT_EQ(stack_cues(fixed, CueVariant::CM_EP).channels.size(), 3u);
}

TEST(PreprocessSample, SeedDeterminesTheOutput) {
  Gen g(53);
  const LoadedImage img = ct_slice({90, 80}, g);
  const ExtremePoints e{{20, 40}, {70, 42}, {44, 15}, {46, 66}};
  PreprocessOptions opt;
  opt.variant = CueVariant::CM_EP;
  opt.crop = true;
  opt.augment = true;
  opt.out_size = 96;
  const auto a = preprocess_sample(img, e, opt, "x", std::nullopt, sample_seed(7, 0));
  const auto b = preprocess_sample(img, e, opt, "x", std::nullopt, sample_seed(7, 0));
  const auto c = preprocess_sample(img, e, opt, "x", std::nullopt, sample_seed(7, 1));
  ASSERT_EQ(a.channels.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.channels[i].second, b.channels[i].second);
  EXPECT_NE(a.channels[0].second, c.channels[0].second);
  EXPECT_EQ(a.shape, (GridShape{96, 96}));
}

TEST(SampleSeed, DistinctPerIndex) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(sample_seed(42, i));
  EXPECT_EQ(seen.size(), 1000u);
}
