#include <gtest/gtest.h>

#include <cmath>

#include "exmap/mask_ops.hpp"
#include "support.hpp"

using namespace exmap;
using exmap::testing::Gen;

namespace {

BinaryMask from_pixels(GridShape shape, std::initializer_list<std::pair<int, int>> px) {
  BinaryMask m(shape);
  for (auto [x, y] : px) m(x, y) = 1;
  return m;
}

template <typename F>
void expect_error(ErrorCode code, F&& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << code_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(ExtremePoints, DiskCompassPoints) {
  const ExtremePoints e = extract_extreme_points(exmap::testing::disk_mask({64, 64}, {32, 32}, 10));
  EXPECT_EQ(e.left, (Point2{22, 32}));
  EXPECT_EQ(e.right, (Point2{42, 32}));
  EXPECT_EQ(e.top, (Point2{32, 22}));
  EXPECT_EQ(e.bottom, (Point2{32, 42}));
}

TEST(ExtremePoints, SinglePixel) {
  const ExtremePoints e = extract_extreme_points(from_pixels({10, 10}, {{5, 7}}));
  for (const Point2& p : e.as_array()) EXPECT_EQ(p, (Point2{5, 7}));
}

TEST(ExtremePoints, TiesTakeTheLowerMedian) {
  // left column x=1 holds rows 2,3,4,5 -> lower median 3
  const ExtremePoints e =
      extract_extreme_points(from_pixels({8, 8}, {{1, 2}, {1, 3}, {1, 4}, {1, 5}, {4, 0}, {6, 1}, {6, 6}, {2, 7}, {5, 7}, {6, 7}}));
  EXPECT_EQ(e.left, (Point2{1, 3}));
  EXPECT_EQ(e.right, (Point2{6, 6}));
  EXPECT_EQ(e.top, (Point2{4, 0}));
  EXPECT_EQ(e.bottom, (Point2{5, 7}));
}

TEST(ExtremePoints, EmptyMaskIsAnError) {
  expect_error(ErrorCode::EmptyMask, [] { extract_extreme_points(BinaryMask({5, 5})); });
}

TEST(ExtremePointsProperty, MatchScanOracleOnBlobs) {
  Gen g(41);
  for (int i = 0; i < 200; ++i) {
    const BinaryMask m = exmap::testing::blob_mask({48, 40}, g);
    const ExtremePoints e = extract_extreme_points(m);
    ASSERT_EQ(e, exmap::testing::scan_extremes(m));
    for (const Point2& p : e.as_array()) ASSERT_TRUE(m(int(p.x), int(p.y)));
  }
}

TEST(ExtremePointsProperty, BoundingBoxIsTight) {
  Gen g(42);
  for (int i = 0; i < 100; ++i) {
    const BinaryMask m = exmap::testing::blob_mask({40, 40}, g);
    int x0 = 99, x1 = -1, y0 = 99, y1 = -1;
    for (int y = 0; y < 40; ++y) {
      for (int x = 0; x < 40; ++x) {
        if (!m(x, y)) continue;
        x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
      }
    }
    const BoxSize b = bounding_box(extract_extreme_points(m));
    ASSERT_EQ(b.w, x1 - x0);
    ASSERT_EQ(b.h, y1 - y0);
  }
}

TEST(BoundingBox, Examples) {
  const BoxSize disk = bounding_box(extract_extreme_points(exmap::testing::disk_mask({64, 64}, {32, 32}, 10)));
  EXPECT_EQ(disk.w, 20.0);
  EXPECT_EQ(disk.h, 20.0);
  const BoxSize single = bounding_box({{5, 7}, {5, 7}, {5, 7}, {5, 7}});
  EXPECT_EQ(single.w, 0.0);
  EXPECT_EQ(single.h, 0.0);
  const BoxSize b = bounding_box({{3, 9}, {40, 11}, {20, 2}, {22, 30}});
  EXPECT_EQ(b.w, 37.0);
  EXPECT_EQ(b.h, 28.0);
  EXPECT_EQ(b.longest(), 37.0);
}

TEST(MaskCovariance, FourCornerSquare) {
  const MaskStats s = mask_covariance(from_pixels({3, 3}, {{0, 0}, {2, 0}, {0, 2}, {2, 2}}));
  EXPECT_EQ(s.centroid, (Point2{1, 1}));
  EXPECT_LE((s.S - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(s.count, 4u);
}

TEST(MaskCovariance, FilledRectangleHasUniformVariances) {
  // 41 x 11 block: discrete uniform variance (n^2 - 1) / 12 per axis
  BinaryMask m({60, 30});
  for (int y = 10; y < 21; ++y) {
    for (int x = 5; x < 46; ++x) m(x, y) = 1;
  }
  const MaskStats s = mask_covariance(m);
  EXPECT_NEAR(s.lambda[0], (41.0 * 41.0 - 1) / 12.0, 1e-9);
  EXPECT_NEAR(s.lambda[1], (11.0 * 11.0 - 1) / 12.0, 1e-9);
  EXPECT_NEAR(std::abs(s.R(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(s.R.determinant(), 1.0, 1e-12);
  // continuous uniform variance n^2/12 within 2%
  EXPECT_NEAR(s.lambda[0] / (41.0 * 41.0 / 12.0), 1.0, 0.02);
  EXPECT_NEAR(s.lambda[1] / (11.0 * 11.0 / 12.0), 1.0, 0.02);
}

TEST(MaskCovariance, TooFewOrCollinearPixels) {
  expect_error(ErrorCode::EmptyMask, [] { mask_covariance(BinaryMask({4, 4})); });
  expect_error(ErrorCode::SingularCovariance, [] { mask_covariance(from_pixels({4, 4}, {{0, 0}, {1, 1}})); });
  expect_error(ErrorCode::SingularCovariance,
               [] { mask_covariance(from_pixels({6, 6}, {{0, 0}, {1, 1}, {2, 2}, {4, 4}})); });
}

TEST(MaskCovarianceProperty, ReconstructionAndTranslation) {
  Gen g(43);
  for (int i = 0; i < 100; ++i) {
    BinaryMask m({40, 40});
    const BinaryMask blob = exmap::testing::blob_mask({30, 30}, g);
    const int dx = g.integer(0, 10), dy = g.integer(0, 10);
    for (int y = 0; y < 30; ++y) {
      for (int x = 0; x < 30; ++x) m(x + dx, y + dy) = blob(x, y);
    }
    MaskStats a, b;
    try {
      a = mask_covariance(blob);
      b = mask_covariance(m);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::SingularCovariance);
      continue;
    }
    const Eigen::Matrix2d back =
        a.R * Eigen::Vector2d(a.lambda[0], a.lambda[1]).asDiagonal() * a.R.transpose();
    ASSERT_LE((back - a.S).cwiseAbs().maxCoeff(), 1e-9);
    ASSERT_GE(a.lambda[0], a.lambda[1]);
    ASSERT_NEAR(a.centroid.x + dx, b.centroid.x, 1e-9);
    ASSERT_NEAR(a.centroid.y + dy, b.centroid.y, 1e-9);
    ASSERT_LE((a.S - b.S).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(SimplifiedStatsFromMask, CentreChoice) {
  const BinaryMask m = exmap::testing::disk_mask({50, 50}, {20.3, 25.1}, 8);
  const SimplifiedStats at_cross = simplified_stats_from_mask(m);
  const ExtremePoints e = extract_extreme_points(m);
  EXPECT_EQ(at_cross.c, cue_pair_from_extremes(e).c);
  const SimplifiedStats at_centroid = simplified_stats_from_mask(m, 3.0, StatsCenter::Centroid);
  EXPECT_EQ(at_centroid.c, mask_covariance(m).centroid);
  EXPECT_EQ(at_centroid.S, at_cross.S);
}

TEST(ExtremePointsProperty, DiskCompassPointsWithinRasterBound) {
  // pixel-centre rasterization: the outermost column can sit up to
  // 1 + 1/(8r) inside the analytic point when the centre is sub-pixel
  Gen g(44);
  for (int i = 0; i < 300; ++i) {
    const double r = g.uniform(2, 30);
    const Point2 c = g.point(r + 2, 94 - r, r + 2, 94 - r);
    const ExtremePoints e = extract_extreme_points(exmap::testing::disk_mask({96, 96}, c, r));
    const ExtremePoints a{{c.x - r, c.y}, {c.x + r, c.y}, {c.x, c.y - r}, {c.x, c.y + r}};
    for (int k = 0; k < 4; ++k) {
      const Point2 d = e.as_array()[k] - a.as_array()[k];
      ASSERT_LE(std::max(std::abs(d.x), std::abs(d.y)), 1.0 + 1.0 / (8.0 * r)) << "r " << r;
    }
  }
}
