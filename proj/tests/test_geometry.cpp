#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "orthoview/dataset.hpp"
#include "orthoview/geometry.hpp"
#include "orthoview/random.hpp"
#include "support.hpp"

using namespace orthoview;

TEST(RandomStream, SameKeyGivesSameSequence) {
  RandomStream a(7, "x", 3, 2), b(7, "x", 3, 2);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(RandomStream, StreamsDifferByNameIdEpoch) {
  const auto first = [](RandomStream r) { return r(); };
  const std::uint64_t base = first(RandomStream(7, "x", 3, 2));
  EXPECT_NE(base, first(RandomStream(8, "x", 3, 2)));
  EXPECT_NE(base, first(RandomStream(7, "y", 3, 2)));
  EXPECT_NE(base, first(RandomStream(7, "x", 4, 2)));
  EXPECT_NE(base, first(RandomStream(7, "x", 3, 3)));
}

TEST(RandomStream, UniformMoments) {
  RandomStream r(1, "moments");
  double s = 0.0, ss = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    ss += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 0.005);
  EXPECT_NEAR(ss / n - 0.25, 1.0 / 12.0, 0.002);
}

TEST(Normalize, WorkedExample) {
  PointCloud c;
  c.points = {{1, 0, 0}, {3, 0, 0}, {2, 4, 0}};
  const UnitCubeFit fit = fit_unit_cube(c);
  EXPECT_DOUBLE_EQ(fit.center.x, 2.0);
  EXPECT_DOUBLE_EQ(fit.center.y, 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(fit.center.z, 0.0);
  EXPECT_DOUBLE_EQ(fit.scale, 8.0 / 3.0);
  EXPECT_DOUBLE_EQ(fit.cloud.points[2].y, 1.0);
  EXPECT_DOUBLE_EQ(fit.cloud.points[0].x, -0.375);
  EXPECT_FALSE(fit.degenerate);
}

TEST(Normalize, ResultTouchesCubeAndIsCentered) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PointCloud c = testing_support::random_cloud(seed, 50, 3.0);
    for (Vec3& p : c.points) p = p + Vec3{5, -2, 1};
    const PointCloud n = normalize_unit_cube(c);
    double m = 0.0;
    for (Vec3 p : n.points) m = std::max({m, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    EXPECT_NEAR(m, 1.0, 1e-15);
    const Vec3 ctr = centroid(n);
    EXPECT_NEAR(norm(ctr), 0.0, 1e-13);
  }
}

TEST(Normalize, DegenerateAndInvalid) {
  PointCloud same;
  same.points = {{2, 2, 2}, {2, 2, 2}};
  const UnitCubeFit fit = fit_unit_cube(same);
  EXPECT_TRUE(fit.degenerate);
  EXPECT_EQ(fit.cloud.points[0], (Vec3{0, 0, 0}));
  EXPECT_THROW(normalize_unit_cube(PointCloud{}), std::invalid_argument);
  PointCloud bad;
  bad.points = {{0, 0, std::nan("")}};
  EXPECT_THROW(normalize_unit_cube(bad), std::invalid_argument);
}

TEST(Rotation, RodriguesIsOrthonormalAndFixesAxis) {
  RandomStream r(3, "rot");
  for (int t = 0; t < 50; ++t) {
    const Vec3 axis = random_unit_vector(r);
    const Mat3 m = axis_angle(axis, r.uniform(-3.0, 3.0));
    const Vec3 a = apply(m, axis);
    EXPECT_NEAR(norm(a - axis), 0.0, 1e-14);
    const Vec3 e0 = apply(m, {1, 0, 0}), e1 = apply(m, {0, 1, 0}), e2 = apply(m, {0, 0, 1});
    EXPECT_NEAR(dot(e0, e1), 0.0, 1e-14);
    EXPECT_NEAR(dot(e1, e2), 0.0, 1e-14);
    EXPECT_NEAR(norm(e0), 1.0, 1e-14);
    EXPECT_NEAR(dot(cross(e0, e1), e2), 1.0, 1e-14);
  }
  const Vec3 q = apply(axis_angle({0, 0, 1}, std::numbers::pi / 2), {1, 0, 0});
  EXPECT_NEAR(q.x, 0.0, 1e-15);
  EXPECT_NEAR(q.y, 1.0, 1e-15);
}

class ShapeTest : public ::testing::TestWithParam<ShapeKind> {};

TEST_P(ShapeTest, SamplesLieOnSurface) {
  const ShapeKind kind = GetParam();
  const ShapeParams prm = default_shape_params(kind);
  const auto& d = prm.dims;
  const PointCloud c = synth_shape(kind, 2000, 11);
  ASSERT_EQ(c.size(), 2000u);
  ASSERT_TRUE(all_finite(c));
  for (Vec3 p : c.points) {
    double err = 0.0;
    switch (kind) {
      case ShapeKind::sphere: err = std::abs(norm(p) - d[0]); break;
      case ShapeKind::box: {
        // dims are full edge lengths
        const double m = std::max({std::abs(p.x) / d[0], std::abs(p.y) / d[1], std::abs(p.z) / d[2]}) * 2.0;
        err = std::abs(m - 1.0);
        break;
      }
      case ShapeKind::torus: {
        const double q = std::hypot(p.x, p.y) - d[0];
        err = std::abs(std::hypot(q, p.z) - d[1]);
        break;
      }
      case ShapeKind::ellipsoid:
        err = std::abs(std::sqrt(p.x * p.x / (d[0] * d[0]) + p.y * p.y / (d[1] * d[1]) + p.z * p.z / (d[2] * d[2])) -
                       1.0);
        break;
      default: {
        // Everything else lies inside its bounding box.
        const double r = std::hypot(p.x, p.y);
        err = std::max(0.0, r - std::max(d[0], d[1]) - 1e-12);
        break;
      }
    }
    EXPECT_LT(err, 1e-9) << to_string(kind);
  }
}

TEST_P(ShapeTest, DeterministicPerSeed) {
  const auto a = synth_shape(GetParam(), 64, 5), b = synth_shape(GetParam(), 64, 5), c = synth_shape(GetParam(), 64, 6);
  EXPECT_EQ(a.points, b.points);
  EXPECT_NE(a.points, c.points);
}

INSTANTIATE_TEST_SUITE_P(AllShapes, ShapeTest, ::testing::ValuesIn(kAllShapes),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Shapes, NameRoundTripAndErrors) {
  for (ShapeKind k : kAllShapes) EXPECT_EQ(shape_from_string(to_string(k)), k);
  EXPECT_THROW(shape_from_string("teapot"), std::invalid_argument);
  EXPECT_THROW(synth_shape(ShapeKind::sphere, 4, 1), std::invalid_argument);
  ShapeParams bad = default_shape_params(ShapeKind::box);
  bad.dims[1] = 0.0;
  EXPECT_THROW(synth_shape(ShapeKind::box, 100, 1, bad), std::invalid_argument);
  ShapeParams torus = default_shape_params(ShapeKind::torus);
  torus.dims[1] = torus.dims[0] * 2;
  EXPECT_THROW(synth_shape(ShapeKind::torus, 100, 1, torus), std::invalid_argument);
}

TEST(Corruption, KeepsPointCountAndIsDeterministic) {
  PointCloud c = normalize_unit_cube(synth_shape(ShapeKind::box, 512, 2));
  c.id = 17;
  CorruptionSpec spec;
  spec.background = 0.2;
  spec.hole_radius = 0.25;
  spec.occlusion = 0.3;
  spec.rotate = true;
  const PointCloud a = corrupt(c, spec, 4), b = corrupt(c, spec, 4);
  EXPECT_EQ(a.size(), c.size());
  EXPECT_EQ(a.points, b.points);
  EXPECT_NE(a.points, corrupt(c, spec, 5).points);
}

TEST(Corruption, HoleAndOcclusionRemoveTheirRegion) {
  PointCloud c = normalize_unit_cube(synth_shape(ShapeKind::sphere, 1000, 2));
  CorruptionSpec hole;
  hole.hole_radius = 0.4;
  const CorruptionTrace t = corrupt_traced(c, hole, 9);
  ASSERT_TRUE(t.hole_center);
  for (Vec3 p : t.cloud.points) EXPECT_GE(norm(p - *t.hole_center), 0.4);

  CorruptionSpec occ;
  occ.occlusion = 0.3;
  const CorruptionTrace o = corrupt_traced(c, occ, 9);
  ASSERT_TRUE(o.occlusion_direction);
  for (Vec3 p : o.cloud.points) EXPECT_LE(dot(p, *o.occlusion_direction), 0.3);
}

TEST(Corruption, BackgroundFractionAndLimits) {
  PointCloud c;
  for (int i = 0; i < 100; ++i) c.points.push_back({5.0, 5.0, 5.0});
  CorruptionSpec spec;
  spec.background = 0.2;
  const PointCloud out = corrupt(c, spec, 1);
  const auto moved = std::count_if(out.points.begin(), out.points.end(), [](Vec3 p) { return p.x != 5.0; });
  EXPECT_EQ(moved, 20);
  spec.background = 0.0;
  EXPECT_EQ(corrupt(c, spec, 1).points, c.points);
  spec.background = 1.5;
  EXPECT_THROW(corrupt(c, spec, 1), std::invalid_argument);
  CorruptionSpec all;
  all.hole_radius = 100.0;
  EXPECT_THROW(corrupt(c, all, 1), std::runtime_error);
}

TEST(Corruption, RotationPreservesNorms) {
  const PointCloud c = testing_support::random_cloud(3, 100);
  CorruptionSpec spec;
  spec.rotate = true;
  const PointCloud r = corrupt(c, spec, 2);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(norm(r.points[i]), norm(c.points[i]), 1e-14);
}

TEST(SamplePoints, FixedIgnoresEpochResampledDoesNot) {
  PointCloud c = synth_shape(ShapeKind::cone, 600, 1);
  c.id = 42;
  const auto f0 = sample_points(c, 100, PointStrategy::fixed, 0, 9);
  const auto f5 = sample_points(c, 100, PointStrategy::fixed, 5, 9);
  EXPECT_EQ(f0.points, f5.points);
  const auto r0 = sample_points(c, 100, PointStrategy::resampled, 0, 9);
  const auto r1 = sample_points(c, 100, PointStrategy::resampled, 1, 9);
  EXPECT_NE(r0.points, r1.points);
  EXPECT_EQ(r0.points, sample_points(c, 100, PointStrategy::resampled, 0, 9).points);
  // Without replacement when enough points exist.
  std::set<Vec3> uniq(r0.points.begin(), r0.points.end());
  EXPECT_EQ(uniq.size(), 100u);
}

TEST(SamplePoints, SmallCloudsAndErrors) {
  PointCloud c = synth_shape(ShapeKind::sphere, 10, 1);
  EXPECT_THROW(sample_points(c, 20, PointStrategy::fixed, 0, 1), std::invalid_argument);
  EXPECT_EQ(sample_points(c, 20, PointStrategy::resampled, 0, 1).size(), 20u);
  EXPECT_THROW(sample_points(c, 0, PointStrategy::fixed, 0, 1), std::invalid_argument);
}

TEST(Dataset, SyntheticSplitShapeAndIds) {
  SyntheticDatasetOptions o;
  o.per_class = 3;
  o.points = 64;
  const DatasetSplit tr = make_synthetic_split(o, SplitRole::train, 1);
  const DatasetSplit te = make_synthetic_split(o, SplitRole::test, 1);
  EXPECT_EQ(tr.size(), 24u);
  EXPECT_EQ(tr.num_classes(), 8u);
  std::set<std::uint64_t> ids;
  for (const auto* s : {&tr, &te})
    for (const auto& c : s->clouds) ids.insert(c.id);
  EXPECT_EQ(ids.size(), 48u);
  validate(tr);
  const DatasetSplit again = make_synthetic_split(o, SplitRole::train, 1);
  EXPECT_EQ(again.clouds[5].points, tr.clouds[5].points);
}

TEST(Dataset, StratifiedSubsetCounts) {
  SyntheticDatasetOptions o;
  o.per_class = 8;
  o.points = 16;
  const DatasetSplit tr = make_synthetic_split(o, SplitRole::train, 1);
  const DatasetSplit q = stratified_subset(tr, 0.25, 3);
  EXPECT_EQ(q.size(), 16u);
  std::map<int, int> per;
  for (const auto& c : q.clouds) ++per[*c.label];
  for (auto [_, n] : per) EXPECT_EQ(n, 2);
  EXPECT_EQ(stratified_subset(tr, 1.0, 3).size(), tr.size());
  EXPECT_THROW(stratified_subset(tr, 0.0, 3), std::invalid_argument);
}

TEST(XyzIo, RoundTripIsExact) {
  PointCloud c = testing_support::random_cloud(5, 30);
  std::stringstream ss;
  write_xyz(ss, c);
  const PointCloud back = parse_xyz(ss, "mem");
  EXPECT_EQ(back.points, c.points);
}

TEST(XyzIo, ParseErrorsCarryLineNumbers) {
  std::stringstream ss("# header\n1 2 3\n1 2\n");
  try {
    parse_xyz(ss, "f.xyz");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("f.xyz:3"), std::string::npos);
  }
  std::stringstream nan("1 2 nan\n");
  EXPECT_THROW(parse_xyz(nan, "n"), ParseError);
}

TEST(DatasetIo, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "orthoview_dataset_io";
  std::filesystem::remove_all(dir);
  SyntheticDatasetOptions o;
  o.per_class = 2;
  o.points = 32;
  const DatasetSplit tr = make_synthetic_split(o, SplitRole::train, 4);
  save_dataset(tr, dir);
  const DatasetSplit back = load_dataset(dir, SplitRole::train);
  ASSERT_EQ(back.size(), tr.size());
  EXPECT_EQ(back.class_names, tr.class_names);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    EXPECT_EQ(back.clouds[i].id, tr.clouds[i].id);
    EXPECT_EQ(back.clouds[i].label, tr.clouds[i].label);
    EXPECT_EQ(back.clouds[i].points, tr.clouds[i].points);
  }
  EXPECT_THROW(load_dataset(dir / "missing", SplitRole::train), std::runtime_error);
  std::filesystem::remove_all(dir);
}
