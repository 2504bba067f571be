#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "orthoview/geometry.hpp"
#include "orthoview/projection.hpp"
#include "orthoview/random.hpp"

namespace testing_support {

using namespace orthoview;

// Camera-frame coordinates written out per view: (x, y, depth).
inline Vec3 view_coords(Vec3 p, ViewId v) {
  switch (v) {
    case ViewId::pos_x: return {-p.z, p.y, 1.4 - p.x};
    case ViewId::neg_x: return {p.z, p.y, 1.4 + p.x};
    case ViewId::pos_y: return {-p.x, p.z, 1.4 - p.y};
    case ViewId::neg_y: return {p.x, p.z, 1.4 + p.y};
    case ViewId::pos_z: return {p.x, p.y, 1.4 - p.z};
    case ViewId::neg_z: return {-p.x, p.y, 1.4 + p.z};
  }
  return {};
}

// Smallest i in [1, R] with (t + 1) / 2 * R <= i, by linear search.
inline int reference_pixel(double t, int r) {
  const double u = (t + 1.0) / 2.0 * r;
  int i = 1;
  while (i < r && u > i) ++i;
  return i;
}

// Pixel-by-pixel rasterizer: for every pixel, scan the whole cloud for the
// points landing there, then reduce their depths in ascending order.
inline std::vector<double> reference_rasterize(const PointCloud& cloud, ViewId view, int r, ProjectionMode proj,
                                               DepthMode depth) {
  std::vector<double> img(static_cast<std::size_t>(r) * r, 0.0);
  for (int row = 1; row <= r; ++row)
    for (int col = 1; col <= r; ++col) {
      std::vector<double> zs;
      for (Vec3 p : cloud.points) {
        const Vec3 c = view_coords(p, view);
        if (!(c.z > 0.0)) continue;
        const double x = proj == ProjectionMode::perspective ? c.x / c.z : c.x;
        const double y = proj == ProjectionMode::perspective ? c.y / c.z : c.y;
        if (x < -1.0 || x > 1.0 || y < -1.0 || y > 1.0) continue;
        if (reference_pixel(x, r) == col && reference_pixel(y, r) == row) zs.push_back(c.z);
      }
      if (zs.empty()) continue;
      std::sort(zs.begin(), zs.end());
      double d = zs.front();
      if (depth == DepthMode::weighted_avg) {
        double inv = 0.0;
        for (double z : zs) inv += 1.0 / z;
        d = static_cast<double>(zs.size()) / inv;
      }
      double v = (2.4 - d) / 2.0;
      v = std::min(1.0, std::max(1.0 / 65535.0, v));
      img[static_cast<std::size_t>(row - 1) * r + (col - 1)] = v;
    }
  return img;
}

// n points uniform in [-lo, lo]^3 plus a few well outside the frusta.
inline PointCloud random_cloud(std::uint64_t seed, std::size_t n, double lo = 1.0) {
  RandomStream rng(seed, "test-cloud");
  PointCloud c;
  c.id = seed;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back({rng.uniform(-lo, lo), rng.uniform(-lo, lo), rng.uniform(-lo, lo)});
  c.points.push_back({0.0, 0.0, 3.0});
  c.points.push_back({2.5, -2.5, 0.1});
  return c;
}

}  // namespace testing_support
