#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "orthoview/random.hpp"

namespace orthoview {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
  friend constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  friend constexpr bool operator==(Vec3, Vec3) = default;
  friend constexpr auto operator<=>(Vec3 a, Vec3 b) {
    return std::array{a.x, a.y, a.z} <=> std::array{b.x, b.y, b.z};
  }
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

struct PointCloud {
  std::vector<Vec3> points;
  std::optional<int> label;
  // Stable object identifier; keys the per-object random streams.
  std::uint64_t id = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

inline bool all_finite(const PointCloud& cloud) {
  return std::all_of(cloud.points.begin(), cloud.points.end(), [](Vec3 p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
  });
}

inline Vec3 centroid(const PointCloud& cloud) {
  Vec3 c;
  for (Vec3 p : cloud.points) c = c + p;
  return c / static_cast<double>(cloud.size());
}

// ---------------------------------------------------------------------------
// Normalization

struct UnitCubeFit {
  PointCloud cloud;
  Vec3 center;
  double scale = 1.0;
  // All points identical: the cloud is centered but left unscaled.
  bool degenerate = false;
};

// Centers on the per-axis mean and divides by the largest absolute centered
// coordinate, so the result lies in [-1, 1]^3 and touches the boundary.
inline UnitCubeFit fit_unit_cube(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("normalize_unit_cube: empty cloud");
  if (!all_finite(cloud)) throw std::invalid_argument("normalize_unit_cube: non-finite coordinate");
  UnitCubeFit fit;
  fit.center = centroid(cloud);
  fit.cloud = cloud;
  double s = 0.0;
  for (Vec3& p : fit.cloud.points) {
    p = p - fit.center;
    s = std::max({s, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
  }
  if (s == 0.0) {
    fit.degenerate = true;
    return fit;
  }
  fit.scale = s;
  for (Vec3& p : fit.cloud.points) p = p / s;
  return fit;
}

inline PointCloud normalize_unit_cube(const PointCloud& cloud) { return fit_unit_cube(cloud).cloud; }

// ---------------------------------------------------------------------------
// Rotations

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Vec3 apply(const Mat3& m, Vec3 p) {
  return {m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
          m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
          m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z};
}

// Rodrigues rotation about a unit axis.
inline Mat3 axis_angle(Vec3 axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double x = axis.x, y = axis.y, z = axis.z;
  return Mat3{{{t * x * x + c, t * x * y - s * z, t * x * z + s * y},
               {t * x * y + s * z, t * y * y + c, t * y * z - s * x},
               {t * x * z - s * y, t * y * z + s * x, t * z * z + c}}};
}

inline Vec3 random_unit_vector(RandomStream& rng) {
  for (;;) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    if (n > 1e-12) return v / n;
  }
}

// Uniform axis on the sphere, angle uniform in [0, 2pi).
inline Mat3 random_rotation(RandomStream& rng) {
  const Vec3 axis = random_unit_vector(rng);
  return axis_angle(axis, rng.uniform(0.0, 2.0 * std::numbers::pi));
}

inline PointCloud transformed(const PointCloud& cloud, const Mat3& m) {
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = apply(m, p);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class ShapeKind { sphere, box, cylinder, cone, torus, plane, capsule, ellipsoid };

inline constexpr std::array<ShapeKind, 8> kAllShapes{
    ShapeKind::sphere, ShapeKind::box,   ShapeKind::cylinder, ShapeKind::cone,
    ShapeKind::torus,  ShapeKind::plane, ShapeKind::capsule,  ShapeKind::ellipsoid};

inline std::string_view to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::cone: return "cone";
    case ShapeKind::torus: return "torus";
    case ShapeKind::plane: return "plane";
    case ShapeKind::capsule: return "capsule";
    case ShapeKind::ellipsoid: return "ellipsoid";
  }
  return "?";
}

inline ShapeKind shape_from_string(std::string_view s) {
  for (ShapeKind k : kAllShapes)
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown shape kind: " + std::string(s));
}

// Per-kind meaning of dims:
//   sphere: radius | box: x, y, z extents | cylinder, cone: radius, height
//   torus: major, minor radius | plane: x, y extents | capsule: radius, body length
//   ellipsoid: x, y, z semi-axes
// Axial shapes are aligned with z; the torus and plane lie in the xy plane.
struct ShapeParams {
  std::array<double, 3> dims{1.0, 1.0, 1.0};
};

inline int shape_dim_count(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return 1;
    case ShapeKind::box:
    case ShapeKind::ellipsoid: return 3;
    default: return 2;
  }
}

inline ShapeParams default_shape_params(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return {{1.0, 0.0, 0.0}};
    case ShapeKind::box: return {{1.0, 0.7, 0.5}};
    case ShapeKind::cylinder: return {{0.5, 1.5, 0.0}};
    case ShapeKind::cone: return {{0.6, 1.4, 0.0}};
    case ShapeKind::torus: return {{1.0, 0.25, 0.0}};
    case ShapeKind::plane: return {{1.0, 0.6, 0.0}};
    case ShapeKind::capsule: return {{0.4, 1.2, 0.0}};
    case ShapeKind::ellipsoid: return {{1.0, 0.6, 0.4}};
  }
  return {};
}

namespace detail {

inline Vec3 sample_sphere(RandomStream& rng, double r) { return r * random_unit_vector(rng); }

inline Vec3 sample_box(RandomStream& rng, const std::array<double, 3>& e) {
  const std::array<double, 3> area{e[1] * e[2], e[0] * e[2], e[0] * e[1]};
  const double u = rng.uniform() * (area[0] + area[1] + area[2]);
  const int axis = u < area[0] ? 0 : (u < area[0] + area[1] ? 1 : 2);
  Vec3 p;
  for (int i = 0; i < 3; ++i) p[i] = rng.uniform(-0.5, 0.5) * e[i];
  p[axis] = (rng.uniform() < 0.5 ? -0.5 : 0.5) * e[axis];
  return p;
}

inline Vec3 disk_point(RandomStream& rng, double r, double z) {
  const double rho = r * std::sqrt(rng.uniform());
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return {rho * std::cos(phi), rho * std::sin(phi), z};
}

inline Vec3 sample_cylinder(RandomStream& rng, double r, double h) {
  const double lateral = 2.0 * std::numbers::pi * r * h;
  const double cap = std::numbers::pi * r * r;
  const double u = rng.uniform() * (lateral + 2.0 * cap);
  if (u < lateral) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return {r * std::cos(phi), r * std::sin(phi), rng.uniform(-0.5, 0.5) * h};
  }
  return disk_point(rng, r, u < lateral + cap ? -0.5 * h : 0.5 * h);
}

// Apex at +h/2, base disk at -h/2.
inline Vec3 sample_cone(RandomStream& rng, double r, double h) {
  const double lateral = std::numbers::pi * r * std::hypot(r, h);
  const double base = std::numbers::pi * r * r;
  if (rng.uniform() * (lateral + base) < base) return disk_point(rng, r, -0.5 * h);
  const double t = std::sqrt(rng.uniform());  // distance fraction from apex
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return {t * r * std::cos(phi), t * r * std::sin(phi), 0.5 * h - t * h};
}

inline Vec3 sample_torus(RandomStream& rng, double major, double minor) {
  // Area element is proportional to (major + minor cos(theta)).
  for (;;) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double w = (major + minor * std::cos(theta)) / (major + minor);
    if (rng.uniform() >= w) continue;
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ring = major + minor * std::cos(theta);
    return {ring * std::cos(phi), ring * std::sin(phi), minor * std::sin(theta)};
  }
}

inline Vec3 sample_plane(RandomStream& rng, double wx, double wy) {
  return {rng.uniform(-0.5, 0.5) * wx, rng.uniform(-0.5, 0.5) * wy, 0.0};
}

inline Vec3 sample_capsule(RandomStream& rng, double r, double length) {
  const double body = 2.0 * std::numbers::pi * r * length;
  const double caps = 4.0 * std::numbers::pi * r * r;
  if (rng.uniform() * (body + caps) < body) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return {r * std::cos(phi), r * std::sin(phi), rng.uniform(-0.5, 0.5) * length};
  }
  Vec3 p = sample_sphere(rng, r);
  p.z += (p.z >= 0.0 ? 0.5 : -0.5) * length;
  return p;
}

inline Vec3 sample_ellipsoid(RandomStream& rng, const std::array<double, 3>& a) {
  // Rejection on the sphere, weighted by the local area stretch of the map.
  const double bound = std::max({a[1] * a[2], a[0] * a[2], a[0] * a[1]});
  for (;;) {
    const Vec3 u = random_unit_vector(rng);
    const double stretch = std::sqrt(std::pow(a[1] * a[2] * u.x, 2) + std::pow(a[0] * a[2] * u.y, 2) +
                                     std::pow(a[0] * a[1] * u.z, 2));
    if (rng.uniform() * bound < stretch) return {a[0] * u.x, a[1] * u.y, a[2] * u.z};
  }
}

}  // namespace detail

// Samples `n_points` uniformly by surface area; label = class index of `kind`.
inline PointCloud synth_shape(ShapeKind kind, std::size_t n_points, std::uint64_t seed,
                              const ShapeParams& params) {
  if (n_points < 8) throw std::invalid_argument("synth_shape: n_points must be >= 8");
  const auto& d = params.dims;
  for (int i = 0; i < shape_dim_count(kind); ++i)
    if (!(d[i] > 0.0) || !std::isfinite(d[i]))
      throw std::invalid_argument("synth_shape: non-positive dimension for " + std::string(to_string(kind)));
  if (kind == ShapeKind::torus && d[1] >= d[0])
    throw std::invalid_argument("synth_shape: torus minor radius must be below major radius");

  RandomStream rng(seed, "synth_shape", static_cast<std::uint64_t>(kind));
  PointCloud cloud;
  cloud.points.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    Vec3 p;
    switch (kind) {
      case ShapeKind::sphere: p = detail::sample_sphere(rng, d[0]); break;
      case ShapeKind::box: p = detail::sample_box(rng, d); break;
      case ShapeKind::cylinder: p = detail::sample_cylinder(rng, d[0], d[1]); break;
      case ShapeKind::cone: p = detail::sample_cone(rng, d[0], d[1]); break;
      case ShapeKind::torus: p = detail::sample_torus(rng, d[0], d[1]); break;
      case ShapeKind::plane: p = detail::sample_plane(rng, d[0], d[1]); break;
      case ShapeKind::capsule: p = detail::sample_capsule(rng, d[0], d[1]); break;
      case ShapeKind::ellipsoid: p = detail::sample_ellipsoid(rng, d); break;
    }
    cloud.points.push_back(p);
  }
  cloud.label = static_cast<int>(kind);
  return cloud;
}

inline PointCloud synth_shape(ShapeKind kind, std::size_t n_points, std::uint64_t seed) {
  return synth_shape(kind, n_points, seed, default_shape_params(kind));
}

// ---------------------------------------------------------------------------
// Corruption

struct CorruptionSpec {
  std::optional<double> background;   // fraction of points replaced by U[-1,1]^3
  std::optional<double> hole_radius;  // ball around a random cloud point is removed
  std::optional<double> occlusion;    // points with p.d > tau are removed
  bool rotate = false;                // random rotation about a random axis

  static constexpr double kDefaultBackground = 0.2;
  static constexpr double kDefaultHoleRadius = 0.25;
  static constexpr double kDefaultOcclusion = 0.3;

  bool empty() const { return !background && !hole_radius && !occlusion && !rotate; }
};

struct CorruptionTrace {
  PointCloud cloud;
  std::optional<Vec3> hole_center;
  std::optional<Vec3> occlusion_direction;
};

namespace detail {

// Restores `n` points by appending uniformly chosen survivors.
inline void refill(std::vector<Vec3>& pts, std::size_t n, RandomStream& rng, const char* what) {
  if (pts.empty()) throw std::runtime_error(std::string("corrupt: ") + what + " removed every point");
  const std::size_t survivors = pts.size();
  while (pts.size() < n) pts.push_back(pts[rng.index(survivors)]);
}

}  // namespace detail

// Applied in the order occlusion, hole, background, rotation. The output has
// exactly as many points as the input.
inline CorruptionTrace corrupt_traced(const PointCloud& cloud, const CorruptionSpec& spec,
                                      std::uint64_t seed) {
  if (cloud.empty()) throw std::invalid_argument("corrupt: empty cloud");
  if (spec.background && !(*spec.background >= 0.0 && *spec.background <= 1.0))
    throw std::invalid_argument("corrupt: background fraction must lie in [0, 1]");
  if (spec.hole_radius && !(*spec.hole_radius >= 0.0))
    throw std::invalid_argument("corrupt: hole radius must be >= 0");

  CorruptionTrace out;
  out.cloud = cloud;
  if (spec.empty()) return out;

  const std::size_t n = cloud.size();
  RandomStream rng(seed, "corrupt", cloud.id);
  auto& pts = out.cloud.points;

  if (spec.occlusion) {
    const Vec3 d = random_unit_vector(rng);
    out.occlusion_direction = d;
    std::erase_if(pts, [&](Vec3 p) { return dot(p, d) > *spec.occlusion; });
    detail::refill(pts, n, rng, "occlusion");
  }
  if (spec.hole_radius) {
    const Vec3 c = pts[rng.index(pts.size())];
    out.hole_center = c;
    const double r = *spec.hole_radius;
    std::erase_if(pts, [&](Vec3 p) { return norm(p - c) < r; });
    detail::refill(pts, n, rng, "hole");
  }
  if (spec.background) {
    const auto k = static_cast<std::size_t>(std::llround(*spec.background * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < k; ++i)
      pts[order[i]] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  }
  if (spec.rotate) {
    const Mat3 m = random_rotation(rng);
    for (Vec3& p : pts) p = apply(m, p);
  }
  return out;
}

inline PointCloud corrupt(const PointCloud& cloud, const CorruptionSpec& spec, std::uint64_t seed) {
  return corrupt_traced(cloud, spec, seed).cloud;
}

// ---------------------------------------------------------------------------
// Point sampling

enum class PointStrategy { fixed, resampled };

inline std::string_view to_string(PointStrategy s) {
  return s == PointStrategy::fixed ? "fixed" : "resampled";
}

inline PointStrategy point_strategy_from_string(std::string_view s) {
  if (s == "fixed") return PointStrategy::fixed;
  if (s == "resampled") return PointStrategy::resampled;
  throw std::invalid_argument("unknown point strategy: " + std::string(s));
}

// fixed: the first n points of a per-object permutation that never changes.
// resampled: a fresh draw per (seed, object, epoch); with replacement when the
// cloud has fewer than n points.
inline PointCloud sample_points(const PointCloud& cloud, std::size_t n, PointStrategy strategy,
                                std::uint64_t epoch, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_points: n must be positive");
  if (cloud.empty()) throw std::invalid_argument("sample_points: empty cloud");
  const std::size_t total = cloud.size();
  PointCloud out;
  out.label = cloud.label;
  out.id = cloud.id;
  out.points.reserve(n);

  if (strategy == PointStrategy::fixed) {
    if (total < n)
      throw std::invalid_argument("sample_points: fixed strategy needs at least n points");
    RandomStream rng(seed, "fixed-points", cloud.id);
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) out.points.push_back(cloud.points[order[i]]);
    return out;
  }

  RandomStream rng(seed, "resampled-points", cloud.id, epoch);
  if (total < n) {
    for (std::size_t i = 0; i < n; ++i) out.points.push_back(cloud.points[rng.index(total)]);
    return out;
  }
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.index(total - i);
    std::swap(order[i], order[j]);
    out.points.push_back(cloud.points[order[i]]);
  }
  return out;
}

}  // namespace orthoview
