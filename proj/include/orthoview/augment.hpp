#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include "orthoview/geometry.hpp"

namespace orthoview {

struct JitterOptions {
  bool enabled = false;
  double sigma = 0.01;
  double clip = 0.05;
};

struct ScaleOptions {
  bool enabled = false;
  double lo = 0.8;
  double hi = 1.25;
};

struct TranslateOptions {
  bool enabled = false;
  double range = 0.1;
};

// Augmentations run in the fixed order: rotation, scale, translate, jitter.
// `rotate_any` (uniform axis, then refit to the unit cube) is off in every
// named preset; it exists for the rotated-test robustness experiments.
struct AugmentSpec {
  JitterOptions jitter;
  bool rotate_y = false;
  bool rotate_any = false;
  ScaleOptions scale;
  TranslateOptions translate;

  static constexpr std::string_view kOrder = "rotate,scale,translate,jitter";

  friend bool operator==(const AugmentSpec& a, const AugmentSpec& b) {
    return a.jitter.enabled == b.jitter.enabled && a.jitter.sigma == b.jitter.sigma &&
           a.jitter.clip == b.jitter.clip && a.rotate_y == b.rotate_y && a.rotate_any == b.rotate_any &&
           a.scale.enabled == b.scale.enabled && a.scale.lo == b.scale.lo && a.scale.hi == b.scale.hi &&
           a.translate.enabled == b.translate.enabled && a.translate.range == b.translate.range;
  }
};

inline void validate(const AugmentSpec& s) {
  if (!(s.jitter.sigma >= 0.0)) throw std::invalid_argument("augment: jitter sigma must be >= 0");
  if (!(s.jitter.clip >= 0.0)) throw std::invalid_argument("augment: jitter clip must be >= 0");
  if (!(s.scale.lo > 0.0 && s.scale.lo <= s.scale.hi))
    throw std::invalid_argument("augment: scale range needs 0 < lo <= hi");
  if (!(s.translate.range >= 0.0)) throw std::invalid_argument("augment: translate range must be >= 0");
}

// Gaussian noise per coordinate, truncated to [-clip, clip].
inline PointCloud jitter(const PointCloud& cloud, double sigma, double clip, RandomStream& rng) {
  if (clip < 0.0) throw std::invalid_argument("jitter: clip must be >= 0");
  if (sigma < 0.0) throw std::invalid_argument("jitter: sigma must be >= 0");
  PointCloud out = cloud;
  if (sigma == 0.0) return out;
  for (Vec3& p : out.points)
    for (int axis = 0; axis < 3; ++axis) p[axis] += std::clamp(rng.normal(0.0, sigma), -clip, clip);
  return out;
}

inline PointCloud jitter(const PointCloud& cloud, double sigma, double clip, std::uint64_t seed) {
  RandomStream rng(seed, "jitter", cloud.id);
  return jitter(cloud, sigma, clip, rng);
}

inline PointCloud rotate_y(const PointCloud& cloud, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = {p.x * c + p.z * s, p.y, -p.x * s + p.z * c};
  return out;
}

inline PointCloud random_rotate_y(const PointCloud& cloud, RandomStream& rng) {
  return rotate_y(cloud, rng.uniform(0.0, 2.0 * std::numbers::pi));
}

inline PointCloud random_scale(const PointCloud& cloud, double lo, double hi, RandomStream& rng) {
  if (!(lo > 0.0 && lo <= hi)) throw std::invalid_argument("random_scale: need 0 < lo <= hi");
  const double s = lo == hi ? lo : rng.uniform(lo, hi);
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = s * p;
  return out;
}

inline PointCloud random_scale(const PointCloud& cloud, double lo, double hi, std::uint64_t seed) {
  RandomStream rng(seed, "scale", cloud.id);
  return random_scale(cloud, lo, hi, rng);
}

inline PointCloud random_translate(const PointCloud& cloud, double range, RandomStream& rng) {
  if (range < 0.0) throw std::invalid_argument("random_translate: range must be >= 0");
  PointCloud out = cloud;
  if (range == 0.0) return out;
  const Vec3 t{rng.uniform(-range, range), rng.uniform(-range, range), rng.uniform(-range, range)};
  for (Vec3& p : out.points) p = p + t;
  return out;
}

inline PointCloud random_translate(const PointCloud& cloud, double range, std::uint64_t seed) {
  RandomStream rng(seed, "translate", cloud.id);
  return random_translate(cloud, range, rng);
}

// Applies every enabled augmentation; the stream is keyed per (seed, object, epoch).
inline PointCloud augment(const PointCloud& cloud, const AugmentSpec& spec, std::uint64_t seed,
                          std::uint64_t epoch) {
  RandomStream rng(seed, "augment", cloud.id, epoch);
  PointCloud out = cloud;
  if (spec.rotate_any) out = normalize_unit_cube(transformed(out, random_rotation(rng)));
  if (spec.rotate_y) out = random_rotate_y(out, rng);
  if (spec.scale.enabled) out = random_scale(out, spec.scale.lo, spec.scale.hi, rng);
  if (spec.translate.enabled) out = random_translate(out, spec.translate.range, rng);
  if (spec.jitter.enabled) out = jitter(out, spec.jitter.sigma, spec.jitter.clip, rng);
  return out;
}

enum class ProtocolId { pointnet2, dgcnn, rscnn, simpleview };

inline std::string_view to_string(ProtocolId p) {
  switch (p) {
    case ProtocolId::pointnet2: return "pointnet2";
    case ProtocolId::dgcnn: return "dgcnn";
    case ProtocolId::rscnn: return "rscnn";
    case ProtocolId::simpleview: return "simpleview";
  }
  return "?";
}

inline ProtocolId protocol_from_string(std::string_view s) {
  for (ProtocolId p : {ProtocolId::pointnet2, ProtocolId::dgcnn, ProtocolId::rscnn, ProtocolId::simpleview})
    if (to_string(p) == s) return p;
  throw std::invalid_argument("unknown protocol: " + std::string(s));
}

// PointNet++ uses jitter, y-rotation, scaling and translation; the others use
// only scaling and translation.
inline AugmentSpec augment_preset(ProtocolId protocol) {
  AugmentSpec spec;
  spec.scale.enabled = true;
  spec.translate.enabled = true;
  if (protocol == ProtocolId::pointnet2) {
    spec.jitter.enabled = true;
    spec.rotate_y = true;
  }
  return spec;
}

}  // namespace orthoview
