#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "orthoview/dataset.hpp"
#include "orthoview/geometry.hpp"

namespace orthoview {

enum class ProjectionMode { perspective, orthographic };
enum class DepthMode { minimum, weighted_avg };
enum class ViewId { pos_x, neg_x, pos_y, neg_y, pos_z, neg_z };

inline std::string_view to_string(ProjectionMode m) {
  return m == ProjectionMode::perspective ? "persp" : "ortho";
}
inline std::string_view to_string(DepthMode m) { return m == DepthMode::minimum ? "min" : "wavg"; }
inline std::string_view to_string(ViewId v) {
  constexpr std::array<std::string_view, 6> names{"+x", "-x", "+y", "-y", "+z", "-z"};
  return names[static_cast<int>(v)];
}

inline ProjectionMode projection_from_string(std::string_view s) {
  if (s == "persp" || s == "perspective") return ProjectionMode::perspective;
  if (s == "ortho" || s == "orthographic") return ProjectionMode::orthographic;
  throw std::invalid_argument("unknown projection: " + std::string(s));
}
inline DepthMode depth_from_string(std::string_view s) {
  if (s == "min" || s == "minimum") return DepthMode::minimum;
  if (s == "wavg" || s == "weighted_avg") return DepthMode::weighted_avg;
  throw std::invalid_argument("unknown depth mode: " + std::string(s));
}

inline constexpr double kCameraDistance = 1.4;
inline constexpr double kFieldOfViewDeg = 90.0;
inline constexpr double kNearDepth = 0.4;
inline constexpr double kFarDepth = 2.4;
// Smallest stored foreground value; keeps every hit pixel strictly above the
// zero background, also after 16-bit quantization.
inline constexpr double kMinForeground = 1.0 / 65535.0;

struct ViewCamera {
  ViewId id = ViewId::pos_z;
  Vec3 position;
  Vec3 forward, up, right;
  double fov_deg = kFieldOfViewDeg;
  ProjectionMode mode = ProjectionMode::perspective;
};

// The camera for the +axis view sits on the +axis and looks toward the origin.
// Each frame satisfies right x up = -forward.
inline ViewCamera make_camera(ViewId id, ProjectionMode mode = ProjectionMode::perspective) {
  ViewCamera cam;
  cam.id = id;
  cam.mode = mode;
  switch (id) {
    case ViewId::pos_x: cam.forward = {-1, 0, 0}, cam.up = {0, 1, 0}, cam.right = {0, 0, -1}; break;
    case ViewId::neg_x: cam.forward = {1, 0, 0}, cam.up = {0, 1, 0}, cam.right = {0, 0, 1}; break;
    case ViewId::pos_y: cam.forward = {0, -1, 0}, cam.up = {0, 0, 1}, cam.right = {-1, 0, 0}; break;
    case ViewId::neg_y: cam.forward = {0, 1, 0}, cam.up = {0, 0, 1}, cam.right = {1, 0, 0}; break;
    case ViewId::pos_z: cam.forward = {0, 0, -1}, cam.up = {0, 1, 0}, cam.right = {1, 0, 0}; break;
    case ViewId::neg_z: cam.forward = {0, 0, 1}, cam.up = {0, 1, 0}, cam.right = {-1, 0, 0}; break;
  }
  cam.position = -kCameraDistance * cam.forward;
  return cam;
}

inline std::vector<ViewCamera> make_cameras(int n_views, ProjectionMode mode = ProjectionMode::perspective) {
  std::vector<ViewId> ids;
  switch (n_views) {
    case 1: ids = {ViewId::pos_z}; break;
    case 3: ids = {ViewId::pos_x, ViewId::pos_y, ViewId::pos_z}; break;
    case 6: ids = {ViewId::pos_x, ViewId::neg_x, ViewId::pos_y, ViewId::neg_y, ViewId::pos_z, ViewId::neg_z}; break;
    default: throw std::invalid_argument("make_cameras: views must be 1, 3 or 6, got " + std::to_string(n_views));
  }
  std::vector<ViewCamera> cams;
  for (ViewId id : ids) cams.push_back(make_camera(id, mode));
  return cams;
}

struct ImagePoint {
  double x = 0.0, y = 0.0;  // normalized image-plane coordinates
  double depth = 0.0;       // distance along the viewing direction
};

inline ImagePoint project_point(Vec3 p, const ViewCamera& cam) {
  const double xc = dot(p, cam.right);
  const double yc = dot(p, cam.up);
  const double z = dot(p - cam.position, cam.forward);
  if (cam.mode == ProjectionMode::orthographic) return {xc, yc, z};
  return {xc / z, yc / z, z};
}

// 1-based pixel index of a normalized image coordinate: ceil((t + 1) / 2 * R)
// clamped to [1, R].
inline int pixel_index(double t, int resolution) {
  const double u = (t + 1.0) * 0.5 * resolution;
  return std::clamp(static_cast<int>(std::ceil(u)), 1, resolution);
}

inline double depth_to_value(double depth) {
  const double v = (kFarDepth - depth) / (kFarDepth - kNearDepth);
  return std::clamp(v, kMinForeground, 1.0);
}

struct DepthImage {
  int resolution = 0;
  std::vector<double> pixels;  // row-major; row grows with image-plane y

  DepthImage() = default;
  explicit DepthImage(int r) : resolution(r), pixels(static_cast<std::size_t>(r) * r, 0.0) {}

  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * resolution + col]; }
  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * resolution + col]; }
  friend bool operator==(const DepthImage&, const DepthImage&) = default;
};

struct DepthImageStack {
  int resolution = 0;
  std::vector<DepthImage> images;
  std::vector<ViewId> view_ids;

  std::size_t views() const { return images.size(); }
  friend bool operator==(const DepthImageStack&, const DepthImageStack&) = default;
};

struct RenderOptions {
  int views = 6;
  int resolution = 32;
  ProjectionMode projection = ProjectionMode::perspective;
  DepthMode depth = DepthMode::weighted_avg;
};

// A point's pixel hit, or nothing when it falls outside the frustum.
struct PixelHit {
  int row = 0, col = 0;  // 0-based
  double depth = 0.0;
};

inline std::optional<PixelHit> locate(Vec3 p, const ViewCamera& cam, int resolution) {
  const ImagePoint ip = project_point(p, cam);
  if (!(ip.depth > 0.0)) return std::nullopt;
  if (std::abs(ip.x) > 1.0 || std::abs(ip.y) > 1.0) return std::nullopt;
  return PixelHit{pixel_index(ip.y, resolution) - 1, pixel_index(ip.x, resolution) - 1, ip.depth};
}

// Per-pixel depth is the minimum hit depth, or the 1/z-weighted mean
// n / sum(1/z). Hits are sorted by (pixel, depth) before reduction, so the
// image does not depend on point order.
inline DepthImage rasterize_view(const PointCloud& cloud, const ViewCamera& cam, int resolution,
                                 DepthMode depth_mode) {
  if (resolution < 4) throw std::invalid_argument("rasterize_view: resolution must be >= 4");
  std::vector<std::pair<int, double>> hits;
  hits.reserve(cloud.size());
  for (Vec3 p : cloud.points)
    if (auto h = locate(p, cam, resolution)) hits.emplace_back(h->row * resolution + h->col, h->depth);
  std::sort(hits.begin(), hits.end());

  DepthImage img(resolution);
  for (std::size_t i = 0; i < hits.size();) {
    const int pixel = hits[i].first;
    std::size_t j = i;
    double inv_sum = 0.0;
    for (; j < hits.size() && hits[j].first == pixel; ++j) inv_sum += 1.0 / hits[j].second;
    const double depth =
        depth_mode == DepthMode::minimum ? hits[i].second : static_cast<double>(j - i) / inv_sum;
    img.pixels[static_cast<std::size_t>(pixel)] = depth_to_value(depth);
    i = j;
  }
  return img;
}

inline DepthImageStack render_multiview(const PointCloud& cloud, const RenderOptions& opt) {
  DepthImageStack stack;
  stack.resolution = opt.resolution;
  for (const ViewCamera& cam : make_cameras(opt.views, opt.projection)) {
    stack.images.push_back(rasterize_view(cloud, cam, opt.resolution, opt.depth));
    stack.view_ids.push_back(cam.id);
  }
  return stack;
}

// ---------------------------------------------------------------------------
// 16-bit binary PGM (P5), value = round(v * 65535). The top image row is the
// largest image-plane y.

inline void write_pgm(std::ostream& out, const DepthImage& img) {
  out << "P5\n" << img.resolution << ' ' << img.resolution << "\n65535\n";
  for (int row = img.resolution - 1; row >= 0; --row)
    for (int col = 0; col < img.resolution; ++col) {
      const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(img.at(row, col), 0.0, 1.0) * 65535.0));
      const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
      out.write(bytes, 2);
    }
}

inline void save_pgm(const DepthImage& img, const std::filesystem::path& path) {
  write_atomically(path, [&](std::ostream& out) { write_pgm(out, img); }, true);
}

// Reads back a 16-bit P5 file as raw counts in storage (top-down) order.
inline std::vector<std::uint16_t> load_pgm16(const std::filesystem::path& path, int* width = nullptr,
                                             int* height = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535 || w <= 0 || h <= 0)
    throw std::runtime_error("not a 16-bit P5 file: " + path.string());
  in.get();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(w) * h);
  for (auto& v : data) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    v = static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  if (!in) throw std::runtime_error("truncated PGM: " + path.string());
  if (width) *width = w;
  if (height) *height = h;
  return data;
}

}  // namespace orthoview
