#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "orthoview/geometry.hpp"
#include "orthoview/nn/layers.hpp"
#include "orthoview/nn/loss.hpp"
#include "orthoview/projection.hpp"

namespace orthoview::nn {

enum class Arch { simpleview, pointnet_lite };
enum class Fusion { concat, pool };

inline std::string_view to_string(Arch a) { return a == Arch::simpleview ? "simpleview" : "pointnet"; }
inline std::string_view to_string(Fusion f) { return f == Fusion::concat ? "concat" : "pool"; }

inline Arch arch_from_string(std::string_view s) {
  if (s == "simpleview") return Arch::simpleview;
  if (s == "pointnet" || s == "pointnet_lite") return Arch::pointnet_lite;
  throw std::invalid_argument("unknown architecture: " + std::string(s));
}
inline Fusion fusion_from_string(std::string_view s) {
  if (s == "concat") return Fusion::concat;
  if (s == "pool") return Fusion::pool;
  throw std::invalid_argument("unknown fusion: " + std::string(s));
}

struct ModelConfig {
  Arch arch = Arch::simpleview;
  std::size_t n_classes = 8;
  // SimpleView
  std::size_t width_divisor = 4;
  RenderOptions render;
  Fusion fusion = Fusion::concat;
  std::size_t head_hidden = 256;
  // PointNet-lite
  std::vector<std::size_t> point_widths{64, 64, 128, 256};
  std::size_t point_head_hidden = 128;

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.arch == b.arch && a.n_classes == b.n_classes && a.width_divisor == b.width_divisor &&
           a.render.views == b.render.views && a.render.resolution == b.render.resolution &&
           a.render.projection == b.render.projection && a.render.depth == b.render.depth && a.fusion == b.fusion &&
           a.head_hidden == b.head_hidden && a.point_widths == b.point_widths &&
           a.point_head_hidden == b.point_head_hidden;
  }
};

// Point-cloud classifier: a batch of clouds in, [B, K] logits out.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Tensor forward(std::span<const PointCloud> clouds, bool training) = 0;
  virtual ParamStore& params() = 0;
  virtual const ParamStore& params() const = 0;
  virtual const ModelConfig& config() const = 0;

  std::size_t parameter_count() const { return params().total_count(); }
};

// Shared-weight CNN over multi-view depth images with concat or max-pool
// feature fusion and a linear-relu-linear head.
class SimpleViewNet final : public Classifier {
 public:
  SimpleViewNet(const ModelConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), backbone_(store_, "backbone", cfg.width_divisor, seed) {
    if (cfg.n_classes < 2) throw std::invalid_argument("SimpleView: need at least 2 classes");
    make_cameras(cfg.render.views);  // validates the view count
    const std::size_t fused =
        cfg.fusion == Fusion::concat ? backbone_.feature_width() * cfg.render.views : backbone_.feature_width();
    fc1_ = Linear(store_, "head.fc1", fused, cfg.head_hidden, seed);
    fc2_ = Linear(store_, "head.fc2", cfg.head_hidden, cfg.n_classes, seed);
  }

  // [B * V, 1, R, R] with the V views of a cloud adjacent.
  Tensor images(std::span<const PointCloud> clouds) const {
    const auto r = static_cast<std::size_t>(cfg_.render.resolution);
    const std::size_t v = cfg_.render.views;
    Tensor img = Tensor::zeros({clouds.size() * v, 1, r, r});
    auto out = img.values();
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      const DepthImageStack stack = render_multiview(clouds[i], cfg_.render);
      for (std::size_t k = 0; k < v; ++k)
        std::copy(stack.images[k].pixels.begin(), stack.images[k].pixels.end(), out.begin() + (i * v + k) * r * r);
    }
    return img;
  }

  Tensor features(const Tensor& images, bool training) const { return backbone_(images, training); }

  // [B * V, F] per-view features -> [B, K] logits.
  Tensor fuse_and_classify(const Tensor& features) const {
    const std::size_t v = cfg_.render.views;
    if (features.rank() != 2 || features.dim(0) % v != 0 || features.dim(1) != backbone_.feature_width())
      throw ShapeError("fuse_and_classify: expected [B * " + std::to_string(v) + ", " +
                       std::to_string(backbone_.feature_width()) + "] features, got " + shape_str(features.shape()));
    const std::size_t b = features.dim(0) / v;
    const Tensor fused = cfg_.fusion == Fusion::concat ? reshape(features, {b, v * features.dim(1)})
                                                       : group_max(features, v);
    return fc2_(relu(fc1_(fused)));
  }

  Tensor forward_images(const Tensor& images, bool training) const {
    return fuse_and_classify(features(images, training));
  }

  Tensor forward(std::span<const PointCloud> clouds, bool training) override {
    return forward_images(images(clouds), training);
  }

  ParamStore& params() override { return store_; }
  const ParamStore& params() const override { return store_; }
  const ModelConfig& config() const override { return cfg_; }
  const ResNet18q& backbone() const { return backbone_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  ResNet18q backbone_;
  Linear fc1_, fc2_;
};

// Shared per-point MLP with batchnorm + relu, global max pool over points,
// linear-relu-linear head. No input or feature transform networks.
class PointNetLite final : public Classifier {
 public:
  PointNetLite(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.n_classes < 2) throw std::invalid_argument("PointNetLite: need at least 2 classes");
    if (cfg.point_widths.empty()) throw std::invalid_argument("PointNetLite: need at least one point layer");
    std::size_t in = 3;
    for (std::size_t i = 0; i < cfg.point_widths.size(); ++i) {
      const std::string name = "point.mlp" + std::to_string(i);
      layers_.push_back(Linear(store_, name + ".fc", in, cfg.point_widths[i], seed));
      norms_.push_back(BatchNorm(store_, name + ".bn", cfg.point_widths[i]));
      in = cfg.point_widths[i];
    }
    fc1_ = Linear(store_, "head.fc1", in, cfg.point_head_hidden, seed);
    fc2_ = Linear(store_, "head.fc2", cfg.point_head_hidden, cfg.n_classes, seed);
  }

  // [B * N, 3]; every cloud must have the same number of points.
  static Tensor points(std::span<const PointCloud> clouds) {
    if (clouds.empty()) throw ShapeError("PointNetLite: empty batch");
    const std::size_t n = clouds.front().size();
    if (n == 0) throw ShapeError("PointNetLite: cloud without points");
    Tensor t = Tensor::zeros({clouds.size() * n, 3});
    auto v = t.values();
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      if (clouds[i].size() != n) throw ShapeError("PointNetLite: clouds in a batch must have equal point counts");
      for (std::size_t p = 0; p < n; ++p)
        for (int a = 0; a < 3; ++a) v[(i * n + p) * 3 + static_cast<std::size_t>(a)] = clouds[i].points[p][a];
    }
    return t;
  }

  Tensor forward_points(const Tensor& pts, std::size_t points_per_cloud, bool training) const {
    Tensor h = pts;
    for (std::size_t i = 0; i < layers_.size(); ++i) h = relu(norms_[i](layers_[i](h), training));
    return fc2_(relu(fc1_(group_max(h, points_per_cloud))));
  }

  Tensor forward(std::span<const PointCloud> clouds, bool training) override {
    return forward_points(points(clouds), clouds.front().size(), training);
  }

  ParamStore& params() override { return store_; }
  const ParamStore& params() const override { return store_; }
  const ModelConfig& config() const override { return cfg_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::vector<Linear> layers_;
  std::vector<BatchNorm> norms_;
  Linear fc1_, fc2_;
};

inline std::unique_ptr<Classifier> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.arch == Arch::simpleview) return std::make_unique<SimpleViewNet>(cfg, seed);
  return std::make_unique<PointNetLite>(cfg, seed);
}

// Class probabilities for each cloud, inference mode.
inline std::vector<std::vector<double>> predict_proba(Classifier& model, std::span<const PointCloud> clouds) {
  NoGradGuard guard;
  const Tensor logits = model.forward(clouds, false);
  const std::size_t k = logits.dim(1);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < logits.dim(0); ++i) out.push_back(softmax(logits.values().subspan(i * k, k)));
  return out;
}

// Index of the largest entry; ties go to the lowest index.
inline int argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

}  // namespace orthoview::nn
