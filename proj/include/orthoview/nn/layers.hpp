#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthoview/nn/ops.hpp"
#include "orthoview/random.hpp"

namespace orthoview::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Named snapshot of every parameter and buffer value.
using StateDict = std::map<std::string, std::vector<double>>;

// Registry of a model's learnable parameters and non-learnable buffers
// (batchnorm running statistics). Names are unique across both.
class ParamStore {
 public:
  Tensor add_param(const std::string& name, Tensor t) {
    claim(name);
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  }

  Tensor add_buffer(const std::string& name, Tensor t) {
    claim(name);
    t.set_requires_grad(false);
    buffers_.push_back({name, t});
    return t;
  }

  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  StateDict state() const {
    StateDict s;
    for (const auto* group : {&params_, &buffers_})
      for (const auto& e : *group) s[e.name] = std::vector<double>(e.tensor.values().begin(), e.tensor.values().end());
    return s;
  }

  void load_state(const StateDict& s) {
    for (auto* group : {&params_, &buffers_})
      for (auto& e : *group) {
        auto it = s.find(e.name);
        if (it == s.end()) throw std::runtime_error("state is missing entry " + e.name);
        if (it->second.size() != e.tensor.numel())
          throw std::runtime_error("state entry " + e.name + " has " + std::to_string(it->second.size()) +
                                   " values, expected " + std::to_string(e.tensor.numel()));
        std::copy(it->second.begin(), it->second.end(), e.tensor.values().begin());
      }
    if (s.size() != params_.size() + buffers_.size()) throw std::runtime_error("state has unexpected entries");
  }

 private:
  void claim(const std::string& name) {
    if (!names_.insert(name).second) throw std::invalid_argument("duplicate parameter name " + name);
  }

  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
  std::set<std::string> names_;
};

inline std::size_t count_params(const ParamStore& store) { return store.total_count(); }

// He-normal weights, N(0, 2 / fan_in), drawn from a stream named after the
// parameter.
inline Tensor he_normal(Shape shape, std::size_t fan_in, std::uint64_t seed, const std::string& name) {
  Tensor t = Tensor::zeros(std::move(shape));
  RandomStream rng(seed, name);
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.normal(0.0, sd);
  return t;
}

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
         std::size_t stride, std::size_t pad, bool bias, std::uint64_t seed)
      : stride_(stride), pad_(pad) {
    weight_ = store.add_param(name + ".weight", he_normal({out, in, k, k}, in * k * k, seed, name + ".weight"));
    if (bias) bias_ = store.add_param(name + ".bias", Tensor::zeros({out}));
  }

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }

  const Tensor& weight() const { return weight_; }

 private:
  Tensor weight_, bias_;
  std::size_t stride_ = 1, pad_ = 0;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParamStore& store, const std::string& name, std::size_t channels, double momentum = 0.1)
      : momentum_(momentum) {
    gamma_ = store.add_param(name + ".gamma", Tensor::from({channels}, std::vector<double>(channels, 1.0)));
    beta_ = store.add_param(name + ".beta", Tensor::zeros({channels}));
    mean_ = store.add_buffer(name + ".running_mean", Tensor::zeros({channels}));
    var_ = store.add_buffer(name + ".running_var", Tensor::from({channels}, std::vector<double>(channels, 1.0)));
  }

  Tensor operator()(const Tensor& x, bool training) const {
    Tensor mean = mean_, var = var_;
    return batch_norm(x, gamma_, beta_, mean.values(), var.values(), training, momentum_);
  }

 private:
  Tensor gamma_, beta_, mean_, var_;
  double momentum_ = 0.1;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
    weight_ = store.add_param(name + ".weight", he_normal({out, in}, in, seed, name + ".weight"));
    bias_ = store.add_param(name + ".bias", Tensor::zeros({out}));
  }

  Tensor operator()(const Tensor& x) const { return linear(x, weight_, bias_); }

 private:
  Tensor weight_, bias_;
};

// Two 3x3 conv-bn stages with an identity or 1x1-projection shortcut.
class BasicBlock {
 public:
  BasicBlock(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t stride,
             std::uint64_t seed)
      : conv1_(store, name + ".conv1", in, out, 3, stride, 1, false, seed),
        bn1_(store, name + ".bn1", out),
        conv2_(store, name + ".conv2", out, out, 3, 1, 1, false, seed),
        bn2_(store, name + ".bn2", out) {
    if (stride != 1 || in != out) {
      down_conv_.emplace(store, name + ".down.conv", in, out, 1, stride, 0, false, seed);
      down_bn_.emplace(store, name + ".down.bn", out);
    }
  }

  Tensor operator()(const Tensor& x, bool training) const {
    Tensor h = relu(bn1_(conv1_(x), training));
    h = bn2_(conv2_(h), training);
    const Tensor shortcut = down_conv_ ? (*down_bn_)((*down_conv_)(x), training) : x;
    return relu(add(h, shortcut));
  }

 private:
  Conv2d conv1_;
  BatchNorm bn1_;
  Conv2d conv2_;
  BatchNorm bn2_;
  std::optional<Conv2d> down_conv_;
  std::optional<BatchNorm> down_bn_;
};

// ResNet18 with every channel count divided by `width_divisor`:
// 7x7/2 stem, 3x3/2 max-pool, four stages of two basic blocks, global
// average pool. Input [N, 1, R, R], output [N, 512 / width_divisor].
class ResNet18q {
 public:
  static constexpr std::array<std::size_t, 4> kBaseWidths{64, 128, 256, 512};

  ResNet18q(ParamStore& store, const std::string& name, std::size_t width_divisor, std::uint64_t seed) {
    if (width_divisor == 0 || kBaseWidths[0] / width_divisor == 0)
      throw std::invalid_argument("ResNet18q: width divisor " + std::to_string(width_divisor) +
                                  " leaves a stage with zero channels");
    std::array<std::size_t, 4> w{};
    for (std::size_t i = 0; i < 4; ++i) w[i] = kBaseWidths[i] / width_divisor;
    stem_ = Conv2d(store, name + ".stem.conv", 1, w[0], 7, 2, 3, false, seed);
    stem_bn_ = BatchNorm(store, name + ".stem.bn", w[0]);
    std::size_t in = w[0];
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t b = 0; b < 2; ++b) {
        const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
        blocks_.emplace_back(store, name + ".layer" + std::to_string(s + 1) + "." + std::to_string(b), in, w[s],
                             stride, seed);
        in = w[s];
      }
    feature_width_ = w[3];
  }

  Tensor operator()(const Tensor& images, bool training) const {
    if (images.rank() != 4 || images.dim(1) != 1)
      throw ShapeError("ResNet18q: expected [N, 1, R, R] images, got " + shape_str(images.shape()));
    if (images.dim(2) < 16 || images.dim(3) < 16) throw ShapeError("ResNet18q: resolution must be at least 16");
    Tensor h = relu(stem_bn_(stem_(images), training));
    h = max_pool2d(h, 3, 2, 1);
    for (const auto& block : blocks_) h = block(h, training);
    return global_avg_pool(h);
  }

  std::size_t feature_width() const { return feature_width_; }

 private:
  Conv2d stem_;
  BatchNorm stem_bn_;
  std::vector<BasicBlock> blocks_;
  std::size_t feature_width_ = 0;
};

}  // namespace orthoview::nn
