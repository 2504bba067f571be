#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "orthoview/nn/layers.hpp"

namespace orthoview::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;  // one moment pair per parameter tensor
};

// Bias-corrected Adam update of every parameter in `store` from its grad.
inline void adam_step(ParamStore& store, AdamState& state, const AdamOptions& opt) {
  const auto& params = store.params();
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::logic_error("adam_step: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor w = params[i].tensor;
    if (!w.has_grad()) continue;
    auto val = w.values();
    auto grad = w.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double g = grad[j] + opt.weight_decay * val[j];
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g;
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      val[j] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

struct PlateauOptions {
  double factor = 0.5;
  std::size_t patience = 10;
  double min_lr = 1e-5;
  bool maximize = true;  // monitored metric is an accuracy
};

// Multiplies the learning rate by `factor` once `patience` consecutive
// evaluations fail to beat the best value seen so far. The first evaluation
// only sets the baseline.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, PlateauOptions opt = {}) : lr_(lr), opt_(opt) {}

  double step(double metric) {
    const bool improved = !seen_ || (opt_.maximize ? metric > best_ : metric < best_);
    if (improved) {
      best_ = metric;
      seen_ = true;
      bad_ = 0;
      return lr_;
    }
    if (++bad_ >= opt_.patience) {
      lr_ = std::max(lr_ * opt_.factor, opt_.min_lr);
      bad_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }
  std::size_t bad_evaluations() const { return bad_; }
  double best() const { return best_; }
  const PlateauOptions& options() const { return opt_; }

 private:
  double lr_;
  PlateauOptions opt_;
  double best_ = 0.0;
  bool seen_ = false;
  std::size_t bad_ = 0;
};

}  // namespace orthoview::nn
