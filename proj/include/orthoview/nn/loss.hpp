#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "orthoview/nn/tensor.hpp"

namespace orthoview::nn {

// log softmax of one row, stabilized by subtracting the maximum.
inline void log_softmax_row(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= s;
  return p;
}

// Mean over the batch of -sum_k t_k log softmax(logits)_k with the smoothed
// target t = (1 - eps) onehot(label) + eps / K. eps = 0 is plain cross-entropy.
inline Tensor smooth_loss(const Tensor& logits, std::span<const int> labels, double eps) {
  if (logits.rank() != 2) throw ShapeError("smooth_loss: expected [B, K] logits, got " + shape_str(logits.shape()));
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) throw ShapeError("smooth_loss: label count does not match batch");
  if (!(eps >= 0.0 && eps < 1.0)) throw std::invalid_argument("smooth_loss: eps must lie in [0, 1)");
  for (double v : logits.values())
    if (!std::isfinite(v)) throw std::domain_error("smooth_loss: non-finite logit");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= k) throw std::invalid_argument("smooth_loss: label out of range");

  Tensor out = make_result({1}, {logits});
  auto logp = std::make_shared<std::vector<double>>(b * k);
  const auto lv = logits.values();
  const double off = eps / static_cast<double>(k);
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    std::span<double> lp(logp->data() + r * k, k);
    log_softmax_row(lv.subspan(r * k, k), lp);
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double t = off + (static_cast<int>(j) == labels[r] ? 1.0 - eps : 0.0);
      row -= t * lp[j];
    }
    total += row;
  }
  out.values()[0] = total / static_cast<double>(b);

  if (out.requires_grad()) {
    Node *on = out.node(), *ln = logits.node();
    std::vector<int> lab(labels.begin(), labels.end());
    on->backward = [on, ln, logp, lab = std::move(lab), b, k, eps, off] {
      const double scale = on->grad[0] / static_cast<double>(b);
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < k; ++j) {
          const double t = off + (static_cast<int>(j) == lab[r] ? 1.0 - eps : 0.0);
          ln->grad[r * k + j] += scale * (std::exp((*logp)[r * k + j]) - t);
        }
    };
  }
  return out;
}

inline Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return smooth_loss(logits, labels, 0.0);
}

// Single-sample scalar forms.
inline double smooth_loss(std::span<const double> logits, int label, double eps) {
  std::vector<int> labels{label};
  return smooth_loss(Tensor::from({1, logits.size()}, {logits.begin(), logits.end()}), labels, eps).item();
}

inline double cross_entropy(std::span<const double> logits, int label) { return smooth_loss(logits, label, 0.0); }

}  // namespace orthoview::nn
