#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "orthoview/nn/tensor.hpp"

namespace orthoview::nn {

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline ConstMatMap cmat(const double* p, std::size_t r, std::size_t c) {
  return ConstMatMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline MatMap mat(double* p, std::size_t r, std::size_t c) {
  return MatMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
}

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* op) {
  if (in + 2 * pad < k) throw ShapeError(std::string(op) + ": kernel larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = make_result(a.shape(), {a, b});
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  if (out.requires_grad()) {
    Node *on = out.node(), *an = a.node(), *bn = b.node();
    on->backward = [on, an, bn] {
      for (Node* p : {an, bn})
        if (p->requires_grad)
          for (std::size_t i = 0; i < on->grad.size(); ++i) p->grad[i] += on->grad[i];
    };
  }
  return out;
}

inline Tensor relu(const Tensor& x) {
  Tensor out = make_result(x.shape(), {x});
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node();
    on->backward = [on, xn] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if (xn->value[i] > 0.0) xn->grad[i] += on->grad[i];
    };
  }
  return out;
}

// Same storage order, new shape.
inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out = make_result(std::move(shape), {x});
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node();
    on->backward = [on, xn] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense layers

// y = x W^T + b for x [rows, in], W [out, in], b [out]. Every row goes
// through the same scalar code path, so the forward value of a row does not
// depend on its position in the batch.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require_rank(x, 2, "linear");
  detail::require_rank(w, 2, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), outw = w.dim(0);
  if (w.dim(1) != in)
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != outw))
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
  Tensor out = make_result({rows, outw}, {x, w, b});

  std::vector<double> wt(in * outw);  // W^T, [in, out]
  const auto wv = w.values();
  for (std::size_t o = 0; o < outw; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * outw + o] = wv[o * in + i];
  const auto xv = x.values();
  auto yv = out.values();
  // Every output row runs the same instruction sequence regardless of its
  // position, so results do not depend on row order.
  constexpr std::size_t kRowBlock = 8;
  for (std::size_t r0 = 0; r0 < rows; r0 += kRowBlock) {
    const std::size_t nb = std::min(kRowBlock, rows - r0);
    for (std::size_t r = r0; r < r0 + nb; ++r) {
      double* y = yv.data() + r * outw;
      if (b.defined())
        std::copy(b.values().begin(), b.values().end(), y);
      else
        std::fill(y, y + outw, 0.0);
    }
    for (std::size_t i = 0; i < in; ++i) {
      const double* wr = wt.data() + i * outw;
      for (std::size_t r = r0; r < r0 + nb; ++r) {
        const double a = xv[r * in + i];
        double* y = yv.data() + r * outw;
        for (std::size_t o = 0; o < outw; ++o) y[o] += a * wr[o];
      }
    }
  }

  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node(), *wn = w.node();
    Node* bn = b.defined() ? b.node() : nullptr;
    on->backward = [on, xn, wn, bn, rows, in, outw] {
      auto dy = detail::cmat(on->grad.data(), rows, outw);
      if (xn->requires_grad)
        detail::mat(xn->grad.data(), rows, in).noalias() += dy * detail::cmat(wn->value.data(), outw, in);
      if (wn->requires_grad)
        detail::mat(wn->grad.data(), outw, in).noalias() += dy.transpose() * detail::cmat(xn->value.data(), rows, in);
      if (bn && bn->requires_grad)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < outw; ++o) bn->grad[o] += on->grad[r * outw + o];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution over [N, C, H, W] via im2col and a single GEMM per call.

struct Conv2dGeometry {
  std::size_t n, c, h, w, o, k, stride, pad, ho, wo;
  std::size_t ckk() const { return c * k * k; }
  std::size_t cols() const { return n * ho * wo; }
};

namespace detail {

inline void im2col(const double* x, const Conv2dGeometry& g, double* col) {
  const std::size_t hw = g.ho * g.wo, ncol = g.cols();
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = col + ((c * g.k + ki) * g.k + kj) * ncol;
        for (std::size_t n = 0; n < g.n; ++n) {
          const double* plane = x + (n * g.c + c) * g.h * g.w;
          double* dst = row + n * hw;
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            for (std::size_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(g.h) &&
                                  iw < static_cast<std::ptrdiff_t>(g.w);
              dst[oh * g.wo + ow] = inside ? plane[ih * static_cast<std::ptrdiff_t>(g.w) + iw] : 0.0;
            }
          }
        }
      }
}

inline void col2im_add(const double* col, const Conv2dGeometry& g, double* dx) {
  const std::size_t hw = g.ho * g.wo, ncol = g.cols();
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = col + ((c * g.k + ki) * g.k + kj) * ncol;
        for (std::size_t n = 0; n < g.n; ++n) {
          double* plane = dx + (n * g.c + c) * g.h * g.w;
          const double* src = row + n * hw;
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
              plane[ih * static_cast<std::ptrdiff_t>(g.w) + iw] += src[oh * g.wo + ow];
            }
          }
        }
      }
}

}  // namespace detail

// x [N, C, H, W], w [O, C, k, k], optional b [O].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  detail::require_rank(x, 4, "conv2d");
  detail::require_rank(w, 4, "conv2d");
  if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3))
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(w.shape()));
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  Conv2dGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad, 0, 0};
  g.ho = detail::conv_out(g.h, g.k, stride, pad, "conv2d");
  g.wo = detail::conv_out(g.w, g.k, stride, pad, "conv2d");
  if (b.defined() && (b.rank() != 1 || b.dim(0) != g.o))
    throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " does not match " + std::to_string(g.o) + " channels");

  Tensor out = make_result({g.n, g.o, g.ho, g.wo}, {x, w, b});
  auto col = std::make_shared<std::vector<double>>(g.ckk() * g.cols());
  detail::im2col(x.values().data(), g, col->data());
  detail::RowMatrix prod(static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.cols()));
  prod.noalias() = detail::cmat(w.values().data(), g.o, g.ckk()) * detail::cmat(col->data(), g.ckk(), g.cols());

  const std::size_t hw = g.ho * g.wo;
  auto yv = out.values();
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t o = 0; o < g.o; ++o) {
      const double bias = b.defined() ? b.values()[o] : 0.0;
      const double* src = prod.data() + o * g.cols() + n * hw;
      double* dst = yv.data() + (n * g.o + o) * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
    }

  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node(), *wn = w.node();
    Node* bn = b.defined() ? b.node() : nullptr;
    on->backward = [on, xn, wn, bn, g, col] {
      const std::size_t hw = g.ho * g.wo;
      detail::RowMatrix dprod(static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.cols()));
      for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t o = 0; o < g.o; ++o)
          std::copy_n(on->grad.data() + (n * g.o + o) * hw, hw, dprod.data() + o * g.cols() + n * hw);
      if (wn->requires_grad)
        detail::mat(wn->grad.data(), g.o, g.ckk()).noalias() +=
            dprod * detail::cmat(col->data(), g.ckk(), g.cols()).transpose();
      if (bn && bn->requires_grad)
        for (std::size_t o = 0; o < g.o; ++o) bn->grad[o] += dprod.row(static_cast<Eigen::Index>(o)).sum();
      if (xn->requires_grad) {
        detail::RowMatrix dcol(static_cast<Eigen::Index>(g.ckk()), static_cast<Eigen::Index>(g.cols()));
        dcol.noalias() = detail::cmat(wn->value.data(), g.o, g.ckk()).transpose() * dprod;
        detail::col2im_add(dcol.data(), g, xn->grad.data());
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization over axis 1 of [N, C, ...].

inline constexpr double kBatchNormEps = 1e-5;

// Train mode normalizes with batch statistics and updates the running statistics with the
// given momentum (unbiased variance); eval mode is the fixed affine map
// defined by the running statistics.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::span<double> running_mean,
                         std::span<double> running_var, bool training, double momentum = 0.1,
                         double eps = kBatchNormEps) {
  if (x.rank() < 2) throw ShapeError("batch_norm: expected [N, C, ...], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  if (gamma.numel() != c || beta.numel() != c || running_mean.size() != c || running_var.size() != c)
    throw ShapeError("batch_norm: parameters do not match " + std::to_string(c) + " channels");
  if (training && n < 2) throw std::invalid_argument("batch_norm: train mode needs a batch of at least 2");
  const std::size_t m = n * inner;

  Tensor out = make_result(x.shape(), {x, gamma, beta});
  const auto xv = x.values();
  auto yv = out.values();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(c);
  std::vector<double> mu(running_mean.begin(), running_mean.end()), var(running_var.begin(), running_var.end());
  // Channel reductions walk memory in order: sample, channel, then spatial.
  const auto per_channel = [n, c, inner](auto&& body) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) body(ch, base + j);
      }
  };
  if (training) {
    std::vector<double> s(c, 0.0), ss(c, 0.0);
    per_channel([&](std::size_t ch, std::size_t idx) { s[ch] += xv[idx]; });
    for (std::size_t ch = 0; ch < c; ++ch) mu[ch] = s[ch] / static_cast<double>(m);
    per_channel([&](std::size_t ch, std::size_t idx) {
      const double d = xv[idx] - mu[ch];
      ss[ch] += d * d;
    });
    for (std::size_t ch = 0; ch < c; ++ch) {
      var[ch] = ss[ch] / static_cast<double>(m);
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mu[ch];
      running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * ss[ch] / static_cast<double>(m - 1);
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) (*inv_std)[ch] = 1.0 / std::sqrt(var[ch] + eps);
  const auto gv = gamma.values(), bv = beta.values();
  per_channel([&](std::size_t ch, std::size_t idx) {
    const double h = (xv[idx] - mu[ch]) * (*inv_std)[ch];
    (*xhat)[idx] = h;
    yv[idx] = gv[ch] * h + bv[ch];
  });

  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node(), *gn = gamma.node(), *bn = beta.node();
    on->backward = [on, xn, gn, bn, xhat, inv_std, per_channel, c, m, training] {
      std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
      per_channel([&](std::size_t ch, std::size_t idx) {
        sum_dy[ch] += on->grad[idx];
        sum_dy_xhat[ch] += on->grad[idx] * (*xhat)[idx];
      });
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (gn->requires_grad) gn->grad[ch] += sum_dy_xhat[ch];
        if (bn->requires_grad) bn->grad[ch] += sum_dy[ch];
      }
      if (!xn->requires_grad) return;
      const double md = static_cast<double>(m);
      per_channel([&](std::size_t ch, std::size_t idx) {
        const double scale = gn->value[ch] * (*inv_std)[ch];
        if (training)
          xn->grad[idx] += scale / md * (md * on->grad[idx] - sum_dy[ch] - (*xhat)[idx] * sum_dy_xhat[ch]);
        else
          xn->grad[idx] += scale * on->grad[idx];
      });
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pooling

// Max pooling over [N, C, H, W] with implicit -inf padding.
inline Tensor max_pool2d(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad) {
  detail::require_rank(x, 4, "max_pool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (pad * 2 > k) throw ShapeError("max_pool2d: padding exceeds half the window");
  const std::size_t ho = detail::conv_out(h, k, stride, pad, "max_pool2d");
  const std::size_t wo = detail::conv_out(w, k, stride, pad, "max_pool2d");
  Tensor out = make_result({n, c, ho, wo}, {x});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  const auto xv = x.values();
  auto yv = out.values();
  for (std::size_t plane = 0; plane < n * c; ++plane)
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ki = 0; ki < k; ++ki) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kj = 0; kj < k; ++kj) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = plane * h * w + static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw);
            if (xv[idx] > best) best = xv[idx], best_idx = idx;
          }
        }
        const std::size_t o = (plane * ho + oh) * wo + ow;
        yv[o] = best;
        (*argmax)[o] = best_idx;
      }
  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node();
    on->backward = [on, xn, argmax] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[(*argmax)[i]] += on->grad[i];
    };
  }
  return out;
}

// [N, C, H, W] -> [N, C]
inline Tensor global_avg_pool(const Tensor& x) {
  detail::require_rank(x, 4, "global_avg_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = make_result({n, c}, {x});
  const auto xv = x.values();
  auto yv = out.values();
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += xv[i * hw + j];
    yv[i] = s / static_cast<double>(hw);
  }
  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node();
    on->backward = [on, xn, hw] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        for (std::size_t j = 0; j < hw; ++j) xn->grad[i * hw + j] += on->grad[i] / static_cast<double>(hw);
    };
  }
  return out;
}

// Elementwise max over consecutive groups of rows: [G * size, F] -> [G, F].
// Ties resolve to the first row of the group, the value is exact either way.
inline Tensor group_max(const Tensor& x, std::size_t group_size) {
  detail::require_rank(x, 2, "group_max");
  if (group_size == 0 || x.dim(0) % group_size != 0)
    throw ShapeError("group_max: " + std::to_string(x.dim(0)) + " rows not divisible into groups of " +
                     std::to_string(group_size));
  const std::size_t groups = x.dim(0) / group_size, f = x.dim(1);
  Tensor out = make_result({groups, f}, {x});
  auto argmax = std::make_shared<std::vector<std::size_t>>(groups * f);
  const auto xv = x.values();
  auto yv = out.values();
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t j = 0; j < f; ++j) {
      std::size_t best = g * group_size * f + j;
      for (std::size_t r = 1; r < group_size; ++r) {
        const std::size_t idx = (g * group_size + r) * f + j;
        if (xv[idx] > xv[best]) best = idx;
      }
      yv[g * f + j] = xv[best];
      (*argmax)[g * f + j] = best;
    }
  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node();
    on->backward = [on, xn, argmax] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[(*argmax)[i]] += on->grad[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions used by tests and gradient checks.

inline Tensor sum(const Tensor& x) {
  Tensor out = make_result({1}, {x});
  double s = 0.0;
  for (double v : x.values()) s += v;
  out.values()[0] = s;
  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node();
    on->backward = [on, xn] {
      for (double& g : xn->grad) g += on->grad[0];
    };
  }
  return out;
}

// sum(x * weights) with a constant weight vector; projects a tensor to a
// scalar with a non-degenerate gradient.
inline Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.numel()) throw ShapeError("weighted_sum: weight count mismatch");
  Tensor out = make_result({1}, {x});
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.values()[i] * weights[i];
  out.values()[0] = s;
  if (out.requires_grad()) {
    Node *on = out.node(), *xn = x.node();
    std::vector<double> w(weights.begin(), weights.end());
    on->backward = [on, xn, w = std::move(w)] {
      for (std::size_t i = 0; i < w.size(); ++i) xn->grad[i] += on->grad[0] * w[i];
    };
  }
  return out;
}

}  // namespace orthoview::nn
