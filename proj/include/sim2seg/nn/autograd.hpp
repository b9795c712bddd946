#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <unordered_set>
#include <vector>

#include "sim2seg/nn/tensor.hpp"

namespace sim2seg::nn {

/// Graph recording switch. Off inside `NoGradGuard` scopes (inference).
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool has_grad() const { return grad.size() > 0; }

  typename Tensor<Scalar>::Array& grad_values() {
    if (!has_grad()) grad = Tensor<Scalar>(value.shape());
    return grad.values();
  }
  void zero_grad() { grad = Tensor<Scalar>(); }
};

template <typename Scalar>
using Var = std::shared_ptr<Node<Scalar>>;

template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  return node;
}

template <typename Scalar>
Var<Scalar> parameter(Tensor<Scalar> value) {
  auto node = constant(std::move(value));
  node->requires_grad = true;
  return node;
}

template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& v) {
  return constant(v->value);
}

namespace detail {

template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> parents,
                        std::function<void(Node<Scalar>&)> fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Var<Scalar>& p) { return p && p->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward_fn = std::move(fn);
    }
  }
  return node;
}

inline int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

/// Unfolds one (C,H,W) image into a (C*k*k, Ho*Wo) row-major patch matrix.
template <typename Scalar>
void im2col(const Scalar* img, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            Scalar* cols) {
  const Eigen::Index ncols = static_cast<Eigen::Index>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    const Scalar* plane = img + static_cast<Eigen::Index>(c) * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        Scalar* row = cols + ((static_cast<Eigen::Index>(c) * k + ki) * k + kj) * ncols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          Scalar* dst = row + static_cast<Eigen::Index>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<Eigen::Index>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters patch rows back, accumulating into `img`.
template <typename Scalar>
void col2im(const Scalar* cols, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            Scalar* img) {
  const Eigen::Index ncols = static_cast<Eigen::Index>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    Scalar* plane = img + static_cast<Eigen::Index>(c) * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const Scalar* row = cols + ((static_cast<Eigen::Index>(c) * k + ki) * k + kj) * ncols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= H) continue;
          const Scalar* src = row + static_cast<Eigen::Index>(oy) * Wo;
          Scalar* dst = plane + static_cast<Eigen::Index>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void add_channel_bias(Tensor<Scalar>& out, const Tensor<Scalar>& bias) {
  for (int n = 0; n < out.n(); ++n) {
    out.sample(n).colwise() += bias.values().matrix();
  }
}

template <typename Scalar>
void accumulate_bias_grad(Node<Scalar>& bias, const Tensor<Scalar>& gout) {
  auto& g = bias.grad_values();
  for (int n = 0; n < gout.n(); ++n) g += gout.sample(n).rowwise().sum().array();
}

}  // namespace detail

/// Reverse-mode sweep from a scalar root (seed 1) or from an explicit seed.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (!root->requires_grad) return;
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_values().setConstant(Scalar(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backward_fn && node->has_grad()) node->backward_fn(*node);
  }
  // Interior grads are scratch; release them so repeated sweeps start clean.
  for (Node<Scalar>* node : order) {
    if (node->backward_fn) node->zero_grad();
  }
}

/// 2-D convolution (cross-correlation) with zero padding.
/// x: [N,Ci,H,W], weight: [Co,Ci,k,k], bias: [1,Co,1,1] or null.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   int stride, int pad) {
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  const auto& X = x->value;
  const auto& Wt = weight->value;
  const int co = Wt.n();
  const int ci = Wt.c();
  const int k = Wt.h();
  if (X.c() != ci) {
    throw Error(ErrorKind::kShape, "conv2d channel mismatch: input " + shape_string(X.shape()) +
                                       " weight " + shape_string(Wt.shape()));
  }
  const int ho = detail::conv_out(X.h(), k, stride, pad);
  const int wo = detail::conv_out(X.w(), k, stride, pad);
  if (ho <= 0 || wo <= 0) throw Error(ErrorKind::kShape, "conv2d input too small");
  Tensor<Scalar> out(X.n(), co, ho, wo);
  typename Tensor<Scalar>::ConstMatrixMap wmat(Wt.data(), co, static_cast<Eigen::Index>(ci) * k * k);
  RowMatrix cols(static_cast<Eigen::Index>(ci) * k * k, static_cast<Eigen::Index>(ho) * wo);
  for (int n = 0; n < X.n(); ++n) {
    detail::im2col(X.data() + n * X.sample_size(), ci, X.h(), X.w(), k, stride, pad, ho, wo,
                   cols.data());
    out.sample(n).noalias() = wmat * cols;
  }
  if (bias) detail::add_channel_bias(out, bias->value);

  return detail::make_result<Scalar>(
      std::move(out), {x, weight, bias}, [x, weight, bias, stride, pad](Node<Scalar>& self) {
        const auto& X = x->value;
        const auto& Wt = weight->value;
        const int co = Wt.n(), ci = Wt.c(), k = Wt.h();
        const int ho = self.value.h(), wo = self.value.w();
        const Eigen::Index patch = static_cast<Eigen::Index>(ci) * k * k;
        typename Tensor<Scalar>::ConstMatrixMap wmat(Wt.data(), co, patch);
        RowMatrix cols(patch, static_cast<Eigen::Index>(ho) * wo);
        RowMatrix dcols(patch, static_cast<Eigen::Index>(ho) * wo);
        for (int n = 0; n < X.n(); ++n) {
          const auto g = self.grad.sample(n);
          if (weight->requires_grad) {
            detail::im2col(X.data() + n * X.sample_size(), ci, X.h(), X.w(), k, stride, pad, ho,
                           wo, cols.data());
            typename Tensor<Scalar>::MatrixMap dw(weight->grad_values().data(), co, patch);
            dw.noalias() += g * cols.transpose();
          }
          if (x->requires_grad) {
            dcols.noalias() = wmat.transpose() * g;
            detail::col2im(dcols.data(), ci, X.h(), X.w(), k, stride, pad, ho, wo,
                           x->grad_values().data() + n * X.sample_size());
          }
        }
        if (bias && bias->requires_grad) detail::accumulate_bias_grad(*bias, self.grad);
      });
}

/// Transposed convolution (fractionally strided).
/// x: [N,Ci,H,W], weight: [Ci,Co,k,k]; output side (H-1)*stride - 2*pad + k + output_pad.
template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& weight,
                             const Var<Scalar>& bias, int stride, int pad, int output_pad) {
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  const auto& X = x->value;
  const auto& Wt = weight->value;
  const int ci = Wt.n();
  const int co = Wt.c();
  const int k = Wt.h();
  if (X.c() != ci) throw Error(ErrorKind::kShape, "conv_transpose2d channel mismatch");
  const int ho = (X.h() - 1) * stride - 2 * pad + k + output_pad;
  const int wo = (X.w() - 1) * stride - 2 * pad + k + output_pad;
  const Eigen::Index patch = static_cast<Eigen::Index>(co) * k * k;
  Tensor<Scalar> out(X.n(), co, ho, wo);
  typename Tensor<Scalar>::ConstMatrixMap wmat(Wt.data(), ci, patch);
  RowMatrix cols(patch, X.plane());
  for (int n = 0; n < X.n(); ++n) {
    cols.noalias() = wmat.transpose() * X.sample(n);
    detail::col2im(cols.data(), co, ho, wo, k, stride, pad, X.h(), X.w(),
                   out.data() + n * out.sample_size());
  }
  if (bias) detail::add_channel_bias(out, bias->value);

  return detail::make_result<Scalar>(
      std::move(out), {x, weight, bias}, [x, weight, bias, stride, pad](Node<Scalar>& self) {
        const auto& X = x->value;
        const auto& Wt = weight->value;
        const int ci = Wt.n(), co = Wt.c(), k = Wt.h();
        const int ho = self.value.h(), wo = self.value.w();
        const Eigen::Index patch = static_cast<Eigen::Index>(co) * k * k;
        typename Tensor<Scalar>::ConstMatrixMap wmat(Wt.data(), ci, patch);
        RowMatrix cols(patch, X.plane());
        for (int n = 0; n < X.n(); ++n) {
          detail::im2col(self.grad.data() + n * self.grad.sample_size(), co, ho, wo, k, stride,
                         pad, X.h(), X.w(), cols.data());
          if (x->requires_grad) {
            typename Tensor<Scalar>::MatrixMap dx(x->grad_values().data() + n * X.sample_size(),
                                                  ci, X.plane());
            dx.noalias() += wmat * cols;
          }
          if (weight->requires_grad) {
            typename Tensor<Scalar>::MatrixMap dw(weight->grad_values().data(), ci, patch);
            dw.noalias() += X.sample(n) * cols.transpose();
          }
        }
        if (bias && bias->requires_grad) detail::accumulate_bias_grad(*bias, self.grad);
      });
}

/// Reflection padding (edge pixel not repeated), pad < H and pad < W.
template <typename Scalar>
Var<Scalar> reflect_pad(const Var<Scalar>& x, int pad) {
  const auto& X = x->value;
  if (pad >= X.h() || pad >= X.w()) throw Error(ErrorKind::kShape, "reflect_pad too large");
  const int h = X.h() + 2 * pad;
  const int w = X.w() + 2 * pad;
  auto reflect = [](int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  Tensor<Scalar> out(X.n(), X.c(), h, w);
  for (int n = 0; n < X.n(); ++n)
    for (int c = 0; c < X.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          out.at(n, c, y, xx) = X.at(n, c, reflect(y - pad, X.h()), reflect(xx - pad, X.w()));
  return detail::make_result<Scalar>(std::move(out), {x}, [x, pad, reflect](Node<Scalar>& self) {
    const auto& X = x->value;
    x->grad_values();
    for (int n = 0; n < X.n(); ++n)
      for (int c = 0; c < X.c(); ++c)
        for (int y = 0; y < self.value.h(); ++y)
          for (int xx = 0; xx < self.value.w(); ++xx)
            x->grad.at(n, c, reflect(y - pad, X.h()), reflect(xx - pad, X.w())) +=
                self.grad.at(n, c, y, xx);
  });
}

/// Per-sample, per-channel normalization without affine parameters.
template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, Scalar eps = Scalar(1e-5)) {
  const auto& X = x->value;
  const Eigen::Index p = X.plane();
  Tensor<Scalar> out(X.shape());
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std(static_cast<Eigen::Index>(X.n()) * X.c());
  for (Eigen::Index i = 0; i < inv_std.size(); ++i) {
    const auto seg = X.values().segment(i * p, p);
    const Scalar mean = seg.mean();
    const Scalar var = (seg - mean).square().mean();
    inv_std[i] = Scalar(1) / std::sqrt(var + eps);
    out.values().segment(i * p, p) = (seg - mean) * inv_std[i];
  }
  return detail::make_result<Scalar>(std::move(out), {x}, [x, inv_std, p](Node<Scalar>& self) {
    auto& dx = x->grad_values();
    for (Eigen::Index i = 0; i < inv_std.size(); ++i) {
      const auto g = self.grad.values().segment(i * p, p);
      const auto y = self.value.values().segment(i * p, p);
      const Scalar gm = g.mean();
      const Scalar gym = (g * y).mean();
      dx.segment(i * p, p) += inv_std[i] * (g - gm - y * gym);
    }
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  Tensor<Scalar> out(x->value.shape(),
                     x->value.values().unaryExpr([slope](Scalar v) { return v > 0 ? v : slope * v; }));
  return detail::make_result<Scalar>(std::move(out), {x}, [x, slope](Node<Scalar>& self) {
    x->grad_values() += self.grad.values() *
                        x->value.values().unaryExpr([slope](Scalar v) { return v > 0 ? Scalar(1) : slope; });
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return leaky_relu(x, Scalar(0));
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  Tensor<Scalar> out(x->value.shape(), x->value.values().tanh());
  return detail::make_result<Scalar>(std::move(out), {x}, [x](Node<Scalar>& self) {
    x->grad_values() += self.grad.values() * (Scalar(1) - self.value.values().square());
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (!a->value.same_shape(b->value)) throw Error(ErrorKind::kShape, "add shape mismatch");
  Tensor<Scalar> out(a->value.shape(), a->value.values() + b->value.values());
  return detail::make_result<Scalar>(std::move(out), {a, b}, [a, b](Node<Scalar>& self) {
    if (a->requires_grad) a->grad_values() += self.grad.values();
    if (b->requires_grad) b->grad_values() += self.grad.values();
  });
}

/// Elementwise multiplication by a constant.
template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar k) {
  Tensor<Scalar> out(x->value.shape(), x->value.values() * k);
  return detail::make_result<Scalar>(std::move(out), {x}, [x, k](Node<Scalar>& self) {
    x->grad_values() += self.grad.values() * k;
  });
}

/// Stacks along the channel axis.
template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  const auto& A = a->value;
  const auto& B = b->value;
  if (A.n() != B.n() || A.h() != B.h() || A.w() != B.w()) {
    throw Error(ErrorKind::kShape, "concat_channels shape mismatch");
  }
  Tensor<Scalar> out(A.n(), A.c() + B.c(), A.h(), A.w());
  for (int n = 0; n < A.n(); ++n) {
    out.values().segment(n * out.sample_size(), A.sample_size()) =
        A.values().segment(n * A.sample_size(), A.sample_size());
    out.values().segment(n * out.sample_size() + A.sample_size(), B.sample_size()) =
        B.values().segment(n * B.sample_size(), B.sample_size());
  }
  return detail::make_result<Scalar>(std::move(out), {a, b}, [a, b](Node<Scalar>& self) {
    const auto sa = a->value.sample_size();
    const auto sb = b->value.sample_size();
    for (int n = 0; n < self.value.n(); ++n) {
      const auto base = n * self.value.sample_size();
      if (a->requires_grad) a->grad_values().segment(n * sa, sa) += self.grad.values().segment(base, sa);
      if (b->requires_grad) b->grad_values().segment(n * sb, sb) += self.grad.values().segment(base + sa, sb);
    }
  });
}

/// Inverted dropout; identity when `active` is false.
template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& x, Scalar p, bool active, std::mt19937_64& rng) {
  if (!active || p <= 0) return x;
  std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mask(x->value.size());
  const Scalar s = Scalar(1) / (Scalar(1) - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? s : Scalar(0);
  Tensor<Scalar> out(x->value.shape(), x->value.values() * mask);
  return detail::make_result<Scalar>(std::move(out), {x}, [x, mask](Node<Scalar>& self) {
    x->grad_values() += self.grad.values() * mask;
  });
}

namespace detail {
template <typename Scalar>
Tensor<Scalar> scalar_tensor(Scalar v) {
  return Tensor<Scalar>::constant({1, 1, 1, 1}, v);
}
}  // namespace detail

/// mean((x - target)^2) against a constant target.
template <typename Scalar>
Var<Scalar> mse_to(const Var<Scalar>& x, Scalar target) {
  const auto d = x->value.values() - target;
  auto out = detail::scalar_tensor<Scalar>(d.square().mean());
  return detail::make_result<Scalar>(std::move(out), {x}, [x, target](Node<Scalar>& self) {
    const Scalar k = Scalar(2) * self.grad.values()[0] / Scalar(x->value.size());
    x->grad_values() += (x->value.values() - target) * k;
  });
}

/// mean(|a - b|).
template <typename Scalar>
Var<Scalar> l1(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (!a->value.same_shape(b->value)) throw Error(ErrorKind::kShape, "l1 shape mismatch");
  auto out = detail::scalar_tensor<Scalar>((a->value.values() - b->value.values()).abs().mean());
  return detail::make_result<Scalar>(std::move(out), {a, b}, [a, b](Node<Scalar>& self) {
    const Scalar k = self.grad.values()[0] / Scalar(a->value.size());
    const auto sgn = (a->value.values() - b->value.values()).unaryExpr([](Scalar v) {
      return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0));
    });
    if (a->requires_grad) a->grad_values() += sgn * k;
    if (b->requires_grad) b->grad_values() -= sgn * k;
  });
}

/// Mean binary cross-entropy of logits against a constant label.
template <typename Scalar>
Var<Scalar> bce_with_logits_to(const Var<Scalar>& logits, Scalar target) {
  const auto& z = logits->value.values();
  const auto per = z.max(Scalar(0)) - z * target + (Scalar(1) + (-z.abs()).exp()).log();
  auto out = detail::scalar_tensor<Scalar>(per.mean());
  return detail::make_result<Scalar>(std::move(out), {logits}, [logits, target](Node<Scalar>& self) {
    const Scalar k = self.grad.values()[0] / Scalar(logits->value.size());
    const auto sig = Scalar(1) / (Scalar(1) + (-logits->value.values()).exp());
    logits->grad_values() += (sig - target) * k;
  });
}

/// Sum of weighted scalar terms; zero-weight terms are dropped from the graph.
template <typename Scalar>
Var<Scalar> weighted_sum(const std::vector<std::pair<Scalar, Var<Scalar>>>& terms) {
  Scalar total = 0;
  std::vector<Var<Scalar>> parents;
  std::vector<std::pair<Scalar, Var<Scalar>>> kept;
  for (const auto& [w, v] : terms) {
    if (w == Scalar(0)) continue;
    total += w * v->value.values()[0];
    parents.push_back(v);
    kept.push_back({w, v});
  }
  return detail::make_result<Scalar>(detail::scalar_tensor(total), parents,
                                     [kept](Node<Scalar>& self) {
                                       for (const auto& [w, v] : kept) {
                                         if (v->requires_grad) {
                                           v->grad_values()[0] += w * self.grad.values()[0];
                                         }
                                       }
                                     });
}

template <typename Scalar>
Scalar item(const Var<Scalar>& v) {
  return v->value.values()[0];
}

}  // namespace sim2seg::nn
