// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense tensors with reverse-mode automatic differentiation. The graph is
// held implicitly through shared parents; backward() walks it once in
// reverse topological order. Scalar type is templated: float for training,
// double for finite-difference shadow checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "handsight/rng.hpp"

namespace handsight::nn {

inline int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

// Thread-local switch; sampling and rollouts run with grads disabled.
bool& grad_mode();

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

template <typename S>
struct TensorImpl {
  std::vector<int> shape;
  std::vector<S> val;
  std::vector<S> grad;  // allocated lazily, same length as val
  bool requires_grad = false;
  bool backward_ran = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backprop;

  void ensure_grad() {
    if (grad.empty()) grad.assign(val.size(), S(0));
  }
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    t.impl_->shape = std::move(shape);
    t.impl_->val.assign(size_t(numel_of(t.impl_->shape)), S(0));
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(std::vector<int> shape, S value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data().begin(), t.data().end(), value);
    return t;
  }

  static Tensor from_data(std::vector<int> shape, std::vector<S> values,
                          bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    if (numel_of(shape) != int64_t(values.size()))
      throw std::invalid_argument("Tensor: data length does not match shape");
    t.impl_->shape = std::move(shape);
    t.impl_->val = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor randn(std::vector<int> shape, Rng& rng,
                      bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.data()) v = S(rng.normal());
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[size_t(i)]; }
  int64_t numel() const { return int64_t(impl_->val.size()); }

  std::vector<S>& data() { return impl_->val; }
  const std::vector<S>& data() const { return impl_->val; }
  std::vector<S>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), S(0));
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  S item() const {
    if (numel() != 1) throw std::logic_error("Tensor::item on non-scalar");
    return impl_->val[0];
  }

  // Value-only copy, cut off from the graph.
  Tensor detach() const {
    Tensor t = zeros(impl_->shape);
    t.impl_->val = impl_->val;
    return t;
  }

  void backward() const {
    if (numel() != 1)
      throw std::logic_error("backward: loss must be a scalar");
    if (impl_->backward_ran)
      throw std::logic_error("backward: called twice on the same graph");
    impl_->backward_ran = true;

    // Iterative post-order DFS.
    std::vector<TensorImpl<S>*> order;
    std::unordered_set<TensorImpl<S>*> visited;
    struct Frame {
      TensorImpl<S>* node;
      size_t next_child;
    };
    std::vector<Frame> stack;
    stack.push_back({impl_.get(), 0});
    visited.insert(impl_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_child < f.node->parents.size()) {
        TensorImpl<S>* child = f.node->parents[f.next_child++].get();
        if (visited.insert(child).second) stack.push_back({child, 0});
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }

    impl_->ensure_grad();
    impl_->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorImpl<S>* node = *it;
      if (node->backprop) node->backprop(*node);
    }
  }

  std::shared_ptr<TensorImpl<S>> impl() const { return impl_; }

  // Builds a graph node. Parents that do not require grad are still recorded
  // so the backprop closure can reach their buffers, but receive no gradient.
  static Tensor make_node(std::vector<int> shape,
                          std::vector<Tensor> parents,
                          std::function<void(TensorImpl<S>&)> backprop) {
    Tensor t = zeros(std::move(shape));
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (grad_mode() && any) {
      t.impl_->requires_grad = true;
      for (auto& p : parents) t.impl_->parents.push_back(p.impl_);
      t.impl_->backprop = std::move(backprop);
    }
    return t;
  }

 private:
  std::shared_ptr<TensorImpl<S>> impl_;
};

// ---------------------------------------------------------------------------
// GEMM kernels. Each output element is produced by exactly one thread with a
// fixed summation order, so results are bit-identical for any thread count.
// ---------------------------------------------------------------------------

namespace detail {

constexpr int64_t kParallelGemmFlops = 1 << 16;

template <typename S>
void gemm_nn(int m, int k, int n, const S* a, const S* b, S* c) {
  // c[m,n] += a[m,k] * b[k,n]
#pragma omp parallel for schedule(static) if (int64_t(m) * k * n > kParallelGemmFlops)
  for (int i = 0; i < m; ++i) {
    S* ci = c + size_t(i) * n;
    const S* ai = a + size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      S aip = ai[p];
      const S* bp = b + size_t(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename S>
void gemm_nt(int m, int k, int n, const S* a, const S* b, S* c) {
  // c[m,n] += a[m,k] * b[n,k]^T
#pragma omp parallel for schedule(static) if (int64_t(m) * k * n > kParallelGemmFlops)
  for (int i = 0; i < m; ++i) {
    S* ci = c + size_t(i) * n;
    const S* ai = a + size_t(i) * k;
    for (int j = 0; j < n; ++j) {
      const S* bj = b + size_t(j) * k;
      S acc = S(0);
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

template <typename S>
void gemm_tn(int m, int k, int n, const S* a, const S* b, S* c) {
  // c[m,n] += a[k,m]^T * b[k,n]
#pragma omp parallel for schedule(static) if (int64_t(m) * k * n > kParallelGemmFlops)
  for (int i = 0; i < m; ++i) {
    S* ci = c + size_t(i) * n;
    for (int p = 0; p < k; ++p) {
      S api = a[size_t(p) * m + i];
      const S* bp = b + size_t(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "add");
  auto out = Tensor<S>::make_node(
      a.shape(), {a, b}, [pa = a.impl(), pb = b.impl()](TensorImpl<S>& self) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
        }
      });
  for (int64_t i = 0; i < a.numel(); ++i)
    out.data()[size_t(i)] = a.data()[size_t(i)] + b.data()[size_t(i)];
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "sub");
  auto out = Tensor<S>::make_node(
      a.shape(), {a, b}, [pa = a.impl(), pb = b.impl()](TensorImpl<S>& self) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
      });
  for (int64_t i = 0; i < a.numel(); ++i)
    out.data()[size_t(i)] = a.data()[size_t(i)] - b.data()[size_t(i)];
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "mul");
  auto out = Tensor<S>::make_node(
      a.shape(), {a, b}, [pa = a.impl(), pb = b.impl()](TensorImpl<S>& self) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] * pb->val[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pb->grad[i] += self.grad[i] * pa->val[i];
        }
      });
  for (int64_t i = 0; i < a.numel(); ++i)
    out.data()[size_t(i)] = a.data()[size_t(i)] * b.data()[size_t(i)];
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S s) {
  auto out = Tensor<S>::make_node(
      a.shape(), {a}, [pa = a.impl(), s](TensorImpl<S>& self) {
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += s * self.grad[i];
      });
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[size_t(i)] = s * a.data()[size_t(i)];
  return out;
}

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  auto out = Tensor<S>::make_node(
      x.shape(), {x}, [px = x.impl()](TensorImpl<S>& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          S sig = S(1) / (S(1) + std::exp(-px->val[i]));
          px->grad[i] += self.grad[i] * sig * (S(1) + px->val[i] * (S(1) - sig));
        }
      });
  for (int64_t i = 0; i < x.numel(); ++i) {
    S v = x.data()[size_t(i)];
    out.data()[size_t(i)] = v / (S(1) + std::exp(-v));
  }
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  auto out = Tensor<S>::make_node(
      {1}, {x}, [px = x.impl()](TensorImpl<S>& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (auto& g : px->grad) g += self.grad[0];
      });
  S acc = S(0);
  for (S v : x.data()) acc += v;
  out.data()[0] = acc;
  return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  S inv = S(1) / S(x.numel());
  auto out = Tensor<S>::make_node(
      {1}, {x}, [px = x.impl(), inv](TensorImpl<S>& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (auto& g : px->grad) g += inv * self.grad[0];
      });
  S acc = S(0);
  for (S v : x.data()) acc += v;
  out.data()[0] = acc * inv;
  return out;
}

template <typename S>
Tensor<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  check_same_shape(pred, target, "mse_loss");
  S inv = S(1) / S(pred.numel());
  auto out = Tensor<S>::make_node(
      {1}, {pred, target},
      [pp = pred.impl(), pt = target.impl(), inv](TensorImpl<S>& self) {
        for (size_t i = 0; i < pp->val.size(); ++i) {
          S d = S(2) * inv * (pp->val[i] - pt->val[i]) * self.grad[0];
          if (pp->requires_grad) {
            pp->ensure_grad();
            pp->grad[i] += d;
          }
          if (pt->requires_grad) {
            pt->ensure_grad();
            pt->grad[i] -= d;
          }
        }
      });
  S acc = S(0);
  for (int64_t i = 0; i < pred.numel(); ++i) {
    S d = pred.data()[size_t(i)] - target.data()[size_t(i)];
    acc += d * d;
  }
  out.data()[0] = acc * inv;
  return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<int> new_shape) {
  if (numel_of(new_shape) != x.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  auto out = Tensor<S>::make_node(
      new_shape, {x}, [px = x.impl()](TensorImpl<S>& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
      });
  out.data() = x.data();
  return out;
}

// Dropout on the inputs of a projection; identity in eval mode.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, bool training, Rng& rng) {
  if (!training || p <= 0.0) return x;
  auto mask = std::make_shared<std::vector<S>>(size_t(x.numel()));
  S keep_scale = S(1.0 / (1.0 - p));
  for (auto& m : *mask) m = (rng.uniform() < p) ? S(0) : keep_scale;
  auto out = Tensor<S>::make_node(
      x.shape(), {x}, [px = x.impl(), mask](TensorImpl<S>& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          px->grad[i] += self.grad[i] * (*mask)[i];
      });
  for (int64_t i = 0; i < x.numel(); ++i)
    out.data()[size_t(i)] = x.data()[size_t(i)] * (*mask)[size_t(i)];
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

// a: [m,k], b: [k,n] -> [m,n]
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: bad shapes");
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = Tensor<S>::make_node(
      {m, n}, {a, b},
      [pa = a.impl(), pb = b.impl(), m, k, n](TensorImpl<S>& self) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          detail::gemm_nt(m, n, k, self.grad.data(), pb->val.data(), pa->grad.data());
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          detail::gemm_tn(k, m, n, pa->val.data(), self.grad.data(), pb->grad.data());
        }
      });
  detail::gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data().data());
  return out;
}

// Batched product over leading dim. a: [B,m,k]; b: [B,k,n] (or [B,n,k] when
// transpose_b). Output [B,m,n].
template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b, bool transpose_b = false) {
  if (a.shape().size() != 3 || b.shape().size() != 3 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("bmm: bad shapes");
  int batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  int n = transpose_b ? b.dim(1) : b.dim(2);
  int bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != k) throw std::invalid_argument("bmm: inner dim mismatch");

  auto out = Tensor<S>::make_node(
      {batch, m, n}, {a, b},
      [pa = a.impl(), pb = b.impl(), batch, m, k, n, transpose_b](TensorImpl<S>& self) {
        for (int bi = 0; bi < batch; ++bi) {
          const S* go = self.grad.data() + size_t(bi) * m * n;
          const S* av = pa->val.data() + size_t(bi) * m * k;
          const S* bv = pb->val.data() + size_t(bi) * (transpose_b ? n * k : k * n);
          if (pa->requires_grad) {
            pa->ensure_grad();
            S* ga = pa->grad.data() + size_t(bi) * m * k;
            if (!transpose_b)
              detail::gemm_nt(m, n, k, go, bv, ga);  // dA = dC B^T
            else
              detail::gemm_nn(m, n, k, go, bv, ga);  // dA = dC B
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            S* gb = pb->grad.data() + size_t(bi) * (transpose_b ? n * k : k * n);
            if (!transpose_b)
              detail::gemm_tn(k, m, n, av, go, gb);  // dB = A^T dC
            else
              detail::gemm_tn(n, m, k, go, av, gb);  // dB = dC^T A
          }
        }
      });
  for (int bi = 0; bi < batch; ++bi) {
    const S* av = a.data().data() + size_t(bi) * m * k;
    const S* bv = b.data().data() + size_t(bi) * (transpose_b ? n * k : k * n);
    S* ov = out.data().data() + size_t(bi) * m * n;
    if (!transpose_b)
      detail::gemm_nn(m, k, n, av, bv, ov);
    else
      detail::gemm_nt(m, k, n, av, bv, ov);
  }
  return out;
}

// y = x W^T + b. x: [N,in], w: [out,in], b: [out].
template <typename S>
Tensor<S> affine(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || x.dim(1) != w.dim(1))
    throw std::invalid_argument("affine: bad shapes");
  int n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  auto out = Tensor<S>::make_node(
      {n, out_dim}, {x, w, b},
      [px = x.impl(), pw = w.impl(), pb = b.impl(), n, in, out_dim](TensorImpl<S>& self) {
        if (px->requires_grad) {
          px->ensure_grad();
          detail::gemm_nn(n, out_dim, in, self.grad.data(), pw->val.data(),
                          px->grad.data());
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          detail::gemm_tn(out_dim, n, in, self.grad.data(), px->val.data(),
                          pw->grad.data());
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < out_dim; ++j)
              pb->grad[size_t(j)] += self.grad[size_t(i) * out_dim + j];
        }
      });
  detail::gemm_nt(n, in, out_dim, x.data().data(), w.data().data(),
                  out.data().data());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_dim; ++j)
      out.data()[size_t(i) * out_dim + j] += b.data()[size_t(j)];
  return out;
}

// Softmax over the last dimension.
template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
  int last = x.shape().back();
  int64_t rows = x.numel() / last;
  auto out = Tensor<S>::make_node(
      x.shape(), {x}, [px = x.impl(), rows, last](TensorImpl<S>& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
          const S* y = self.val.data() + r * last;
          const S* gy = self.grad.data() + r * last;
          S dotv = S(0);
          for (int j = 0; j < last; ++j) dotv += y[j] * gy[j];
          S* gx = px->grad.data() + r * last;
          for (int j = 0; j < last; ++j) gx[j] += y[j] * (gy[j] - dotv);
        }
      });
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = x.data().data() + r * last;
    S* yr = out.data().data() + r * last;
    S mx = xr[0];
    for (int j = 1; j < last; ++j) mx = std::max(mx, xr[j]);
    S denom = S(0);
    for (int j = 0; j < last; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      denom += yr[j];
    }
    for (int j = 0; j < last; ++j) yr[j] /= denom;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image-shaped ops ([N,C,H,W])
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 4 || b.shape().size() != 4 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw std::invalid_argument("concat_channels: bad shapes");
  int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  int64_t plane = int64_t(h) * w;
  auto out = Tensor<S>::make_node(
      {n, ca + cb, h, w}, {a, b},
      [pa = a.impl(), pb = b.impl(), n, ca, cb, plane](TensorImpl<S>& self) {
        for (int i = 0; i < n; ++i) {
          const S* g = self.grad.data() + size_t(i) * (ca + cb) * plane;
          if (pa->requires_grad) {
            pa->ensure_grad();
            S* ga = pa->grad.data() + size_t(i) * ca * plane;
            for (int64_t j = 0; j < ca * plane; ++j) ga[j] += g[j];
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            S* gb = pb->grad.data() + size_t(i) * cb * plane;
            for (int64_t j = 0; j < cb * plane; ++j) gb[j] += g[ca * plane + j];
          }
        }
      });
  for (int i = 0; i < n; ++i) {
    S* o = out.data().data() + size_t(i) * (ca + cb) * plane;
    const S* av = a.data().data() + size_t(i) * ca * plane;
    const S* bv = b.data().data() + size_t(i) * cb * plane;
    std::copy(av, av + ca * plane, o);
    std::copy(bv, bv + cb * plane, o + ca * plane);
  }
  return out;
}

template <typename S>
Tensor<S> upsample_nearest2x(const Tensor<S>& x) {
  if (x.shape().size() != 4) throw std::invalid_argument("upsample: need NCHW");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto out = Tensor<S>::make_node(
      {n, c, 2 * h, 2 * w}, {x}, [px = x.impl(), n, c, h, w](TensorImpl<S>& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (int64_t nc = 0; nc < int64_t(n) * c; ++nc) {
          const S* g = self.grad.data() + nc * 4 * h * w;
          S* gx = px->grad.data() + nc * h * w;
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
              const S* g00 = g + (2 * y) * (2 * w) + 2 * xx;
              const S* g10 = g + (2 * y + 1) * (2 * w) + 2 * xx;
              gx[y * w + xx] += g00[0] + g00[1] + g10[0] + g10[1];
            }
        }
      });
  for (int64_t nc = 0; nc < int64_t(n) * c; ++nc) {
    const S* xv = x.data().data() + nc * h * w;
    S* o = out.data().data() + nc * 4 * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        S v = xv[y * w + xx];
        o[(2 * y) * (2 * w) + 2 * xx] = v;
        o[(2 * y) * (2 * w) + 2 * xx + 1] = v;
        o[(2 * y + 1) * (2 * w) + 2 * xx] = v;
        o[(2 * y + 1) * (2 * w) + 2 * xx + 1] = v;
      }
  }
  return out;
}

// x: [N,C,H,W] modulated per channel: y = x*(1+scale) + shift.
// scale_shift: [N, 2C] (first C scales, then C shifts).
template <typename S>
Tensor<S> film(const Tensor<S>& x, const Tensor<S>& scale_shift) {
  if (x.shape().size() != 4 || scale_shift.shape().size() != 2 ||
      scale_shift.dim(0) != x.dim(0) || scale_shift.dim(1) != 2 * x.dim(1))
    throw std::invalid_argument("film: bad shapes");
  int n = x.dim(0), c = x.dim(1);
  int64_t plane = int64_t(x.dim(2)) * x.dim(3);
  auto out = Tensor<S>::make_node(
      x.shape(), {x, scale_shift},
      [px = x.impl(), ps = scale_shift.impl(), n, c, plane](TensorImpl<S>& self) {
        for (int i = 0; i < n; ++i)
          for (int ch = 0; ch < c; ++ch) {
            size_t base = (size_t(i) * c + ch) * plane;
            S s = ps->val[size_t(i) * 2 * c + ch];
            if (px->requires_grad) {
              px->ensure_grad();
              for (int64_t j = 0; j < plane; ++j)
                px->grad[base + j] += self.grad[base + j] * (S(1) + s);
            }
            if (ps->requires_grad) {
              ps->ensure_grad();
              S gs = S(0), gt = S(0);
              for (int64_t j = 0; j < plane; ++j) {
                gs += self.grad[base + j] * px->val[base + j];
                gt += self.grad[base + j];
              }
              ps->grad[size_t(i) * 2 * c + ch] += gs;
              ps->grad[size_t(i) * 2 * c + c + ch] += gt;
            }
          }
      });
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      size_t base = (size_t(i) * c + ch) * plane;
      S s = scale_shift.data()[size_t(i) * 2 * c + ch];
      S t = scale_shift.data()[size_t(i) * 2 * c + c + ch];
      for (int64_t j = 0; j < plane; ++j)
        out.data()[base + j] = x.data()[base + j] * (S(1) + s) + t;
    }
  return out;
}

// [N,C,H,W] -> [N, H*W, C] token layout for attention.
template <typename S>
Tensor<S> tokens_from_map(const Tensor<S>& x) {
  if (x.shape().size() != 4) throw std::invalid_argument("tokens_from_map: need NCHW");
  int n = x.dim(0), c = x.dim(1);
  int64_t l = int64_t(x.dim(2)) * x.dim(3);
  auto out = Tensor<S>::make_node(
      {n, int(l), c}, {x}, [px = x.impl(), n, c, l](TensorImpl<S>& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int ch = 0; ch < c; ++ch)
            for (int64_t j = 0; j < l; ++j)
              px->grad[(size_t(i) * c + ch) * l + j] +=
                  self.grad[(size_t(i) * l + j) * c + ch];
      });
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int64_t j = 0; j < l; ++j)
        out.data()[(size_t(i) * l + j) * c + ch] =
            x.data()[(size_t(i) * c + ch) * l + j];
  return out;
}

// [N, L, C] -> [N,C,H,W] with H*W == L.
template <typename S>
Tensor<S> map_from_tokens(const Tensor<S>& x, int h, int w) {
  if (x.shape().size() != 3 || x.dim(1) != h * w)
    throw std::invalid_argument("map_from_tokens: bad shapes");
  int n = x.dim(0), c = x.dim(2);
  int64_t l = int64_t(h) * w;
  auto out = Tensor<S>::make_node(
      {n, c, h, w}, {x}, [px = x.impl(), n, c, l](TensorImpl<S>& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int ch = 0; ch < c; ++ch)
            for (int64_t j = 0; j < l; ++j)
              px->grad[(size_t(i) * l + j) * c + ch] +=
                  self.grad[(size_t(i) * c + ch) * l + j];
      });
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int64_t j = 0; j < l; ++j)
        out.data()[(size_t(i) * c + ch) * l + j] =
            x.data()[(size_t(i) * l + j) * c + ch];
  return out;
}

// ---------------------------------------------------------------------------
// conv2d via im2col + GEMM
// ---------------------------------------------------------------------------

namespace detail {

// col: [C*kh*kw, outH*outW] for one sample.
template <typename S>
void im2col(const S* x, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, S* col) {
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        S* dst = col + ((size_t(ch) * kh + ky) * kw + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad;
            dst[oy * ow + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? x[(size_t(ch) * h + iy) * w + ix]
                                    : S(0);
          }
        }
      }
}

template <typename S>
void col2im_accum(const S* col, int c, int h, int w, int kh, int kw, int stride,
                  int pad, int oh, int ow, S* x) {
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const S* src = col + ((size_t(ch) * kh + ky) * kw + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            x[(size_t(ch) * h + iy) * w + ix] += src[oy * ow + ox];
          }
        }
      }
}

}  // namespace detail

// x: [N,C,H,W], w: [O,C,kh,kw], b: [O].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int stride, int pad) {
  if (x.shape().size() != 4 || w.shape().size() != 4 || x.dim(1) != w.dim(1))
    throw std::invalid_argument("conv2d: bad shapes");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  int oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");
  int kdim = c * kh * kw;

  auto out = Tensor<S>::make_node(
      {n, oc, oh, ow}, {x, w, b},
      [px = x.impl(), pw = w.impl(), pb = b.impl(), n, c, h, wd, oc, kh, kw,
       stride, pad, oh, ow, kdim](TensorImpl<S>& self) {
        std::vector<S> col(size_t(kdim) * oh * ow);
        std::vector<S> dcol(size_t(kdim) * oh * ow);
        for (int i = 0; i < n; ++i) {
          const S* gy = self.grad.data() + size_t(i) * oc * oh * ow;
          detail::im2col(px->val.data() + size_t(i) * c * h * wd, c, h, wd, kh,
                         kw, stride, pad, oh, ow, col.data());
          if (pw->requires_grad) {
            pw->ensure_grad();
            // dW[oc, kdim] += gy[oc, P] col^T[P, kdim]
            detail::gemm_nt(oc, oh * ow, kdim, gy, col.data(), pw->grad.data());
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            for (int o = 0; o < oc; ++o) {
              S acc = S(0);
              const S* g = gy + size_t(o) * oh * ow;
              for (int64_t j = 0; j < int64_t(oh) * ow; ++j) acc += g[j];
              pb->grad[size_t(o)] += acc;
            }
          }
          if (px->requires_grad) {
            px->ensure_grad();
            std::fill(dcol.begin(), dcol.end(), S(0));
            // dcol[kdim, P] = W^T[kdim, oc] gy[oc, P]
            detail::gemm_tn(kdim, oc, oh * ow, pw->val.data(), gy, dcol.data());
            detail::col2im_accum(dcol.data(), c, h, wd, kh, kw, stride, pad, oh,
                                 ow, px->grad.data() + size_t(i) * c * h * wd);
          }
        }
      });

  std::vector<S> col(size_t(kdim) * oh * ow);
  for (int i = 0; i < n; ++i) {
    detail::im2col(x.data().data() + size_t(i) * c * h * wd, c, h, wd, kh, kw,
                   stride, pad, oh, ow, col.data());
    S* y = out.data().data() + size_t(i) * oc * oh * ow;
    detail::gemm_nn(oc, kdim, oh * ow, w.data().data(), col.data(), y);
    for (int o = 0; o < oc; ++o) {
      S bias = b.data()[size_t(o)];
      S* yo = y + size_t(o) * oh * ow;
      for (int64_t j = 0; j < int64_t(oh) * ow; ++j) yo[j] += bias;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Group normalization over [N,C,H,W]
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> group_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, int groups, S eps = S(1e-5)) {
  if (x.shape().size() != 4 || x.dim(1) % groups != 0)
    throw std::invalid_argument("group_norm: bad shapes");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  int cpg = c / groups;
  int64_t gsize = int64_t(cpg) * h * w;
  int64_t plane = int64_t(h) * w;

  auto stats = std::make_shared<std::vector<S>>(size_t(n) * groups * 2);

  auto out = Tensor<S>::make_node(
      x.shape(), {x, gamma, beta},
      [px = x.impl(), pg = gamma.impl(), pbt = beta.impl(), stats, n, c, groups,
       cpg, gsize, plane](TensorImpl<S>& self) {
        for (int i = 0; i < n; ++i)
          for (int g = 0; g < groups; ++g) {
            S mu = (*stats)[size_t(i) * groups * 2 + g * 2];
            S inv = (*stats)[size_t(i) * groups * 2 + g * 2 + 1];
            size_t base = (size_t(i) * c + size_t(g) * cpg) * plane;
            if (pg->requires_grad || pbt->requires_grad) {
              pg->ensure_grad();
              pbt->ensure_grad();
              for (int cc = 0; cc < cpg; ++cc) {
                int ch = g * cpg + cc;
                S dg = S(0), db = S(0);
                for (int64_t j = 0; j < plane; ++j) {
                  size_t idx = base + size_t(cc) * plane + j;
                  S xhat = (px->val[idx] - mu) * inv;
                  dg += self.grad[idx] * xhat;
                  db += self.grad[idx];
                }
                pg->grad[size_t(ch)] += dg;
                pbt->grad[size_t(ch)] += db;
              }
            }
            if (px->requires_grad) {
              px->ensure_grad();
              // dxhat = dy * gamma; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
              S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
              for (int cc = 0; cc < cpg; ++cc) {
                int ch = g * cpg + cc;
                for (int64_t j = 0; j < plane; ++j) {
                  size_t idx = base + size_t(cc) * plane + j;
                  S xhat = (px->val[idx] - mu) * inv;
                  S dxhat = self.grad[idx] * pg->val[size_t(ch)];
                  sum_dxhat += dxhat;
                  sum_dxhat_xhat += dxhat * xhat;
                }
              }
              S inv_m = S(1) / S(gsize);
              for (int cc = 0; cc < cpg; ++cc) {
                int ch = g * cpg + cc;
                for (int64_t j = 0; j < plane; ++j) {
                  size_t idx = base + size_t(cc) * plane + j;
                  S xhat = (px->val[idx] - mu) * inv;
                  S dxhat = self.grad[idx] * pg->val[size_t(ch)];
                  px->grad[idx] += inv * (dxhat - inv_m * sum_dxhat -
                                          xhat * inv_m * sum_dxhat_xhat);
                }
              }
            }
          }
      });

  for (int i = 0; i < n; ++i)
    for (int g = 0; g < groups; ++g) {
      size_t base = (size_t(i) * c + size_t(g) * cpg) * plane;
      S mu = S(0);
      for (int64_t j = 0; j < gsize; ++j) mu += x.data()[base + j];
      mu /= S(gsize);
      S var = S(0);
      for (int64_t j = 0; j < gsize; ++j) {
        S d = x.data()[base + j] - mu;
        var += d * d;
      }
      var /= S(gsize);
      S inv = S(1) / std::sqrt(var + eps);
      (*stats)[size_t(i) * groups * 2 + g * 2] = mu;
      (*stats)[size_t(i) * groups * 2 + g * 2 + 1] = inv;
      for (int cc = 0; cc < cpg; ++cc) {
        int ch = g * cpg + cc;
        S gm = gamma.data()[size_t(ch)];
        S bt = beta.data()[size_t(ch)];
        for (int64_t j = 0; j < plane; ++j) {
          size_t idx = base + size_t(cc) * plane + j;
          out.data()[idx] = gm * (x.data()[idx] - mu) * inv + bt;
        }
      }
    }
  return out;
}

}  // namespace handsight::nn
