// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0
//
// Layer set used by the denoiser, the image encoders, and the policy
// velocity net. Layers are value types owning their parameters; nets expose
// them through visit_params for the optimizer, checkpoints, and adapters.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "handsight/rng.hpp"
#include "handsight/tensor.hpp"

namespace handsight::nn {

template <typename S>
struct Param {
  Tensor<S> t;
  bool frozen = false;

  void init_zeros(std::vector<int> shape) { t = Tensor<S>::zeros(shape, true); }

  // Kaiming-uniform: U(-b, b) with b = sqrt(6 / fan_in).
  void init_kaiming(std::vector<int> shape, int fan_in, Rng& rng) {
    t = Tensor<S>::zeros(shape, true);
    double bound = std::sqrt(6.0 / double(fan_in));
    for (auto& v : t.data()) v = S(rng.uniform(-bound, bound));
  }

  void freeze() {
    frozen = true;
    t.set_requires_grad(false);
  }
};

template <typename S>
struct NamedParam {
  std::string path;
  Param<S>* param;
};

template <typename S>
using ParamVisitor = std::function<void(const std::string&, Param<S>&)>;

// Forward-pass context: training enables dropout, which draws from rng.
template <typename S>
struct ForwardCtx {
  bool training = false;
  Rng* rng = nullptr;
};

template <typename S>
struct LoraAdapter;

template <typename S>
Tensor<S> transposed_view(const Tensor<S>& m);

template <typename S>
struct Linear {
  Param<S> weight;  // [out, in]
  Param<S> bias;    // [out]
  std::shared_ptr<LoraAdapter<S>> lora;  // attached by lora::inject

  void init(int in_dim, int out_dim, Rng& rng) {
    weight.init_kaiming({out_dim, in_dim}, in_dim, rng);
    bias.init_zeros({out_dim});
  }

  int in_dim() const { return weight.t.dim(1); }
  int out_dim() const { return weight.t.dim(0); }

  Tensor<S> forward(const Tensor<S>& x, ForwardCtx<S> ctx = {}) const;

  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
    v(prefix + ".weight", weight);
    v(prefix + ".bias", bias);
  }
};

// Low-rank delta on a frozen projection: y += (alpha/r) * B (dropout(A x)).
// B starts at zero so injection leaves the function unchanged.
template <typename S>
struct LoraAdapter {
  Param<S> a;  // [r, in]
  Param<S> b;  // [out, r]
  int rank = 0;
  double alpha = 0.0;
  double dropout_p = 0.0;

  void init(int in_dim, int out_dim, int r, double alpha_in, double dropout_in,
            Rng& rng) {
    rank = r;
    alpha = alpha_in;
    dropout_p = dropout_in;
    a.init_kaiming({r, in_dim}, in_dim, rng);
    b.init_zeros({out_dim, r});
  }

  int64_t trainable_count() const {
    return int64_t(rank) * (a.t.dim(1) + b.t.dim(0));
  }

  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
    v(prefix + ".lora_A", a);
    v(prefix + ".lora_B", b);
  }
};

template <typename S>
Tensor<S> Linear<S>::forward(const Tensor<S>& x, ForwardCtx<S> ctx) const {
  Tensor<S> y = affine(x, weight.t, bias.t);
  if (lora) {
    Tensor<S> ax = matmul(x, /*A^T*/ transposed_view(lora->a.t));
    if (ctx.training && lora->dropout_p > 0.0 && ctx.rng)
      ax = dropout(ax, lora->dropout_p, true, *ctx.rng);
    Tensor<S> bax = matmul(ax, transposed_view(lora->b.t));
    y = add(y, scale(bax, S(lora->alpha / double(lora->rank))));
  }
  return y;
}

// Materialized transpose of a 2-D tensor (rare and small: adapter matrices).
template <typename S>
Tensor<S> transposed_view(const Tensor<S>& m) {
  if (m.shape().size() != 2) throw std::invalid_argument("transpose: need 2-D");
  int r = m.dim(0), c = m.dim(1);
  auto out = Tensor<S>::make_node(
      {c, r}, {m}, [pm = m.impl(), r, c](TensorImpl<S>& self) {
        if (!pm->requires_grad) return;
        pm->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            pm->grad[size_t(i) * c + j] += self.grad[size_t(j) * r + i];
      });
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.data()[size_t(j) * r + i] = m.data()[size_t(i) * c + j];
  return out;
}

template <typename S>
struct Conv2d {
  Param<S> weight;  // [out_c, in_c, k, k]
  Param<S> bias;    // [out_c]
  int stride = 1;
  int pad = 0;

  void init(int in_c, int out_c, int k, int stride_in, int pad_in, Rng& rng) {
    stride = stride_in;
    pad = pad_in;
    weight.init_kaiming({out_c, in_c, k, k}, in_c * k * k, rng);
    bias.init_zeros({out_c});
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    return conv2d(x, weight.t, bias.t, stride, pad);
  }

  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
    v(prefix + ".weight", weight);
    v(prefix + ".bias", bias);
  }
};

template <typename S>
struct GroupNorm {
  Param<S> gamma;
  Param<S> beta;
  int groups = 1;

  void init(int channels, int groups_in) {
    groups = groups_in;
    gamma.t = Tensor<S>::full({channels}, S(1));
    gamma.t.set_requires_grad(true);
    beta.init_zeros({channels});
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    return group_norm(x, gamma.t, beta.t, groups);
  }

  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
    v(prefix + ".gamma", gamma);
    v(prefix + ".beta", beta);
  }
};

// Single-head scaled dot-product attention over token sequences.
// Self-attention reads keys/values from x itself; cross-attention from a
// conditioning context. Projection names are the adapter injection contract.
template <typename S>
struct Attention {
  Linear<S> to_q, to_k, to_v, to_out;
  int d_model = 0;

  void init(int d_model_in, int d_ctx, Rng& rng) {
    d_model = d_model_in;
    to_q.init(d_model, d_model, rng);
    to_k.init(d_ctx, d_model, rng);
    to_v.init(d_ctx, d_model, rng);
    to_out.init(d_model, d_model, rng);
  }

  // x: [N, L, d_model]; ctx: [N, Lc, d_ctx].
  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& ctx,
                    ForwardCtx<S> fctx = {}) const {
    if (x.shape().size() != 3 || ctx.shape().size() != 3 ||
        x.dim(0) != ctx.dim(0) || x.dim(2) != d_model ||
        ctx.dim(2) != to_k.in_dim())
      throw std::invalid_argument("attention: bad shapes");
    int n = x.dim(0), l = x.dim(1), lc = ctx.dim(1);

    auto flat = [](const Tensor<S>& t, int rows, int cols) {
      return reshape(t, {rows, cols});
    };
    Tensor<S> q = to_q.forward(flat(x, n * l, d_model), fctx);
    Tensor<S> k = to_k.forward(flat(ctx, n * lc, to_k.in_dim()), fctx);
    Tensor<S> v = to_v.forward(flat(ctx, n * lc, to_v.in_dim()), fctx);
    q = reshape(q, {n, l, d_model});
    k = reshape(k, {n, lc, d_model});
    v = reshape(v, {n, lc, d_model});

    Tensor<S> logits = scale(bmm(q, k, /*transpose_b=*/true),
                             S(1.0 / std::sqrt(double(d_model))));
    Tensor<S> attn = softmax_lastdim(logits);
    Tensor<S> mixed = bmm(attn, v);
    Tensor<S> out = to_out.forward(flat(mixed, n * l, d_model), fctx);
    return reshape(out, {n, l, d_model});
  }

  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
    to_q.visit_params(prefix + ".to_q", v);
    to_k.visit_params(prefix + ".to_k", v);
    to_v.visit_params(prefix + ".to_v", v);
    to_out.visit_params(prefix + ".to_out", v);
  }

  void visit_projections(const std::string& prefix,
                         const std::function<void(const std::string&, Linear<S>&)>& v) {
    v(prefix + ".to_q", to_q);
    v(prefix + ".to_k", to_k);
    v(prefix + ".to_v", to_v);
    v(prefix + ".to_out", to_out);
  }
};

// FiLM conditioning: project an embedding to per-channel (scale, shift).
template <typename S>
struct FiLM {
  Linear<S> proj;  // emb -> 2*channels

  void init(int emb_dim, int channels, Rng& rng) {
    proj.init(emb_dim, 2 * channels, rng);
  }

  // x: [N,C,H,W]; emb: [N, emb_dim]
  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& emb,
                    ForwardCtx<S> fctx = {}) const {
    return film(x, proj.forward(emb, fctx));
  }

  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
    proj.visit_params(prefix + ".proj", v);
  }
};

// Sinusoidal embedding of integer timesteps, [N, dim]. Not differentiable
// (input construction).
template <typename S>
Tensor<S> sinusoidal_embedding(const std::vector<int>& steps, int dim) {
  int n = int(steps.size());
  Tensor<S> out = Tensor<S>::zeros({n, dim});
  int half = dim / 2;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < half; ++j) {
      double freq = std::exp(-std::log(10000.0) * double(j) / double(half));
      out.data()[size_t(i) * dim + j] = S(std::sin(steps[size_t(i)] * freq));
      out.data()[size_t(i) * dim + half + j] = S(std::cos(steps[size_t(i)] * freq));
    }
  return out;
}

template <typename S>
void collect_params(const std::function<void(const ParamVisitor<S>&)>& visit,
                    std::vector<NamedParam<S>>& out) {
  visit([&out](const std::string& path, Param<S>& p) {
    out.push_back({path, &p});
  });
}

}  // namespace handsight::nn
