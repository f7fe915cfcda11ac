// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "handsight/gradcheck.hpp"
#include "handsight/nn.hpp"
#include "handsight/optim.hpp"
#include "handsight/rng.hpp"
#include "handsight/tensor.hpp"

using namespace handsight;
using nn::Tensor;

TEST_CASE("tensor shape and data invariants") {
  auto t = Tensor<float>::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK_THROWS(Tensor<float>::from_data({2, 2}, {1.f, 2.f, 3.f}));
  CHECK_THROWS(nn::reshape(t, {5, 5}));
  CHECK_THROWS(t.item());
}

TEST_CASE("backward of sum(W x) broadcasts x into dW") {
  auto w = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto x = Tensor<double>::from_data({3, 1}, {0.5, -1.0, 2.0});
  auto loss = nn::sum(nn::matmul(w, x));
  loss.backward();
  for (int i = 0; i < 2; ++i) {
    CHECK(w.grad()[3 * i + 0] == doctest::Approx(0.5));
    CHECK(w.grad()[3 * i + 1] == doctest::Approx(-1.0));
    CHECK(w.grad()[3 * i + 2] == doctest::Approx(2.0));
  }
}

TEST_CASE("backward contract violations") {
  auto a = Tensor<double>::from_data({2}, {1, 2}, true);
  auto y = nn::scale(a, 2.0);
  CHECK_THROWS_AS(y.backward(), std::logic_error);  // non-scalar

  auto loss = nn::sum(y);
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), std::logic_error);  // second call
}

TEST_CASE("finite differences pass for every layer type (64-bit shadow mode)") {
  auto results = nn::run_gradcheck_suite(1e-5, 1e-5);
  CHECK(results.size() >= 10);
  for (const auto& r : results) {
    INFO(r.scenario, " max_rel_error=", r.max_rel_error);
    CHECK(r.ok);
  }
}

TEST_CASE("finite differences at 32-bit tolerances") {
  Rng rng(31);
  auto x = Tensor<float>::randn({2, 3, 4, 4}, rng, true);
  auto w = Tensor<float>::randn({4, 3, 3, 3}, rng, true);
  auto b = Tensor<float>::randn({4}, rng, true);
  auto loss_fn = [&] {
    auto y = nn::conv2d(x, w, b, 1, 1);
    return nn::mean(nn::mul(y, y));
  };
  w.zero_grad();
  double err = nn::max_rel_error<float>(loss_fn, w, 1e-3f);
  CHECK(err < 1e-2);
}

TEST_CASE("frozen parameters receive no gradient and no update") {
  Rng rng(32);
  nn::Linear<float> lin;
  lin.init(4, 3, rng);
  lin.weight.freeze();

  auto x = Tensor<float>::randn({2, 4}, rng);
  auto loss = nn::mean(nn::mul(lin.forward(x), lin.forward(x)));
  loss.backward();
  CHECK_FALSE(lin.weight.t.has_grad());
  CHECK(lin.bias.t.has_grad());

  std::vector<float> before = lin.weight.t.data();
  std::vector<nn::NamedParam<float>> params{{"w", &lin.weight}, {"b", &lin.bias}};
  nn::Adam<float> opt;
  opt.step(params);
  CHECK(lin.weight.t.data() == before);
  // bias moved
  bool bias_changed = false;
  for (float v : lin.bias.t.data()) bias_changed = bias_changed || v != 0.0f;
  CHECK(bias_changed);
}

TEST_CASE("adam: zero gradient leaves parameter unchanged") {
  nn::Param<float> p;
  p.init_zeros({4});
  for (auto& v : p.t.data()) v = 1.5f;
  p.t.grad();  // allocate zero grads
  std::vector<nn::NamedParam<float>> params{{"p", &p}};
  nn::Adam<float> opt;
  opt.step(params);
  for (float v : p.t.data()) CHECK(v == 1.5f);
}

TEST_CASE("adam: first step matches hand computation") {
  nn::Param<double> p;
  p.init_zeros({3});
  p.t.data() = {1.0, 2.0, 3.0};
  p.t.grad() = {0.4, -0.2, 0.0};
  std::vector<nn::NamedParam<double>> params{{"p", &p}};
  nn::Adam<double>::Settings s;
  s.lr = 0.01;
  nn::Adam<double> opt(s);
  opt.step(params);
  // With zero moments the bias-corrected update is -lr * g / (|g| + eps).
  for (int i = 0; i < 3; ++i) {
    double g = std::vector<double>{0.4, -0.2, 0.0}[size_t(i)];
    double want = std::vector<double>{1.0, 2.0, 3.0}[size_t(i)];
    if (g != 0.0) want -= 0.01 * g / (std::abs(g) + 1e-8);
    CHECK(p.t.data()[size_t(i)] == doctest::Approx(want).epsilon(1e-7));
  }
}

TEST_CASE("adam: converges on quadratic bowl") {
  nn::Param<float> p;
  p.init_zeros({8});
  Rng rng(33);
  // Start well away from the optimum so 200 steps never reach the
  // oscillation floor around zero.
  for (auto& v : p.t.data())
    v = float(rng.uniform(1.5, 2.0)) * (rng.uniform() < 0.5 ? -1.0f : 1.0f);
  std::vector<nn::NamedParam<float>> params{{"p", &p}};
  nn::Adam<float>::Settings s;
  s.lr = 0.005;
  nn::Adam<float> opt(s);

  auto norm_of = [&] {
    double acc = 0;
    for (float v : p.t.data()) acc += double(v) * v;
    return std::sqrt(acc);
  };
  const double initial = norm_of();
  double prev = initial;
  int violations = 0;
  for (int step = 0; step < 200; ++step) {
    opt.zero_grad(params);
    auto loss = nn::sum(nn::mul(p.t, p.t));
    loss.backward();
    opt.step(params);
    double cur = norm_of();
    if (step >= 20 && cur > prev) ++violations;
    prev = cur;
  }
  CHECK(violations == 0);
  CHECK(prev < 0.65 * initial);
}

TEST_CASE("attention: single key/value ignores the query") {
  Rng rng(34);
  nn::Attention<double> attn;
  attn.init(4, 4, rng);
  auto ctx = Tensor<double>::randn({1, 1, 4}, rng);
  auto x1 = Tensor<double>::randn({1, 3, 4}, rng);
  auto x2 = Tensor<double>::randn({1, 3, 4}, rng);
  auto y1 = attn.forward(x1, ctx);
  auto y2 = attn.forward(x2, ctx);
  for (size_t i = 0; i < y1.data().size(); ++i)
    CHECK(y1.data()[i] == doctest::Approx(y2.data()[i]).epsilon(1e-12));
  // All query tokens see the same single value.
  for (int l = 1; l < 3; ++l)
    for (int d = 0; d < 4; ++d)
      CHECK(y1.data()[size_t(l) * 4 + d] == doctest::Approx(y1.data()[size_t(d)]));
}

TEST_CASE("attention: uniform keys give uniform weights") {
  Rng rng(35);
  nn::Attention<double> attn;
  attn.init(4, 4, rng);
  // Zero key projection makes every logit identical.
  for (auto& v : attn.to_k.weight.t.data()) v = 0.0;
  for (auto& v : attn.to_k.bias.t.data()) v = 0.0;

  auto ctx = Tensor<double>::randn({1, 5, 4}, rng);
  auto x = Tensor<double>::randn({1, 2, 4}, rng);
  auto y = attn.forward(x, ctx);

  // Expected: out-projection of the mean value vector.
  auto v = attn.to_v.forward(nn::reshape(ctx, {5, 4}));
  std::vector<double> mean_v(4, 0.0);
  for (int t = 0; t < 5; ++t)
    for (int d = 0; d < 4; ++d) mean_v[size_t(d)] += v.data()[size_t(t) * 4 + d] / 5.0;
  auto mixed = Tensor<double>::from_data({1, 4}, mean_v);
  auto want = attn.to_out.forward(mixed);
  for (int l = 0; l < 2; ++l)
    for (int d = 0; d < 4; ++d)
      CHECK(y.data()[size_t(l) * 4 + d] ==
            doctest::Approx(want.data()[size_t(d)]).epsilon(1e-6));
}

TEST_CASE("attention matches naive dense oracle") {
  Rng rng(36);
  nn::Attention<double> attn;
  attn.init(3, 5, rng);
  auto x = Tensor<double>::randn({2, 4, 3}, rng);
  auto ctx = Tensor<double>::randn({2, 2, 5}, rng);
  auto got = attn.forward(x, ctx);

  auto project = [](const nn::Linear<double>& lin, const std::vector<double>& in,
                    int rows, int in_dim) {
    int out_dim = lin.out_dim();
    std::vector<double> out(size_t(rows) * out_dim, 0.0);
    for (int r = 0; r < rows; ++r)
      for (int o = 0; o < out_dim; ++o) {
        double acc = lin.bias.t.data()[size_t(o)];
        for (int i = 0; i < in_dim; ++i)
          acc += in[size_t(r) * in_dim + i] * lin.weight.t.data()[size_t(o) * in_dim + i];
        out[size_t(r) * out_dim + o] = acc;
      }
    return out;
  };

  for (int b = 0; b < 2; ++b) {
    std::vector<double> xb(x.data().begin() + b * 12, x.data().begin() + (b + 1) * 12);
    std::vector<double> cb(ctx.data().begin() + b * 10, ctx.data().begin() + (b + 1) * 10);
    auto q = project(attn.to_q, xb, 4, 3);
    auto k = project(attn.to_k, cb, 2, 5);
    auto v = project(attn.to_v, cb, 2, 5);
    for (int l = 0; l < 4; ++l) {
      double logits[2];
      for (int t = 0; t < 2; ++t) {
        double acc = 0;
        for (int d = 0; d < 3; ++d) acc += q[size_t(l) * 3 + d] * k[size_t(t) * 3 + d];
        logits[t] = acc / std::sqrt(3.0);
      }
      double mx = std::max(logits[0], logits[1]);
      double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
      double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
      std::vector<double> mixed(3);
      for (int d = 0; d < 3; ++d)
        mixed[size_t(d)] = w0 * v[size_t(d)] + w1 * v[size_t(3 + d)];
      auto out_row = project(attn.to_out, mixed, 1, 3);
      for (int d = 0; d < 3; ++d)
        CHECK(got.data()[size_t(b) * 12 + size_t(l) * 3 + d] ==
              doctest::Approx(out_row[size_t(d)]).epsilon(1e-9));
    }
  }
}

TEST_CASE("no-grad mode builds no graph") {
  Rng rng(37);
  auto w = Tensor<float>::randn({3, 3}, rng, true);
  nn::NoGradGuard guard;
  auto y = nn::matmul(w, w);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("fixed seed gives a bit-identical training trajectory") {
  auto run = [] {
    Rng rng(97);
    nn::Linear<float> lin;
    lin.init(6, 1, rng);
    std::vector<nn::NamedParam<float>> params;
    lin.visit_params("lin", [&](const std::string& n, nn::Param<float>& p) {
      params.push_back({n, &p});
    });
    nn::Adam<float> opt;
    for (int step = 0; step < 30; ++step) {
      auto x = Tensor<float>::randn({4, 6}, rng);
      auto target = Tensor<float>::randn({4, 1}, rng);
      opt.zero_grad(params);
      auto loss = nn::mse_loss(lin.forward(x), target);
      loss.backward();
      opt.step(params);
    }
    return lin.weight.t.data();
  };
  CHECK(run() == run());
}

TEST_CASE("sinusoidal embedding is deterministic and bounded") {
  auto e = nn::sinusoidal_embedding<float>({0, 1, 50}, 8);
  CHECK(e.shape() == std::vector<int>{3, 8});
  for (float v : e.data()) CHECK(std::abs(v) <= 1.0f);
  // t = 0: all sines 0, all cosines 1.
  for (int j = 0; j < 4; ++j) {
    CHECK(e.data()[size_t(j)] == 0.0f);
    CHECK(e.data()[size_t(4 + j)] == 1.0f);
  }
}
