// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#include "handsight/gradcheck.hpp"

#include "handsight/nn.hpp"
#include "handsight/rng.hpp"

namespace handsight::nn {

namespace {

using T = Tensor<double>;

struct Scenario {
  std::string name;
  // Returns worst relative error across all checked leaves.
  std::function<double(double eps)> run;
};

double check_leaves(const std::function<T()>& loss_fn, std::vector<T*> leaves,
                    double eps) {
  double worst = 0.0;
  for (T* leaf : leaves) {
    // Fresh grads per leaf; loss_fn rebuilds the graph.
    for (T* l : leaves) l->zero_grad();
    worst = std::max(worst, max_rel_error<double>(loss_fn, *leaf, eps));
  }
  return worst;
}

std::vector<Scenario> build_scenarios() {
  std::vector<Scenario> all;

  all.push_back({"affine", [](double eps) {
    Rng rng(11);
    T x = T::randn({3, 5}, rng, true);
    T w = T::randn({4, 5}, rng, true);
    T b = T::randn({4}, rng, true);
    auto loss = [&] { return mean(mul(affine(x, w, b), affine(x, w, b))); };
    return check_leaves(loss, {&x, &w, &b}, eps);
  }});

  all.push_back({"linear_with_lora", [](double eps) {
    Rng rng(12);
    Linear<double> lin;
    lin.init(5, 4, rng);
    lin.lora = std::make_shared<LoraAdapter<double>>();
    lin.lora->init(5, 4, 2, 4.0, 0.0, rng);
    for (auto& v : lin.lora->b.t.data()) v = rng.normal();  // nonzero B
    T x = T::randn({3, 5}, rng, true);
    auto loss = [&] { return mean(mul(lin.forward(x), lin.forward(x))); };
    return check_leaves(loss, {&x, &lin.weight.t, &lin.lora->a.t, &lin.lora->b.t},
                        eps);
  }});

  all.push_back({"conv2d_s1p1", [](double eps) {
    Rng rng(13);
    T x = T::randn({2, 3, 5, 5}, rng, true);
    T w = T::randn({4, 3, 3, 3}, rng, true);
    T b = T::randn({4}, rng, true);
    auto loss = [&] {
      T y = conv2d(x, w, b, 1, 1);
      return mean(mul(y, y));
    };
    return check_leaves(loss, {&x, &w, &b}, eps);
  }});

  all.push_back({"conv2d_s2p1", [](double eps) {
    Rng rng(14);
    T x = T::randn({2, 2, 6, 6}, rng, true);
    T w = T::randn({3, 2, 3, 3}, rng, true);
    T b = T::randn({3}, rng, true);
    auto loss = [&] {
      T y = conv2d(x, w, b, 2, 1);
      return mean(mul(y, y));
    };
    return check_leaves(loss, {&x, &w, &b}, eps);
  }});

  all.push_back({"group_norm", [](double eps) {
    Rng rng(15);
    T x = T::randn({2, 4, 3, 3}, rng, true);
    T g = T::randn({4}, rng, true);
    T b = T::randn({4}, rng, true);
    auto loss = [&] {
      T y = group_norm(x, g, b, 2);
      return mean(mul(y, y));
    };
    return check_leaves(loss, {&x, &g, &b}, eps);
  }});

  all.push_back({"attention_self", [](double eps) {
    Rng rng(16);
    Attention<double> attn;
    attn.init(4, 4, rng);
    T x = T::randn({2, 3, 4}, rng, true);
    auto loss = [&] {
      T y = attn.forward(x, x);
      return mean(mul(y, y));
    };
    return check_leaves(loss,
                        {&x, &attn.to_q.weight.t, &attn.to_k.weight.t,
                         &attn.to_v.weight.t, &attn.to_out.weight.t,
                         &attn.to_out.bias.t},
                        eps);
  }});

  all.push_back({"attention_cross", [](double eps) {
    Rng rng(17);
    Attention<double> attn;
    attn.init(4, 6, rng);
    T x = T::randn({2, 3, 4}, rng, true);
    T ctx = T::randn({2, 2, 6}, rng, true);
    auto loss = [&] {
      T y = attn.forward(x, ctx);
      return mean(mul(y, y));
    };
    return check_leaves(loss, {&x, &ctx, &attn.to_k.weight.t, &attn.to_v.weight.t},
                        eps);
  }});

  all.push_back({"film", [](double eps) {
    Rng rng(18);
    T x = T::randn({2, 3, 2, 2}, rng, true);
    T ss = T::randn({2, 6}, rng, true);
    auto loss = [&] {
      T y = film(x, ss);
      return mean(mul(y, y));
    };
    return check_leaves(loss, {&x, &ss}, eps);
  }});

  all.push_back({"silu", [](double eps) {
    Rng rng(19);
    T x = T::randn({3, 4}, rng, true);
    auto loss = [&] { return mean(mul(silu(x), silu(x))); };
    return check_leaves(loss, {&x}, eps);
  }});

  all.push_back({"softmax", [](double eps) {
    Rng rng(20);
    T x = T::randn({3, 5}, rng, true);
    T t = T::randn({3, 5}, rng, false);
    auto loss = [&] { return mse_loss(softmax_lastdim(x), t); };
    return check_leaves(loss, {&x}, eps);
  }});

  all.push_back({"bmm", [](double eps) {
    Rng rng(21);
    T a = T::randn({2, 3, 4}, rng, true);
    T b = T::randn({2, 4, 2}, rng, true);
    T c = T::randn({2, 3, 4}, rng, true);
    auto loss = [&] {
      T y = bmm(a, b);
      T z = bmm(a, c, true);
      return add(mean(mul(y, y)), mean(mul(z, z)));
    };
    return check_leaves(loss, {&a, &b, &c}, eps);
  }});

  all.push_back({"elementwise", [](double eps) {
    Rng rng(22);
    T a = T::randn({4, 3}, rng, true);
    T b = T::randn({4, 3}, rng, true);
    auto loss = [&] {
      T y = add(mul(a, b), scale(sub(a, b), 0.7));
      return mean(mul(y, y));
    };
    return check_leaves(loss, {&a, &b}, eps);
  }});

  all.push_back({"upsample_concat", [](double eps) {
    Rng rng(23);
    T a = T::randn({1, 2, 2, 2}, rng, true);
    T b = T::randn({1, 3, 4, 4}, rng, true);
    auto loss = [&] {
      T y = concat_channels(upsample_nearest2x(a), b);
      return mean(mul(y, y));
    };
    return check_leaves(loss, {&a, &b}, eps);
  }});

  all.push_back({"token_maps", [](double eps) {
    Rng rng(24);
    T x = T::randn({2, 3, 2, 2}, rng, true);
    auto loss = [&] {
      T y = map_from_tokens(tokens_from_map(x), 2, 2);
      return mean(mul(y, y));
    };
    return check_leaves(loss, {&x}, eps);
  }});

  all.push_back({"dropout", [](double eps) {
    Rng rng(25);
    T x = T::randn({4, 4}, rng, true);
    auto loss = [&] {
      Rng mask_rng(77);  // same mask on every rebuild
      T y = dropout(x, 0.4, true, mask_rng);
      return mean(mul(y, y));
    };
    return check_leaves(loss, {&x}, eps);
  }});

  all.push_back({"mse_sum_mean", [](double eps) {
    Rng rng(26);
    T a = T::randn({3, 3}, rng, true);
    T b = T::randn({3, 3}, rng, true);
    auto loss = [&] { return add(mse_loss(a, b), scale(sum(mul(a, a)), 0.01)); };
    return check_leaves(loss, {&a, &b}, eps);
  }});

  return all;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(double eps, double threshold) {
  std::vector<GradCheckResult> results;
  for (auto& scenario : build_scenarios()) {
    GradCheckResult r;
    r.scenario = scenario.name;
    r.max_rel_error = scenario.run(eps);
    r.ok = r.max_rel_error < threshold;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace handsight::nn
