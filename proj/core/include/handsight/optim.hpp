// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "handsight/nn.hpp"

namespace handsight::nn {

// Adam with bias correction. Moments are keyed by parameter path so the
// state survives re-collection and checkpointing. Frozen parameters are
// skipped outright.
template <typename S>
class Adam {
 public:
  struct Settings {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(Settings s = {}) : settings_(s) {}

  Settings& settings() { return settings_; }
  const Settings& settings() const { return settings_; }
  int64_t step_count() const { return step_; }

  void step(const std::vector<NamedParam<S>>& params) {
    ++step_;
    double bc1 = 1.0 - std::pow(settings_.beta1, double(step_));
    double bc2 = 1.0 - std::pow(settings_.beta2, double(step_));
    for (const auto& np : params) {
      Param<S>& p = *np.param;
      if (p.frozen || !p.t.requires_grad() || !p.t.has_grad()) continue;
      Moments& m = moments_[np.path];
      if (m.m.empty()) {
        m.m.assign(size_t(p.t.numel()), 0.0);
        m.v.assign(size_t(p.t.numel()), 0.0);
      }
      if (int64_t(m.m.size()) != p.t.numel())
        throw std::logic_error("Adam: moment shape mismatch for " + np.path);
      auto& val = p.t.data();
      auto& grad = p.t.grad();
      for (size_t i = 0; i < val.size(); ++i) {
        double g = double(grad[i]);
        m.m[i] = settings_.beta1 * m.m[i] + (1.0 - settings_.beta1) * g;
        m.v[i] = settings_.beta2 * m.v[i] + (1.0 - settings_.beta2) * g * g;
        double mhat = m.m[i] / bc1;
        double vhat = m.v[i] / bc2;
        val[i] -= S(settings_.lr * mhat / (std::sqrt(vhat) + settings_.eps));
      }
    }
  }

  void zero_grad(const std::vector<NamedParam<S>>& params) {
    for (const auto& np : params) np.param->t.zero_grad();
  }

  // Moment access for optional checkpoint embedding.
  struct Moments {
    std::vector<double> m, v;
  };
  const std::unordered_map<std::string, Moments>& moments() const {
    return moments_;
  }
  std::unordered_map<std::string, Moments>& moments() { return moments_; }
  void set_step_count(int64_t s) { step_ = s; }

 private:
  Settings settings_;
  int64_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace handsight::nn
