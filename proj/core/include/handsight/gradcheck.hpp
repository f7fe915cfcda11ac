// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of the analytic gradients. Runs every
// registered layer scenario in 64-bit and reports the worst relative error
// per scenario. Used by the `gradcheck` CLI subcommand and the test suites.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "handsight/tensor.hpp"

namespace handsight::nn {

struct GradCheckResult {
  std::string scenario;
  double max_rel_error = 0.0;
  bool ok = false;
};

// loss_fn must rebuild the full forward graph from `leaf` on every call.
// Compares d loss / d leaf[i] against (f(x+e) - f(x-e)) / 2e elementwise.
template <typename S>
double max_rel_error(const std::function<Tensor<S>()>& loss_fn, Tensor<S>& leaf,
                     S eps) {
  Tensor<S> loss = loss_fn();
  loss.backward();
  std::vector<S> analytic = leaf.grad();

  double worst = 0.0;
  for (size_t i = 0; i < leaf.data().size(); ++i) {
    S keep = leaf.data()[i];
    leaf.data()[i] = keep + eps;
    double up = double(loss_fn().item());
    leaf.data()[i] = keep - eps;
    double down = double(loss_fn().item());
    leaf.data()[i] = keep;
    double fd = (up - down) / (2.0 * double(eps));
    double denom = std::max({1.0, std::abs(fd), std::abs(double(analytic[i]))});
    worst = std::max(worst, std::abs(fd - double(analytic[i])) / denom);
  }
  return worst;
}

// All layer scenarios at small shapes, double precision. threshold is the
// acceptance bound on the relative error.
std::vector<GradCheckResult> run_gradcheck_suite(double eps = 1e-5,
                                                 double threshold = 1e-5);

}  // namespace handsight::nn
