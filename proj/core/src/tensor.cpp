// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#include "handsight/tensor.hpp"

namespace handsight::nn {

bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace handsight::nn
