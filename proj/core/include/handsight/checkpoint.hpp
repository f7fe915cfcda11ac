// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0
//
// CKPT container: name-keyed parameter blobs with shape prefixes, 32-bit
// little-endian floats, plus a free-form JSON metadata string. Optimizer
// moments ride along as extra entries when requested.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "handsight/nn.hpp"

namespace handsight {

struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

class Checkpoint {
 public:
  std::string meta;  // JSON text; empty means none

  void add(std::string name, std::vector<int> shape, std::vector<float> data);
  const CheckpointEntry* find(const std::string& name) const;
  const CheckpointEntry& at(const std::string& name) const;
  const std::vector<CheckpointEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<CheckpointEntry> entries_;
};

template <typename S>
void pack_params(const std::vector<nn::NamedParam<S>>& params, Checkpoint& ck) {
  for (const auto& np : params) {
    std::vector<float> data(np.param->t.data().size());
    for (size_t i = 0; i < data.size(); ++i)
      data[i] = float(np.param->t.data()[i]);
    ck.add(np.path, np.param->t.shape(), std::move(data));
  }
}

// Strict loading: every parameter must be present with an identical shape.
template <typename S>
void unpack_params(const Checkpoint& ck,
                   const std::vector<nn::NamedParam<S>>& params) {
  for (const auto& np : params) {
    const CheckpointEntry* e = ck.find(np.path);
    if (!e)
      throw std::runtime_error("checkpoint: missing parameter " + np.path);
    if (e->shape != np.param->t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + np.path);
    for (size_t i = 0; i < e->data.size(); ++i)
      np.param->t.data()[i] = S(e->data[i]);
  }
}

}  // namespace handsight
