// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#include "handsight/checkpoint.hpp"

#include <fstream>

#include "handsight/wire.hpp"

namespace handsight {

namespace {
constexpr char kMagic[4] = {'C', 'K', 'P', 'T'};
constexpr uint16_t kVersion = 1;
}  // namespace

void Checkpoint::add(std::string name, std::vector<int> shape,
                     std::vector<float> data) {
  if (nn::numel_of(shape) != int64_t(data.size()))
    throw std::invalid_argument("Checkpoint::add: shape/data mismatch for " + name);
  if (find(name))
    throw std::invalid_argument("Checkpoint::add: duplicate entry " + name);
  entries_.push_back({std::move(name), std::move(shape), std::move(data)});
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  const CheckpointEntry* e = find(name);
  if (!e) throw std::runtime_error("checkpoint: no entry named " + name);
  return *e;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  wire::put_magic(os, kMagic);
  wire::put_le<uint16_t>(os, kVersion);
  wire::put_le<uint32_t>(os, uint32_t(meta.size()));
  wire::put_bytes(os, meta.data(), meta.size());
  wire::put_le<uint32_t>(os, uint32_t(entries_.size()));
  for (const auto& e : entries_) {
    wire::put_le<uint16_t>(os, uint16_t(e.name.size()));
    wire::put_bytes(os, e.name.data(), e.name.size());
    wire::put_le<uint8_t>(os, uint8_t(e.shape.size()));
    for (int d : e.shape) wire::put_le<uint32_t>(os, uint32_t(d));
    for (float v : e.data) wire::put_f32(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  wire::expect_magic(is, kMagic, "checkpoint");
  uint16_t version = wire::get_le<uint16_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  Checkpoint ck;
  uint32_t meta_len = wire::get_le<uint32_t>(is);
  ck.meta.resize(meta_len);
  if (meta_len) wire::get_bytes(is, ck.meta.data(), meta_len);
  uint32_t count = wire::get_le<uint32_t>(is);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    uint16_t name_len = wire::get_le<uint16_t>(is);
    e.name.resize(name_len);
    wire::get_bytes(is, e.name.data(), name_len);
    uint8_t ndim = wire::get_le<uint8_t>(is);
    e.shape.resize(ndim);
    int64_t numel = 1;
    for (auto& d : e.shape) {
      d = int(wire::get_le<uint32_t>(is));
      numel *= d;
    }
    e.data.resize(size_t(numel));
    for (auto& v : e.data) v = wire::get_f32(is);
    ck.entries_.push_back(std::move(e));
  }
  return ck;
}

}  // namespace handsight
