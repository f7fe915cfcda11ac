// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace handsight {

// H x W x 3 interleaved RGB, 8-bit channels in [0, 255].
struct ImageBuffer {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> rgb;

  ImageBuffer() = default;
  ImageBuffer(int h, int w) : height(h), width(w), rgb(size_t(h) * w * 3, 0) {}

  static ImageBuffer filled(int h, int w, uint8_t r, uint8_t g, uint8_t b);

  uint8_t* pixel(int y, int x) { return rgb.data() + 3 * (size_t(y) * width + x); }
  const uint8_t* pixel(int y, int x) const {
    return rgb.data() + 3 * (size_t(y) * width + x);
  }

  bool operator==(const ImageBuffer& other) const = default;
};

// Binary PPM (P6), maxval 255.
void write_ppm(const std::string& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::string& path);

// Peak signal-to-noise ratio in dB over all channels; +inf for identical
// buffers. Throws on shape mismatch.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

// Per-pixel-channel average, rounded to nearest.
ImageBuffer mean_image(std::span<const ImageBuffer> images);

// Mean absolute difference in normalized units ([0,1] per channel).
double mean_abs_diff(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace handsight
