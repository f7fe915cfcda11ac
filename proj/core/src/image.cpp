// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#include "handsight/image.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace handsight {

ImageBuffer ImageBuffer::filled(int h, int w, uint8_t r, uint8_t g, uint8_t b) {
  ImageBuffer img(h, w);
  for (size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

void write_ppm(const std::string& path, const ImageBuffer& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()),
           static_cast<std::streamsize>(img.rgb.size()));
  if (!os) throw std::runtime_error("write_ppm: write failed for " + path);
}

ImageBuffer read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (maxval != 255 || w <= 0 || h <= 0)
    throw std::runtime_error("read_ppm: unsupported header in " + path);
  is.get();  // single whitespace after maxval
  ImageBuffer img(h, w);
  is.read(reinterpret_cast<char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  if (!is) throw std::runtime_error("read_ppm: truncated pixel data in " + path);
  return img;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("psnr: shape mismatch");
  double se = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    double d = double(a.rgb[i]) - double(b.rgb[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  double mse = se / double(a.rgb.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

ImageBuffer mean_image(std::span<const ImageBuffer> images) {
  if (images.empty()) throw std::invalid_argument("mean_image: empty input");
  ImageBuffer out(images[0].height, images[0].width);
  std::vector<double> acc(out.rgb.size(), 0.0);
  for (const auto& img : images) {
    if (img.height != out.height || img.width != out.width)
      throw std::invalid_argument("mean_image: shape mismatch");
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += img.rgb[i];
  }
  for (size_t i = 0; i < acc.size(); ++i)
    out.rgb[i] = static_cast<uint8_t>(std::lround(acc[i] / double(images.size())));
  return out;
}

double mean_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("mean_abs_diff: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i)
    acc += std::abs(double(a.rgb[i]) - double(b.rgb[i]));
  return acc / (255.0 * double(a.rgb.size()));
}

}  // namespace handsight
