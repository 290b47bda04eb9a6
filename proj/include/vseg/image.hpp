#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/common.hpp"

namespace vseg {

// Planar float image, values in [0,1], layout (c, h, w).
struct Image {
  int c = 0, h = 0, w = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c_, int h_, int w_, float fill = 0.f)
      : c(c_), h(h_), w(w_), data(std::size_t(c_) * h_ * w_, fill) {}

  float at(int ch, int y, int x) const {
    return data[(std::size_t(ch) * h + y) * w + x];
  }
  float& at(int ch, int y, int x) { return data[(std::size_t(ch) * h + y) * w + x]; }
  std::size_t size() const { return data.size(); }
  bool same_extents(const Image& o) const { return c == o.c && h == o.h && w == o.w; }
};

// Class-index map, one byte per pixel.
struct LabelMap {
  int h = 0, w = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(int h_, int w_, std::uint8_t fill = 0)
      : h(h_), w(w_), data(std::size_t(h_) * w_, fill) {}

  std::uint8_t at(int y, int x) const { return data[std::size_t(y) * w + x]; }
  std::uint8_t& at(int y, int x) { return data[std::size_t(y) * w + x]; }
};

// Binary portable pixmaps: "P6\n<W> <H>\n255\n" + RGB bytes. Frames are
// quantized to 8 bits with round(v*255).
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// Binary portable graymaps (P5), pixel value = class index.
void write_pgm(const std::string& path, const LabelMap& labels);
LabelMap read_pgm(const std::string& path);

std::uint8_t quantize8(float v);

}  // namespace vseg
