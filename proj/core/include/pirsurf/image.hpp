#pragma once

#include <string>
#include <vector>

#include "pirsurf/common.hpp"

namespace pirsurf {

// 3-channel float image, row-major, row 0 at the top.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // width*height*3

  Image() = default;
  Image(int w, int h, float fill = 0.f) : width(w), height(h), data(std::size_t(w) * h * 3, fill) {}

  float* pixel(int x, int y) { return data.data() + (std::size_t(y) * width + x) * 3; }
  const float* pixel(int x, int y) const { return data.data() + (std::size_t(y) * width + x) * 3; }

  Rgb at(int x, int y) const {
    const float* p = pixel(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, const Rgb& c) {
    float* p = pixel(x, y);
    p[0] = float(c.x);
    p[1] = float(c.y);
    p[2] = float(c.z);
  }
};

// IEC 61966-2-1 transfer curve.
real srgb_to_linear(real s);
real linear_to_srgb(real l);
real d_linear_to_srgb(real l);  // derivative of the encode curve
Rgb srgb_to_linear(const Rgb& c);
Rgb linear_to_srgb(const Rgb& c);

// PFM: little-endian float map ("PF" header, negative scale), rows stored
// bottom-to-top as usual. Round trips are bit exact.
Image load_pfm(const std::string& path);
void save_pfm(const std::string& path, const Image& img);

// PNG: 8-bit RGB (gray and RGBA inputs are expanded/stripped). Values are
// the sRGB-encoded bytes mapped to [0,1]; callers decide when to linearize.
Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& img);

// 8-bit mask PNG; returns 0/1 per pixel after thresholding at 128.
std::vector<std::uint8_t> load_mask_png(const std::string& path, int* width, int* height);
void save_mask_png(const std::string& path, const std::vector<std::uint8_t>& mask, int width,
                   int height);

}  // namespace pirsurf
