#pragma once

#include <cstdint>
#include <vector>

#include "pirsurf/common.hpp"
#include "pirsurf/image.hpp"

namespace pirsurf {

// 10*log10(1/MSE) with peak 1.0, over masked pixels when a mask is given.
// Identical images report the documented 99 dB cap.
real psnr(const Image& a, const Image& b, const std::vector<std::uint8_t>* mask = nullptr);

// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
// dynamic range 1, channel-averaged over the valid (fully-windowed) region.
real ssim(const Image& a, const Image& b);

struct AlbedoAlignment {
  Image aligned;      // pred * scale, clamped to [0,1]
  Rgb scale{1, 1, 1};  // per-channel mean(gt)/mean(pred) over the mask
  bool degenerate = false;  // a pred channel mean was zero (scale kept at 1)
};

AlbedoAlignment albedo_scale_align(const Image& pred, const Image& gt,
                                   const std::vector<std::uint8_t>& mask);

}  // namespace pirsurf
