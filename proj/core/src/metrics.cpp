#include "pirsurf/metrics.hpp"

namespace pirsurf {

real psnr(const Image& a, const Image& b, const std::vector<std::uint8_t>* mask) {
  if (a.width != b.width || a.height != b.height || a.width == 0)
    throw PirError("psnr: image shapes differ");
  if (mask && mask->size() != std::size_t(a.width) * a.height)
    throw PirError("psnr: mask shape differs");
  double acc = 0;
  std::int64_t count = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (mask && !(*mask)[std::size_t(y) * a.width + x]) continue;
      const float* pa = a.pixel(x, y);
      const float* pb = b.pixel(x, y);
      for (int c = 0; c < 3; ++c) acc += sqr(real(pa[c]) - real(pb[c]));
      count += 3;
    }
  if (count == 0) throw PirError("psnr: empty mask");
  double mse = acc / count;
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<real> gaussian_kernel(int radius, real sigma) {
  std::vector<real> k(2 * radius + 1);
  real sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * sqr(i / sigma));
    sum += k[i + radius];
  }
  for (real& v : k) v /= sum;
  return k;
}

// separable filter, same-size output (borders handled by the caller
// restricting to the valid region)
void filter2(const std::vector<real>& src, int w, int h, const std::vector<real>& k,
             std::vector<real>& tmp, std::vector<real>& dst) {
  int radius = int(k.size() / 2);
  tmp.assign(src.size(), 0.0);
  dst.assign(src.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      real acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        int xx = clamp(real(x + i), 0.0, real(w - 1));
        acc += k[i + radius] * src[std::size_t(y) * w + int(xx)];
      }
      tmp[std::size_t(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      real acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        int yy = clamp(real(y + i), 0.0, real(h - 1));
        acc += k[i + radius] * tmp[std::size_t(int(yy)) * w + x];
      }
      dst[std::size_t(y) * w + x] = acc;
    }
}

}  // namespace

real ssim(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw PirError("ssim: image shapes differ");
  const int w = a.width, h = a.height;
  const int radius = 5;  // 11x11 window
  if (w < 2 * radius + 1 || h < 2 * radius + 1)
    throw PirError("ssim: image smaller than the 11x11 window");
  const real c1 = sqr(0.01), c2 = sqr(0.03);
  auto kernel = gaussian_kernel(radius, 1.5);

  std::vector<real> x(std::size_t(w) * h), y(std::size_t(w) * h);
  std::vector<real> xx(x.size()), yy(x.size()), xy(x.size());
  std::vector<real> mx, my, mxx, myy, mxy, tmp;

  real total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    for (int p = 0; p < w * h; ++p) {
      x[p] = a.data[std::size_t(p) * 3 + ch];
      y[p] = b.data[std::size_t(p) * 3 + ch];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    filter2(x, w, h, kernel, tmp, mx);
    filter2(y, w, h, kernel, tmp, my);
    filter2(xx, w, h, kernel, tmp, mxx);
    filter2(yy, w, h, kernel, tmp, myy);
    filter2(xy, w, h, kernel, tmp, mxy);

    real acc = 0;
    std::int64_t count = 0;
    for (int py = radius; py < h - radius; ++py)
      for (int px = radius; px < w - radius; ++px) {
        std::size_t p = std::size_t(py) * w + px;
        real ux = mx[p], uy = my[p];
        real vx = mxx[p] - ux * ux;
        real vy = myy[p] - uy * uy;
        real cxy = mxy[p] - ux * uy;
        real num = (2 * ux * uy + c1) * (2 * cxy + c2);
        real den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
        acc += num / den;
        ++count;
      }
    total += acc / count;
  }
  return total / 3.0;
}

AlbedoAlignment albedo_scale_align(const Image& pred, const Image& gt,
                                   const std::vector<std::uint8_t>& mask) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw PirError("albedo_scale_align: image shapes differ");
  if (mask.size() != std::size_t(pred.width) * pred.height)
    throw PirError("albedo_scale_align: mask shape differs");
  Rgb mean_pred{0, 0, 0}, mean_gt{0, 0, 0};
  std::int64_t count = 0;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      if (!mask[std::size_t(y) * pred.width + x]) continue;
      mean_pred += pred.at(x, y);
      mean_gt += gt.at(x, y);
      ++count;
    }
  if (count == 0) throw PirError("albedo_scale_align: empty mask");
  AlbedoAlignment out;
  for (int c = 0; c < 3; ++c) {
    if (mean_pred[c] <= 0) {
      out.scale[c] = 1.0;
      out.degenerate = true;
    } else {
      out.scale[c] = mean_gt[c] / mean_pred[c];
    }
  }
  out.aligned = pred;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      Rgb v = pred.at(x, y) * out.scale;
      out.aligned.set(x, y, clamp(v, 0.0, 1.0));
    }
  return out;
}

}  // namespace pirsurf
