#include "pirsurf/image.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>

namespace pirsurf {

real srgb_to_linear(real s) {
  if (s <= 0.04045) return s / 12.92;
  return std::pow((s + 0.055) / 1.055, 2.4);
}

real linear_to_srgb(real l) {
  if (l <= 0.0031308) return l * 12.92;
  return 1.055 * std::pow(l, 1.0 / 2.4) - 0.055;
}

real d_linear_to_srgb(real l) {
  if (l <= 0.0031308) return 12.92;
  return 1.055 / 2.4 * std::pow(std::max(l, 1e-12), 1.0 / 2.4 - 1.0);
}

Rgb srgb_to_linear(const Rgb& c) {
  return {srgb_to_linear(c.x), srgb_to_linear(c.y), srgb_to_linear(c.z)};
}

Rgb linear_to_srgb(const Rgb& c) {
  return {linear_to_srgb(c.x), linear_to_srgb(c.y), linear_to_srgb(c.z)};
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_pfm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw PirError("cannot open PFM file: " + path);
  char tag[3] = {};
  int w = 0, h = 0;
  double scale = 0;
  if (std::fscanf(f.get(), "%2s %d %d %lf", tag, &w, &h, &scale) != 4)
    throw PirError("malformed PFM header: " + path);
  if (std::strcmp(tag, "PF") != 0) throw PirError("not a color PFM: " + path);
  if (w <= 0 || h <= 0) throw PirError("non-positive PFM dimensions: " + path);
  if (scale > 0) throw PirError("big-endian PFM unsupported: " + path);
  std::fgetc(f.get());  // single whitespace after the scale
  Image img(w, h);
  std::vector<float> row(std::size_t(w) * 3);
  for (int y = h - 1; y >= 0; --y) {  // PFM rows are bottom-up
    if (std::fread(row.data(), sizeof(float), row.size(), f.get()) != row.size())
      throw PirError("truncated PFM data: " + path);
    std::memcpy(img.pixel(0, y), row.data(), row.size() * sizeof(float));
  }
  for (float v : img.data)
    if (!std::isfinite(v)) throw PirError("non-finite texel in PFM: " + path);
  return img;
}

void save_pfm(const std::string& path, const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw PirError("empty image for PFM: " + path);
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw PirError("cannot write PFM file: " + path);
  std::fprintf(f.get(), "PF\n%d %d\n-1.0\n", img.width, img.height);
  for (int y = img.height - 1; y >= 0; --y) {
    if (std::fwrite(img.pixel(0, y), sizeof(float), std::size_t(img.width) * 3, f.get()) !=
        std::size_t(img.width) * 3)
      throw PirError("short write on PFM: " + path);
  }
}

Image load_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw PirError("cannot open PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw PirError("libpng failed reading: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  int w = int(png_get_image_width(png, info));
  int h = int(png_get_image_height(png, info));
  Image img(w, h);
  std::vector<std::uint8_t> row(std::size_t(w) * 3);
  std::vector<png_bytep> rows(h);
  std::vector<std::uint8_t> bytes(std::size_t(w) * h * 3);
  for (int y = 0; y < h; ++y) rows[y] = bytes.data() + std::size_t(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0f;
  return img;
}

void save_png(const std::string& path, const Image& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw PirError("cannot write PNG file: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw PirError("libpng failed writing: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(std::size_t(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    const float* src = img.pixel(0, y);
    for (std::size_t i = 0; i < row.size(); ++i) {
      float v = src[i];
      v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
      row[i] = std::uint8_t(v * 255.0f + 0.5f);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> load_mask_png(const std::string& path, int* width, int* height) {
  Image img = load_png(path);
  std::vector<std::uint8_t> mask(std::size_t(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      mask[std::size_t(y) * img.width + x] = img.pixel(x, y)[0] >= 128.0f / 255.0f ? 1 : 0;
  if (width) *width = img.width;
  if (height) *height = img.height;
  return mask;
}

void save_mask_png(const std::string& path, const std::vector<std::uint8_t>& mask, int width,
                   int height) {
  Image img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      float v = mask[std::size_t(y) * width + x] ? 1.f : 0.f;
      img.set(x, y, {v, v, v});
    }
  save_png(path, img);
}

}  // namespace pirsurf
