#include "pirsurf/envlight.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pirsurf/rng.hpp"
#include "pirsurf/threads.hpp"

namespace pirsurf {

Vec3 cube_face_dir(int face, real s, real t) {
  switch (face) {
    case 0: return normalize({1, -t, -s});
    case 1: return normalize({-1, -t, s});
    case 2: return normalize({s, 1, t});
    case 3: return normalize({s, -1, -t});
    case 4: return normalize({s, -t, 1});
    default: return normalize({-s, -t, -1});
  }
}

void cube_dir_to_face(const Vec3& d, int& face, real& s, real& t) {
  Vec3 a = vabs(d);
  if (a.x >= a.y && a.x >= a.z) {
    if (d.x > 0) {
      face = 0;
      s = -d.z / d.x;
      t = -d.y / d.x;
    } else {
      face = 1;
      s = d.z / -d.x;
      t = -d.y / -d.x;
    }
  } else if (a.y >= a.z) {
    if (d.y > 0) {
      face = 2;
      s = d.x / d.y;
      t = d.z / d.y;
    } else {
      face = 3;
      s = d.x / -d.y;
      t = -d.z / -d.y;
    }
  } else {
    if (d.z > 0) {
      face = 4;
      s = d.x / d.z;
      t = -d.y / d.z;
    } else {
      face = 5;
      s = -d.x / -d.z;
      t = -d.y / -d.z;
    }
  }
}

void cube_dir_to_face_grad(const Vec3& d, int& face, real& s, real& t, Vec3& ds, Vec3& dt) {
  cube_dir_to_face(d, face, s, t);
  // s = num/den, t = num2/den with den the (signed) major axis component.
  auto quot = [](real num, real den, int ni, int di, real sign_num, real sign_den) {
    Vec3 g{0, 0, 0};
    real inv = 1.0 / den;
    g[ni] += sign_num * inv;
    g[di] -= sign_den * num * inv * inv;
    return g;
  };
  switch (face) {
    case 0:  // s=-z/x t=-y/x  (den=x)
      ds = quot(-d.z, d.x, 2, 0, -1, 1);
      dt = quot(-d.y, d.x, 1, 0, -1, 1);
      break;
    case 1:  // den=-x
      ds = quot(d.z, -d.x, 2, 0, 1, -1);
      dt = quot(-d.y, -d.x, 1, 0, -1, -1);
      break;
    case 2:  // den=y
      ds = quot(d.x, d.y, 0, 1, 1, 1);
      dt = quot(d.z, d.y, 2, 1, 1, 1);
      break;
    case 3:  // den=-y
      ds = quot(d.x, -d.y, 0, 1, 1, -1);
      dt = quot(-d.z, -d.y, 2, 1, -1, -1);
      break;
    case 4:  // den=z
      ds = quot(d.x, d.z, 0, 2, 1, 1);
      dt = quot(-d.y, d.z, 1, 2, -1, 1);
      break;
    default:  // den=-z
      ds = quot(-d.x, -d.z, 0, 2, -1, -1);
      dt = quot(-d.y, -d.z, 1, 2, -1, -1);
      break;
  }
}

real cube_texel_solid_angle(int i, int j, int n) {
  auto area = [](real s, real t) { return std::atan2(s * t, std::sqrt(s * s + t * t + 1.0)); };
  real s0 = 2.0 * i / n - 1.0, s1 = 2.0 * (i + 1) / n - 1.0;
  real t0 = 2.0 * j / n - 1.0, t1 = 2.0 * (j + 1) / n - 1.0;
  return area(s1, t1) - area(s0, t1) - area(s1, t0) + area(s0, t0);
}

Vec3 CubemapData::texel_dir(int face, int i, int j) const {
  real s = 2.0 * (i + 0.5) / face_res - 1.0;
  real t = 2.0 * (j + 0.5) / face_res - 1.0;
  return cube_face_dir(face, s, t);
}

namespace {

struct FaceBilin {
  int face;
  int i0, i1, j0, j1;
  real fx, fy;
  bool clamped_x, clamped_y;
};

FaceBilin face_bilinear(int n, int face, real s, real t) {
  FaceBilin b{};
  b.face = face;
  real u = (s + 1.0) * 0.5 * n - 0.5;
  real v = (t + 1.0) * 0.5 * n - 0.5;
  b.clamped_x = u <= 0.0 || u >= n - 1.0;
  b.clamped_y = v <= 0.0 || v >= n - 1.0;
  u = clamp(u, 0.0, real(n - 1));
  v = clamp(v, 0.0, real(n - 1));
  b.i0 = std::min(int(u), n - 2 >= 0 ? n - 2 : 0);
  b.j0 = std::min(int(v), n - 2 >= 0 ? n - 2 : 0);
  b.i1 = std::min(b.i0 + 1, n - 1);
  b.j1 = std::min(b.j0 + 1, n - 1);
  b.fx = clamp(u - b.i0, 0.0, 1.0);
  b.fy = clamp(v - b.j0, 0.0, 1.0);
  return b;
}

}  // namespace

Rgb CubemapData::sample(const Vec3& dir, BilinearTaps* taps) const {
  int face;
  real s, t;
  cube_dir_to_face(dir, face, s, t);
  FaceBilin b = face_bilinear(face_res, face, s, t);
  int idx[4] = {flat_index(face, b.i0, b.j0), flat_index(face, b.i1, b.j0),
                flat_index(face, b.i0, b.j1), flat_index(face, b.i1, b.j1)};
  real w[4] = {(1 - b.fx) * (1 - b.fy), b.fx * (1 - b.fy), (1 - b.fx) * b.fy, b.fx * b.fy};
  if (taps) {
    for (int k = 0; k < 4; ++k) {
      taps->idx[k] = idx[k];
      taps->w[k] = w[k];
    }
  }
  Rgb out{0, 0, 0};
  for (int k = 0; k < 4; ++k) out += fetch(idx[k]) * w[k];
  return out;
}

Rgb CubemapData::sample_grad(const Vec3& dir, Rgb d_ddir[3], BilinearTaps* taps) const {
  int face;
  real s, t;
  Vec3 ds, dt;
  cube_dir_to_face_grad(dir, face, s, t, ds, dt);
  FaceBilin b = face_bilinear(face_res, face, s, t);
  int idx[4] = {flat_index(face, b.i0, b.j0), flat_index(face, b.i1, b.j0),
                flat_index(face, b.i0, b.j1), flat_index(face, b.i1, b.j1)};
  real w[4] = {(1 - b.fx) * (1 - b.fy), b.fx * (1 - b.fy), (1 - b.fx) * b.fy, b.fx * b.fy};
  if (taps) {
    for (int k = 0; k < 4; ++k) {
      taps->idx[k] = idx[k];
      taps->w[k] = w[k];
    }
  }
  Rgb v00 = fetch(idx[0]), v10 = fetch(idx[1]), v01 = fetch(idx[2]), v11 = fetch(idx[3]);
  Rgb out = v00 * w[0] + v10 * w[1] + v01 * w[2] + v11 * w[3];
  real scale = 0.5 * face_res;
  Rgb dval_du = ((v10 - v00) * (1 - b.fy) + (v11 - v01) * b.fy) * (b.clamped_x ? 0.0 : scale);
  Rgb dval_dv = ((v01 - v00) * (1 - b.fx) + (v11 - v10) * b.fx) * (b.clamped_y ? 0.0 : scale);
  // d_ddir[c] = d(value)/d(dir[c])
  for (int c = 0; c < 3; ++c) d_ddir[c] = dval_du * ds[c] + dval_dv * dt[c];
  return out;
}

EnvCubemap make_env_cubemap(int face_res, real fill, int samples_per_texel, std::uint64_t seed) {
  if (face_res <= 0) throw PirError("cubemap face_res must be positive");
  EnvCubemap env;
  env.face_res = face_res;
  env.samples_per_texel = samples_per_texel;
  env.seed = seed;
  env.base = CubemapData(face_res, fill);
  rebuild_env(env);
  return env;
}

namespace {

struct KernelSample {
  Vec3 dir;  // tangent space, +z = filter axis
  real weight;
};

// GGX half-vector importance samples turned into light directions about the
// +z axis, weighted by (l.z)+ (Karis split-sum prefilter convention).
std::vector<KernelSample> ggx_kernel(real roughness, int samples, std::uint32_t scramble) {
  real alpha = roughness * roughness;
  std::vector<KernelSample> out;
  out.reserve(samples);
  for (int s = 0; s < samples; ++s) {
    Vec2 u = hammersley(std::uint32_t(s), std::uint32_t(samples), scramble);
    real phi = 2 * kPi * u.x;
    real cos2 = (1.0 - u.y) / (1.0 + (alpha * alpha - 1.0) * u.y);
    real cos_h = std::sqrt(cos2);
    real sin_h = std::sqrt(std::max(0.0, 1.0 - cos2));
    Vec3 h{sin_h * std::cos(phi), sin_h * std::sin(phi), cos_h};
    Vec3 l{2 * h.z * h.x, 2 * h.z * h.y, 2 * h.z * h.z - 1};
    if (l.z > 0) out.push_back({l, l.z});
  }
  return out;
}

std::vector<KernelSample> cosine_kernel(int samples, std::uint32_t scramble) {
  std::vector<KernelSample> out;
  out.reserve(samples);
  for (int s = 0; s < samples; ++s) {
    Vec2 u = hammersley(std::uint32_t(s), std::uint32_t(samples), scramble);
    real phi = 2 * kPi * u.x;
    real cos_t = std::sqrt(1.0 - u.y);
    real sin_t = std::sqrt(u.y);
    out.push_back({{sin_t * std::cos(phi), sin_t * std::sin(phi), cos_t}, 1.0});
  }
  return out;
}

void check_base(const EnvCubemap& env) {
  if (env.samples_per_texel < 1) throw PirError("prefilter: samples_per_texel must be >= 1");
  for (real v : env.base.texels)
    if (!std::isfinite(v)) throw PirError("prefilter: non-finite radiance in base cubemap");
}

// Convolves base with a fixed tangent-space kernel, one output texel per
// filter axis. Linear in base for a fixed kernel.
void convolve(const CubemapData& base, const std::vector<KernelSample>& kernel, CubemapData& dst) {
  real wsum = 0;
  for (const auto& k : kernel) wsum += k.weight;
  const real inv_wsum = 1.0 / wsum;
  int n = base.face_res;
  parallel_for(std::int64_t(6) * n * n, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t f = b; f < e; ++f) {
      int face = int(f / (n * n));
      int j = int((f / n) % n);
      int i = int(f % n);
      Vec3 axis = base.texel_dir(face, i, j);
      Vec3 t1, t2;
      build_onb(axis, t1, t2);
      Rgb acc{0, 0, 0};
      for (const auto& k : kernel) {
        Vec3 dir = t1 * k.dir.x + t2 * k.dir.y + axis * k.dir.z;
        acc += base.sample(dir) * k.weight;
      }
      dst.store(face, i, j, acc * inv_wsum);
    }
  });
}

// Transpose of convolve for output texels with a nonzero incoming gradient.
void convolve_backward(const CubemapData& base, const std::vector<KernelSample>& kernel,
                       const std::vector<real>& dst_grad, std::vector<real>& base_grad) {
  real wsum = 0;
  for (const auto& k : kernel) wsum += k.weight;
  const real inv_wsum = 1.0 / wsum;
  int n = base.face_res;
  int workers = thread_count();
  std::vector<std::vector<real>> wbuf(workers);
  parallel_for(std::int64_t(6) * n * n, [&](std::int64_t b, std::int64_t e, int w) {
    auto& buf = wbuf[w];
    for (std::int64_t f = b; f < e; ++f) {
      const real* g = &dst_grad[std::size_t(f) * 3];
      if (g[0] == 0 && g[1] == 0 && g[2] == 0) continue;
      if (buf.empty()) buf.assign(base.texels.size(), 0.0);
      int face = int(f / (n * n));
      int j = int((f / n) % n);
      int i = int(f % n);
      Vec3 axis = base.texel_dir(face, i, j);
      Vec3 t1, t2;
      build_onb(axis, t1, t2);
      Rgb gout{g[0], g[1], g[2]};
      for (const auto& k : kernel) {
        Vec3 dir = t1 * k.dir.x + t2 * k.dir.y + axis * k.dir.z;
        BilinearTaps taps;
        base.sample(dir, &taps);
        real kw = k.weight * inv_wsum;
        for (int tap = 0; tap < 4; ++tap) {
          real* dst = &buf[std::size_t(taps.idx[tap]) * 3];
          real ww = kw * taps.w[tap];
          dst[0] += gout.x * ww;
          dst[1] += gout.y * ww;
          dst[2] += gout.z * ww;
        }
      }
    }
  });
  for (auto& buf : wbuf) {
    if (buf.empty()) continue;
    for (std::size_t k = 0; k < base_grad.size(); ++k) base_grad[k] += buf[k];
  }
}

}  // namespace

void prefilter_specular(EnvCubemap& env) {
  check_base(env);
  if (env.levels() < 2) throw PirError("prefilter: need at least 2 mip levels");
  env.mips.assign(env.levels(), CubemapData(env.face_res));
  env.mips[0] = env.base;  // roughness 0 is a passthrough
  for (int j = 1; j < env.levels(); ++j) {
    auto kernel = ggx_kernel(env.roughness_levels[j], env.samples_per_texel,
                             std::uint32_t(seed_of(env.seed, 0x99f, j)));
    convolve(env.base, kernel, env.mips[j]);
  }
}

void diffuse_irradiance(EnvCubemap& env) {
  check_base(env);
  env.diffuse = CubemapData(env.face_res);
  auto kernel = cosine_kernel(env.samples_per_texel, std::uint32_t(seed_of(env.seed, 0xd1f, 0)));
  convolve(env.base, kernel, env.diffuse);
}

void rebuild_env(EnvCubemap& env) {
  prefilter_specular(env);
  diffuse_irradiance(env);
}

Rgb sample_prefiltered(const EnvCubemap& env, const Vec3& dir, real roughness,
                       PrefilterTaps* taps) {
  PrefilterTaps local;
  PrefilterTaps& t = taps ? *taps : local;
  t.clamped_roughness = roughness < 0 || roughness > 1;
  real r = clamp(roughness, 0.0, 1.0);
  int m = env.levels();
  int j = 0;
  while (j < m - 2 && r >= env.roughness_levels[j + 1]) ++j;
  real r0 = env.roughness_levels[j], r1 = env.roughness_levels[j + 1];
  real f = (r - r0) / (r1 - r0);
  t.level[0] = j;
  t.level[1] = j + 1;
  t.level_weight[0] = 1 - f;
  t.level_weight[1] = f;
  t.droughness_scale = t.clamped_roughness ? 0.0 : 1.0 / (r1 - r0);
  t.level_value[0] = env.mips[j].sample(dir, &t.taps[0]);
  t.level_value[1] = env.mips[j + 1].sample(dir, &t.taps[1]);
  return t.level_value[0] * t.level_weight[0] + t.level_value[1] * t.level_weight[1];
}

Rgb sample_prefiltered_grad(const EnvCubemap& env, const Vec3& dir, real roughness,
                            Rgb d_ddir[3], Rgb* d_droughness, PrefilterTaps* taps) {
  PrefilterTaps local;
  PrefilterTaps& t = taps ? *taps : local;
  t.clamped_roughness = roughness < 0 || roughness > 1;
  real r = clamp(roughness, 0.0, 1.0);
  int m = env.levels();
  int j = 0;
  while (j < m - 2 && r >= env.roughness_levels[j + 1]) ++j;
  real r0 = env.roughness_levels[j], r1 = env.roughness_levels[j + 1];
  real f = (r - r0) / (r1 - r0);
  t.level[0] = j;
  t.level[1] = j + 1;
  t.level_weight[0] = 1 - f;
  t.level_weight[1] = f;
  t.droughness_scale = t.clamped_roughness ? 0.0 : 1.0 / (r1 - r0);
  Rgb g0[3], g1[3];
  t.level_value[0] = env.mips[j].sample_grad(dir, g0, &t.taps[0]);
  t.level_value[1] = env.mips[j + 1].sample_grad(dir, g1, &t.taps[1]);
  for (int c = 0; c < 3; ++c) d_ddir[c] = g0[c] * t.level_weight[0] + g1[c] * t.level_weight[1];
  if (d_droughness)
    *d_droughness = (t.level_value[1] - t.level_value[0]) * t.droughness_scale;
  return t.level_value[0] * t.level_weight[0] + t.level_value[1] * t.level_weight[1];
}

void EnvGrad::init(const EnvCubemap& env) {
  mips.assign(env.levels(), std::vector<real>(env.base.texels.size(), 0.0));
  diffuse.assign(env.base.texels.size(), 0.0);
  base.assign(env.base.texels.size(), 0.0);
}

void EnvGrad::clear() {
  for (auto& m : mips) std::fill(m.begin(), m.end(), 0.0);
  std::fill(diffuse.begin(), diffuse.end(), 0.0);
  std::fill(base.begin(), base.end(), 0.0);
}

void EnvGrad::add(const EnvGrad& other) {
  for (std::size_t l = 0; l < mips.size(); ++l)
    for (std::size_t k = 0; k < mips[l].size(); ++k) mips[l][k] += other.mips[l][k];
  for (std::size_t k = 0; k < diffuse.size(); ++k) diffuse[k] += other.diffuse[k];
  for (std::size_t k = 0; k < base.size(); ++k) base[k] += other.base[k];
}

void scatter_prefiltered_grad(const PrefilterTaps& taps, const Rgb& dout, EnvGrad& grad) {
  for (int l = 0; l < 2; ++l) {
    real lw = taps.level_weight[l];
    if (lw == 0) continue;
    auto& buf = grad.mips[taps.level[l]];
    for (int k = 0; k < 4; ++k) {
      real w = lw * taps.taps[l].w[k];
      real* dst = &buf[std::size_t(taps.taps[l].idx[k]) * 3];
      dst[0] += dout.x * w;
      dst[1] += dout.y * w;
      dst[2] += dout.z * w;
    }
  }
}

void scatter_cubemap_grad(const BilinearTaps& taps, const Rgb& dout, std::vector<real>& buf) {
  for (int k = 0; k < 4; ++k) {
    real* dst = &buf[std::size_t(taps.idx[k]) * 3];
    dst[0] += dout.x * taps.w[k];
    dst[1] += dout.y * taps.w[k];
    dst[2] += dout.z * taps.w[k];
  }
}

void prefilter_backward(const EnvCubemap& env, EnvGrad& grad) {
  // level 0 is a copy of base
  for (std::size_t k = 0; k < grad.base.size(); ++k) grad.base[k] += grad.mips[0][k];
  for (int j = 1; j < env.levels(); ++j) {
    auto kernel = ggx_kernel(env.roughness_levels[j], env.samples_per_texel,
                             std::uint32_t(seed_of(env.seed, 0x99f, j)));
    convolve_backward(env.base, kernel, grad.mips[j], grad.base);
  }
  auto kernel = cosine_kernel(env.samples_per_texel, std::uint32_t(seed_of(env.seed, 0xd1f, 0)));
  convolve_backward(env.base, kernel, grad.diffuse, grad.base);
}

Vec3 latlong_dir(real u, real v) {
  real theta = v * kPi;
  real phi = (u - 0.5) * 2 * kPi;
  real y = std::cos(theta);
  real rho = std::sin(theta);
  return {rho * std::sin(phi), y, -rho * std::cos(phi)};
}

Vec2 dir_to_latlong(const Vec3& dir) {
  Vec3 d = normalize(dir);
  real phi = std::atan2(d.x, -d.z);
  real u = phi / (2 * kPi) + 0.5;
  if (u >= 1.0) u -= 1.0;
  if (u < 0.0) u += 1.0;
  real v = std::acos(clamp(d.y, -1.0, 1.0)) / kPi;
  return {u, v};
}

namespace {

Rgb latlong_bilinear(const Image& img, real u, real v) {
  int w = img.width, h = img.height;
  real x = u * w - 0.5;
  real y = clamp(v * h - 0.5, 0.0, real(h - 1));
  int x0 = int(std::floor(x));
  real fx = x - x0;
  int y0 = std::min(int(y), h - 2 >= 0 ? h - 2 : 0);
  real fy = clamp(y - y0, 0.0, 1.0);
  auto wrap = [w](int i) { return ((i % w) + w) % w; };
  int xa = wrap(x0), xb = wrap(x0 + 1);
  int y1 = std::min(y0 + 1, h - 1);
  Rgb v00 = img.at(xa, y0), v10 = img.at(xb, y0), v01 = img.at(xa, y1), v11 = img.at(xb, y1);
  return (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy;
}

}  // namespace

CubemapData latlong_to_cubemap(const Image& latlong, int face_res) {
  if (latlong.width <= 0 || latlong.height <= 0 || latlong.width != 2 * latlong.height)
    throw PirError("lat-long image must be H x 2H");
  if (face_res <= 0) throw PirError("face_res must be positive");
  for (float v : latlong.data)
    if (!std::isfinite(v)) throw PirError("non-finite texel in lat-long input");
  CubemapData cube(face_res);
  int n = face_res;
  parallel_for(std::int64_t(6) * n * n, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t f = b; f < e; ++f) {
      int face = int(f / (n * n));
      int j = int((f / n) % n);
      int i = int(f % n);
      Vec2 uv = dir_to_latlong(cube.texel_dir(face, i, j));
      cube.store(face, i, j, latlong_bilinear(latlong, uv.x, uv.y));
    }
  });
  return cube;
}

Image cubemap_to_latlong(const CubemapData& cube, int height) {
  if (height <= 0) throw PirError("lat-long height must be positive");
  if (cube.face_res <= 0) throw PirError("empty cubemap");
  Image img(2 * height, height);
  parallel_for(height, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t y = b; y < e; ++y) {
      for (int x = 0; x < img.width; ++x) {
        Vec3 dir = latlong_dir((x + 0.5) / img.width, (y + 0.5) / img.height);
        img.set(x, int(y), cube.sample(dir));
      }
    }
  });
  return img;
}

real light_reg_loss(const CubemapData& base) {
  real acc = 0;
  std::size_t count = base.texel_count();
  for (std::size_t f = 0; f < count; ++f) {
    const real* p = &base.texels[f * 3];
    real mu = (p[0] + p[1] + p[2]) / 3.0;
    acc += std::fabs(p[0] - mu) + std::fabs(p[1] - mu) + std::fabs(p[2] - mu);
  }
  return acc / (3.0 * count);
}

void light_reg_backward(const CubemapData& base, real dloss, std::vector<real>& base_grad) {
  std::size_t count = base.texel_count();
  real scale = dloss / (3.0 * count);
  auto sgn = [](real v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); };
  for (std::size_t f = 0; f < count; ++f) {
    const real* p = &base.texels[f * 3];
    real mu = (p[0] + p[1] + p[2]) / 3.0;
    real s0 = sgn(p[0] - mu), s1 = sgn(p[1] - mu), s2 = sgn(p[2] - mu);
    real ssum = (s0 + s1 + s2) / 3.0;
    real* g = &base_grad[f * 3];
    g[0] += scale * (s0 - ssum);
    g[1] += scale * (s1 - ssum);
    g[2] += scale * (s2 - ssum);
  }
}

namespace {

// 6 faces stacked vertically in face order; exact (no resampling).
Image cubemap_to_strip(const CubemapData& cube) {
  int n = cube.face_res;
  Image img(n, 6 * n);
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) img.set(i, face * n + j, cube.fetch(face, i, j));
  return img;
}

CubemapData strip_to_cubemap(const Image& img) {
  if (img.height != 6 * img.width) throw PirError("cube strip must be N x 6N");
  int n = img.width;
  CubemapData cube(n);
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) cube.store(face, i, j, img.at(i, face * n + j));
  return cube;
}

}  // namespace

void save_env(const std::string& dir, const EnvCubemap& env) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  int h = env.face_res;
  save_pfm(dir + "/base.pfm", cubemap_to_latlong(env.base, h));
  save_pfm(dir + "/base_cube.pfm", cubemap_to_strip(env.base));
  for (int j = 1; j < env.levels(); ++j) {
    char name[64];
    std::snprintf(name, sizeof(name), "/mip_%02d.pfm", j);
    save_pfm(dir + name, cubemap_to_latlong(env.mips[j], h));
  }
  save_pfm(dir + "/diffuse.pfm", cubemap_to_latlong(env.diffuse, h));
  std::ofstream m(dir + "/env_manifest.txt");
  if (!m) throw PirError("cannot write env manifest in " + dir);
  m << "face_res " << env.face_res << "\n";
  m << "levels " << env.levels() << "\n";
  m << "roughness";
  for (real r : env.roughness_levels) m << " " << r;
  m << "\n";
  m << "samples_per_texel " << env.samples_per_texel << "\n";
  m << "seed " << env.seed << "\n";
  m << "latlong_convention row0=+y col0=+z center=-z\n";
}

EnvCubemap load_env(const std::string& dir) {
  std::ifstream m(dir + "/env_manifest.txt");
  if (!m) throw PirError("cannot read env manifest in " + dir);
  EnvCubemap env;
  std::string key;
  int levels = 0;
  while (m >> key) {
    if (key == "face_res") m >> env.face_res;
    else if (key == "levels") m >> levels;
    else if (key == "roughness") {
      env.roughness_levels.assign(levels, 0.0);
      for (int j = 0; j < levels; ++j) m >> env.roughness_levels[j];
    } else if (key == "samples_per_texel") m >> env.samples_per_texel;
    else if (key == "seed") m >> env.seed;
    else m.ignore(1 << 20, '\n');
  }
  env.base = strip_to_cubemap(load_pfm(dir + "/base_cube.pfm"));
  rebuild_env(env);
  return env;
}

EnvCubemap env_from_latlong_file(const std::string& pfm_path, int face_res, int samples_per_texel,
                                 std::uint64_t seed) {
  Image latlong = load_pfm(pfm_path);
  EnvCubemap env;
  env.face_res = face_res;
  env.samples_per_texel = samples_per_texel;
  env.seed = seed;
  env.base = latlong_to_cubemap(latlong, face_res);
  rebuild_env(env);
  return env;
}

}  // namespace pirsurf
