#include "pirsurf/brdf.hpp"

#include <fstream>

#include "pirsurf/rng.hpp"
#include "pirsurf/threads.hpp"

namespace pirsurf {

real ggx_ndf(real cos_nh, real roughness) {
  real alpha = roughness * roughness;
  real a2 = alpha * alpha;
  real f = cos_nh * cos_nh * (a2 - 1.0) + 1.0;
  return a2 / (kPi * f * f);
}

real smith_g1_ibl(real cos_x, real roughness) {
  real k = roughness * roughness * 0.5;
  return cos_x / (cos_x * (1.0 - k) + k);
}

Rgb fresnel_f0(const Rgb& kd, real m) {
  return Rgb{0.04, 0.04, 0.04} * (1.0 - m) + kd * m;
}

Vec3 ggx_sample_half(const Vec2& u, real alpha) {
  real phi = 2 * kPi * u.x;
  real cos2 = (1.0 - u.y) / (1.0 + (alpha * alpha - 1.0) * u.y);
  real cos_h = std::sqrt(cos2);
  real sin_h = std::sqrt(std::max(0.0, 1.0 - cos2));
  return {sin_h * std::cos(phi), sin_h * std::sin(phi), cos_h};
}

namespace {

inline real pow5(real x) {
  real x2 = x * x;
  return x2 * x2 * x;
}

}  // namespace

void SplitSumLUT::lookup(real cos_vn, real roughness, real& s_out, real& b_out, real* ds_dcos,
                         real* db_dcos, real* ds_dr, real* db_dr) const {
  int n = size;
  real u = clamp(cos_vn * n - 0.5, 0.0, real(n - 1));
  real v = clamp(roughness * n - 0.5, 0.0, real(n - 1));
  bool cu = cos_vn * n - 0.5 <= 0.0 || cos_vn * n - 0.5 >= n - 1.0;
  bool cv = roughness * n - 0.5 <= 0.0 || roughness * n - 0.5 >= n - 1.0;
  int i0 = std::min(int(u), n - 2 >= 0 ? n - 2 : 0);
  int j0 = std::min(int(v), n - 2 >= 0 ? n - 2 : 0);
  int i1 = std::min(i0 + 1, n - 1), j1 = std::min(j0 + 1, n - 1);
  real fx = clamp(u - i0, 0.0, 1.0), fy = clamp(v - j0, 0.0, 1.0);
  const real* e00 = entry(i0, j0);
  const real* e10 = entry(i1, j0);
  const real* e01 = entry(i0, j1);
  const real* e11 = entry(i1, j1);
  for (int c = 0; c < 2; ++c) {
    real val = (e00[c] * (1 - fx) + e10[c] * fx) * (1 - fy) +
               (e01[c] * (1 - fx) + e11[c] * fx) * fy;
    real du = ((e10[c] - e00[c]) * (1 - fy) + (e11[c] - e01[c]) * fy) * (cu ? 0.0 : n);
    real dv = ((e01[c] - e00[c]) * (1 - fx) + (e11[c] - e10[c]) * fx) * (cv ? 0.0 : n);
    if (c == 0) {
      s_out = val;
      if (ds_dcos) *ds_dcos = du;
      if (ds_dr) *ds_dr = dv;
    } else {
      b_out = val;
      if (db_dcos) *db_dcos = du;
      if (db_dr) *db_dr = dv;
    }
  }
}

SplitSumLUT bake_splitsum_lut(int n, int samples, std::uint64_t seed) {
  if (n < 16) throw PirError("bake_splitsum_lut: table size must be >= 16");
  if (samples < 1024) throw PirError("bake_splitsum_lut: samples must be >= 1024");
  SplitSumLUT lut;
  lut.size = n;
  lut.samples = samples;
  lut.seed = seed;
  lut.data.assign(std::size_t(n) * n * 2, 0.0);
  parallel_for(std::int64_t(n) * n, [&](std::int64_t bgn, std::int64_t end, int) {
    for (std::int64_t f = bgn; f < end; ++f) {
      int i = int(f % n), j = int(f / n);
      real cos_v = lut.entry_cos(i);
      real rough = lut.entry_roughness(j);
      real alpha = rough * rough;
      Vec3 v{std::sqrt(std::max(0.0, 1.0 - cos_v * cos_v)), 0, cos_v};
      std::uint32_t scramble = std::uint32_t(seed_of(seed, f));
      real acc_s = 0, acc_b = 0;
      for (int s = 0; s < samples; ++s) {
        Vec2 u = hammersley(std::uint32_t(s), std::uint32_t(samples), scramble);
        Vec3 h = ggx_sample_half(u, alpha);
        Vec3 l = h * (2 * dot(v, h)) - v;
        real no_l = l.z;
        if (no_l <= 0) continue;
        real no_h = std::max(h.z, 0.0);
        real vo_h = std::max(dot(v, h), 1e-12);
        // pdf = D*NoH/(4*VoH); D cancels against the BRDF numerator and the
        // estimator reduces to G * VoH / (NoH * NoV) per sample.
        real g = smith_g1_ibl(no_l, rough) * smith_g1_ibl(cos_v, rough);
        real g_vis = g * vo_h / (no_h * cos_v);
        real fc = pow5(1.0 - vo_h);
        acc_s += (1.0 - fc) * g_vis;
        acc_b += fc * g_vis;
      }
      real* e = &lut.data[std::size_t(f) * 2];
      e[0] = acc_s / samples;
      e[1] = acc_b / samples;
      if (!std::isfinite(e[0]) || !std::isfinite(e[1]))
        throw PirError("bake_splitsum_lut: non-finite accumulation at entry (" +
                       std::to_string(i) + "," + std::to_string(j) + ")");
    }
  });
  return lut;
}

void save_lut(const std::string& path, const SplitSumLUT& lut) {
  Image img(lut.size, lut.size);
  for (int j = 0; j < lut.size; ++j)
    for (int i = 0; i < lut.size; ++i) {
      const real* e = lut.entry(i, j);
      img.set(i, j, {e[0], e[1], 0.0});
    }
  save_pfm(path, img);
  std::ofstream side(path + ".txt");
  if (!side) throw PirError("cannot write LUT sidecar for " + path);
  side << "size " << lut.size << "\n";
  side << "samples " << lut.samples << "\n";
  side << "seed " << lut.seed << "\n";
  side << "channels scale bias unused\n";
  side << "axis0 cos_vn_bin_centers\n";
  side << "axis1 roughness_bin_centers\n";
  side << "conventions ggx_alpha=r^2 smith_schlick_k=r^2/2 schlick_fresnel\n";
}

SplitSumLUT load_lut(const std::string& path) {
  Image img = load_pfm(path);
  if (img.width != img.height) throw PirError("LUT PFM must be square: " + path);
  SplitSumLUT lut;
  lut.size = img.width;
  lut.data.assign(std::size_t(lut.size) * lut.size * 2, 0.0);
  for (int j = 0; j < lut.size; ++j)
    for (int i = 0; i < lut.size; ++i) {
      Rgb e = img.at(i, j);
      lut.data[(std::size_t(j) * lut.size + i) * 2 + 0] = e.x;
      lut.data[(std::size_t(j) * lut.size + i) * 2 + 1] = e.y;
    }
  std::ifstream side(path + ".txt");
  if (side) {
    std::string key;
    while (side >> key) {
      if (key == "samples") side >> lut.samples;
      else if (key == "seed") side >> lut.seed;
      else side.ignore(1 << 20, '\n');
    }
  }
  return lut;
}

Rgb shade_pir(const MaterialSample& mat, const Vec3& n, const Vec3& v, const EnvCubemap& env,
              const SplitSumLUT& lut, real cos_anneal, ShadeCache* cache) {
  ShadeCache local;
  ShadeCache& c = cache ? *cache : local;
  c.n = n;
  c.v = v;
  c.kd = mat.kd;
  c.o = mat.o;
  c.r = mat.r;
  c.m = mat.m;
  c.cos_raw = dot(v, n);
  c.refl = reflect_dir(v, n);

  real a = cos_anneal;
  real cos_eff = std::max(c.cos_raw, 0.0) * a + c.cos_raw * (1.0 - a);
  real dcos = (c.cos_raw > 0 ? a : 0.0) + (1.0 - a);
  real cos_clamped = cos_eff;
  if (cos_eff <= 1e-4) {
    cos_clamped = 1e-4;
    dcos = 0;
  } else if (cos_eff >= 1.0) {
    cos_clamped = 1.0;
    dcos = 0;
  }
  c.dcos_eff_draw = dcos;

  c.id = env.diffuse.sample_grad(n, c.did_dn, &c.diffuse_taps);
  c.is = sample_prefiltered_grad(env, c.refl, mat.r, c.dis_ddir, &c.dis_droughness, &c.spec_taps);
  lut.lookup(cos_clamped, mat.r, c.s, c.b, &c.ds_dcos, &c.db_dcos, &c.ds_dr, &c.db_dr);
  c.f0 = fresnel_f0(mat.kd, mat.m);

  Rgb spec_w = c.f0 * c.s + Rgb{c.b, c.b, c.b};
  c.core = mat.kd * c.id + c.is * spec_w;
  return c.core * (1.0 - mat.o);
}

void shade_pir_backward(const ShadeCache& c, const Rgb& dout, MaterialGrad& dmat, Vec3& dn,
                        EnvGrad* env_grad) {
  real one_o = 1.0 - c.o;
  Rgb dcore = dout * one_o;
  dmat.o += -dot(dout, c.core);

  Rgb spec_w = c.f0 * c.s + Rgb{c.b, c.b, c.b};

  // diffuse term kd * Id
  dmat.kd += dcore * c.id;
  Rgb d_id = dcore * c.kd;
  if (env_grad) scatter_cubemap_grad(c.diffuse_taps, d_id, env_grad->diffuse);
  for (int k = 0; k < 3; ++k) dn[k] += dot(d_id, c.did_dn[k]);

  // specular term Is * (F0*S + B)
  Rgb d_is = dcore * spec_w;
  if (env_grad) scatter_prefiltered_grad(c.spec_taps, d_is, *env_grad);
  Rgb d_refl{0, 0, 0};
  for (int k = 0; k < 3; ++k) d_refl[k] = dot(d_is, c.dis_ddir[k]);
  // refl = 2(v.n)n - v: d refl_i / d n_j = 2 n_i v_j + 2 (v.n) delta_ij
  real refl_n = dot(d_refl, c.n);
  dn += c.v * (2.0 * refl_n) + d_refl * (2.0 * c.cos_raw);

  // roughness reaches Is (mip lerp) and the LUT row
  Rgb d_f0 = dcore * (c.is * c.s);
  real d_s = dot(dcore, c.is * c.f0);
  real d_b = dot(dcore, c.is);
  dmat.r += dot(dcore, c.dis_droughness * spec_w) + d_s * c.ds_dr + d_b * c.db_dr;

  // LUT cos column back through annealing/clamp to n
  real d_cos = d_s * c.ds_dcos + d_b * c.db_dcos;
  dn += c.v * (d_cos * c.dcos_eff_draw);

  // F0 = 0.04(1-m) + m*kd
  dmat.kd += d_f0 * c.m;
  dmat.m += dot(d_f0, c.kd - Rgb{0.04, 0.04, 0.04});
}

Rgb shade_reference_mc(const MaterialSample& mat, const Vec3& n, const Vec3& v,
                       const CubemapData& env_base, int samples, std::uint64_t seed,
                       Rgb* diffuse_part, Rgb* specular_part) {
  if (samples < 1) throw PirError("shade_reference_mc: samples must be >= 1");
  Vec3 t1, t2;
  build_onb(n, t1, t2);
  real no_v = clamp(dot(n, v), 1e-4, 1.0);
  real alpha = std::max(mat.r * mat.r, 1e-8);
  Rgb f0 = fresnel_f0(mat.kd, mat.m);

  Pcg32 rng(seed, 0x5eed);
  Rgb diff{0, 0, 0};
  for (int s = 0; s < samples; ++s) {
    Vec2 u{rng.next_real(), rng.next_real()};
    real phi = 2 * kPi * u.x;
    real cos_t = std::sqrt(1.0 - u.y);
    real sin_t = std::sqrt(u.y);
    Vec3 l = t1 * (sin_t * std::cos(phi)) + t2 * (sin_t * std::sin(phi)) + n * cos_t;
    diff += env_base.sample(l);  // pdf = cos/pi cancels the kd/pi * cos integrand
  }
  diff = diff / real(samples);

  Pcg32 rng2(seed, 0x57ec);
  Rgb spec{0, 0, 0};
  for (int s = 0; s < samples; ++s) {
    Vec2 u{rng2.next_real(), rng2.next_real()};
    Vec3 h_ts = ggx_sample_half(u, alpha);
    Vec3 h = t1 * h_ts.x + t2 * h_ts.y + n * h_ts.z;
    Vec3 l = h * (2 * dot(v, h)) - v;
    real no_l = dot(n, l);
    if (no_l <= 0) continue;
    real no_h = std::max(dot(n, h), 1e-12);
    real vo_h = std::max(dot(v, h), 1e-12);
    real g = smith_g1_ibl(no_l, mat.r) * smith_g1_ibl(no_v, mat.r);
    real g_vis = g * vo_h / (no_h * no_v);
    real fc = pow5(1.0 - vo_h);
    Rgb fresnel = f0 * (1.0 - fc) + Rgb{fc, fc, fc};
    spec += env_base.sample(l) * fresnel * g_vis;
  }
  spec = spec / real(samples);

  if (diffuse_part) *diffuse_part = mat.kd * diff * (1.0 - mat.o);
  if (specular_part) *specular_part = spec * (1.0 - mat.o);
  return (mat.kd * diff + spec) * (1.0 - mat.o);
}

}  // namespace pirsurf
