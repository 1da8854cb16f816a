#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pirsurf/common.hpp"
#include "pirsurf/envlight.hpp"

namespace pirsurf {

// Decoded per-point material. kd diffuse albedo, o occlusion, r roughness,
// m metallic, all in [0,1].
struct MaterialSample {
  Rgb kd{0.5, 0.5, 0.5};
  real o = 0;
  real r = 0.5;
  real m = 0;
};

// Trowbridge-Reitz normal distribution with the Disney remap alpha = r^2.
// Integrates to 1 against the projected-solid-angle measure. roughness = 0
// is a delta distribution and must be special-cased by callers.
real ggx_ndf(real cos_nh, real roughness);

// Schlick-GGX masking term with the image-based-lighting remap k = alpha/2,
// alpha = roughness^2 (the convention the split-sum LUT presupposes).
real smith_g1_ibl(real cos_x, real roughness);

// Specular reflectance at normal incidence: 0.04 for dielectrics blended to
// kd by metallic.
Rgb fresnel_f0(const Rgb& kd, real m);

// GGX half-vector importance sample about +z; u in [0,1)^2.
Vec3 ggx_sample_half(const Vec2& u, real alpha);

// 2D table of the pre-integrated BRDF split into the F0 scale S and bias B,
// indexed by (v.n) on axis 0 and roughness on axis 1, bin centers.
struct SplitSumLUT {
  int size = 0;
  int samples = 0;
  std::uint64_t seed = 0;
  std::vector<real> data;  // size*size*2, (S,B) at [(j*size+i)*2], i=cos bin, j=roughness bin

  real entry_cos(int i) const { return (i + 0.5) / size; }
  real entry_roughness(int j) const { return (j + 0.5) / size; }
  const real* entry(int i, int j) const { return &data[(std::size_t(j) * size + i) * 2]; }

  // Bilinear lookup; optional derivatives with respect to the inputs
  // (entries themselves are a frozen precomputation and never receive
  // gradients). Derivatives are zero in the clamped border regions.
  void lookup(real cos_vn, real roughness, real& s_out, real& b_out, real* ds_dcos = nullptr,
              real* db_dcos = nullptr, real* ds_dr = nullptr, real* db_dr = nullptr) const;
};

SplitSumLUT bake_splitsum_lut(int n, int samples, std::uint64_t seed);

// PFM (channels: scale, bias, zero) plus a text sidecar with bake settings.
void save_lut(const std::string& path, const SplitSumLUT& lut);
SplitSumLUT load_lut(const std::string& path);

// Everything the shading backward needs, captured by the forward pass.
struct ShadeCache {
  Vec3 n, v;
  real cos_raw = 0;
  real dcos_eff_draw = 0;  // through annealing and the [1e-4,1] clamp
  Vec3 refl;
  Rgb kd;
  real o = 0, r = 0, m = 0;
  Rgb id;                       // diffuse irradiance at n
  Rgb did_dn[3];                // d(id)/d(n)
  BilinearTaps diffuse_taps;
  Rgb is;                       // prefiltered specular at refl
  Rgb dis_ddir[3];
  Rgb dis_droughness;
  PrefilterTaps spec_taps;
  real s = 0, b = 0;
  real ds_dcos = 0, db_dcos = 0, ds_dr = 0, db_dr = 0;
  Rgb f0;
  Rgb core;  // kd*Id + Is*(F0*S+B), before the (1-o) modulation
};

// Pre-integrated shading:
//   (1-o) * ( kd * Id(n) + Is(reflect(v,n); r) * (F0*S + B) )
// with (v.n) annealed by max(c,0)*anneal + c*(1-anneal) and clamped to
// [1e-4, 1] before the LUT lookup. n and v must be unit.
Rgb shade_pir(const MaterialSample& mat, const Vec3& n, const Vec3& v, const EnvCubemap& env,
              const SplitSumLUT& lut, real cos_anneal = 1.0, ShadeCache* cache = nullptr);

struct MaterialGrad {
  Rgb kd{0, 0, 0};
  real o = 0, r = 0, m = 0;

  void accumulate(const MaterialGrad& g) {
    kd += g.kd;
    o += g.o;
    r += g.r;
    m += g.m;
  }
};

// Pullback of shade_pir. Accumulates into dmat and dn; environment texel
// gradients (two mip levels + diffuse map) go into env_grad when given.
void shade_pir_backward(const ShadeCache& cache, const Rgb& dout, MaterialGrad& dmat, Vec3& dn,
                        EnvGrad* env_grad);

// Brute-force reference: unbiased Monte-Carlo estimate of the full rendering
// equation with the same Lambertian + Cook-Torrance BRDF and environment,
// no prefiltering and no split sum. Diffuse uses cosine sampling, specular
// GGX half-vector sampling, `samples` draws each. Used as the correctness
// oracle for the split-sum path.
Rgb shade_reference_mc(const MaterialSample& mat, const Vec3& n, const Vec3& v,
                       const CubemapData& env_base, int samples, std::uint64_t seed,
                       Rgb* diffuse_part = nullptr, Rgb* specular_part = nullptr);

}  // namespace pirsurf
