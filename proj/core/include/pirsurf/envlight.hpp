#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pirsurf/common.hpp"
#include "pirsurf/image.hpp"

namespace pirsurf {

// ---------------------------------------------------------------------------
// Cube face parameterization. Face order +x,-x,+y,-y,+z,-z with normalized
// in-face coordinates s,t in [-1,1]:
//
//   +x: ( 1,-t,-s)   -x: (-1,-t, s)
//   +y: ( s, 1, t)   -y: ( s,-1,-t)
//   +z: ( s,-t, 1)   -z: (-s,-t,-1)
//
// Texel (i,j) covers [i,i+1)x[j,j+1) in pixel units with its center at
// (i+0.5, j+0.5); bilinear filtering clamps to the face edge.
// ---------------------------------------------------------------------------

Vec3 cube_face_dir(int face, real s, real t);
void cube_dir_to_face(const Vec3& dir, int& face, real& s, real& t);
// Same, also returning d(s)/d(dir) and d(t)/d(dir) (lookup is scale
// invariant in dir, so these apply to unnormalized directions too).
void cube_dir_to_face_grad(const Vec3& dir, int& face, real& s, real& t, Vec3& ds, Vec3& dt);

// Solid angle subtended by texel (i,j) of an N-res face (same on all faces).
real cube_texel_solid_angle(int i, int j, int n);

struct BilinearTaps {
  int idx[4] = {0, 0, 0, 0};  // flat texel indices (face*N*N + j*N + i)
  real w[4] = {0, 0, 0, 0};
};

// One cubemap level.
struct CubemapData {
  int face_res = 0;
  std::vector<real> texels;  // 6*res*res*3

  CubemapData() = default;
  explicit CubemapData(int res, real fill = 0) : face_res(res), texels(std::size_t(6) * res * res * 3, fill) {}

  std::size_t texel_count() const { return std::size_t(6) * face_res * face_res; }
  int flat_index(int face, int i, int j) const { return (face * face_res + j) * face_res + i; }
  Rgb fetch(int flat) const {
    const real* p = &texels[std::size_t(flat) * 3];
    return {p[0], p[1], p[2]};
  }
  Rgb fetch(int face, int i, int j) const { return fetch(flat_index(face, i, j)); }
  void store(int face, int i, int j, const Rgb& c) {
    real* p = &texels[std::size_t(flat_index(face, i, j)) * 3];
    p[0] = c.x;
    p[1] = c.y;
    p[2] = c.z;
  }
  Vec3 texel_dir(int face, int i, int j) const;

  Rgb sample(const Vec3& dir, BilinearTaps* taps = nullptr) const;
  // Value plus d(value)/d(dir) columns.
  Rgb sample_grad(const Vec3& dir, Rgb d_ddir[3], BilinearTaps* taps = nullptr) const;
};

// Environment light: optimizable base radiance plus a prefiltered specular
// mip chain (one level per roughness in roughness_levels, level 0 a copy of
// base) and a cosine-convolved diffuse irradiance map. Mips keep the base
// resolution; the chain is a deterministic linear function of the base given
// (seed, samples_per_texel), which is what the training backward relies on.
struct EnvCubemap {
  int face_res = 0;
  std::vector<real> roughness_levels = {0.0, 0.25, 0.5, 0.75, 1.0};
  int samples_per_texel = 256;
  std::uint64_t seed = 0;

  CubemapData base;
  std::vector<CubemapData> mips;
  CubemapData diffuse;

  int levels() const { return int(roughness_levels.size()); }
};

EnvCubemap make_env_cubemap(int face_res, real fill = 0.5, int samples_per_texel = 256,
                            std::uint64_t seed = 0);

// Rebuild the mip chain from base: level j stores the GGX-weighted average
//   sum_l L(l) (l.r)+ / sum_l (l.r)+,  l ~ D(l, r; r_j) about the texel dir,
// with level 0 defined as a copy of base. Normalization keeps a constant
// base exactly constant.
void prefilter_specular(EnvCubemap& env);

// Rebuild the diffuse map: cosine-weighted hemispherical average about each
// texel normal, normalized the same way (constant in, constant out).
void diffuse_irradiance(EnvCubemap& env);

void rebuild_env(EnvCubemap& env);  // prefilter_specular + diffuse_irradiance

struct PrefilterTaps {
  int level[2] = {0, 0};
  real level_weight[2] = {1, 0};  // includes the roughness lerp factor
  BilinearTaps taps[2];
  Rgb level_value[2];
  real droughness_scale = 0;  // d(lerp t)/d(roughness); 0 when clamped or on last level
  bool clamped_roughness = false;
};

// Roughness-interpolated lookup between the two bracketing mip levels.
// Out-of-range roughness is clamped (taps->clamped_roughness reports it).
Rgb sample_prefiltered(const EnvCubemap& env, const Vec3& dir, real roughness,
                       PrefilterTaps* taps = nullptr);
// Adds d(value)/d(dir) and d(value)/d(roughness) for the shading backward.
Rgb sample_prefiltered_grad(const EnvCubemap& env, const Vec3& dir, real roughness,
                            Rgb d_ddir[3], Rgb* d_droughness, PrefilterTaps* taps);

// Per-level gradient buffers matching an EnvCubemap's layout.
struct EnvGrad {
  std::vector<std::vector<real>> mips;  // levels() buffers of 6*N*N*3
  std::vector<real> diffuse;
  std::vector<real> base;

  void init(const EnvCubemap& env);
  void clear();
  void add(const EnvGrad& other);
};

// Pullback of sample_prefiltered into the two touched mip levels.
void scatter_prefiltered_grad(const PrefilterTaps& taps, const Rgb& dout, EnvGrad& grad);

// Pullback of a plain diffuse-map lookup.
void scatter_cubemap_grad(const BilinearTaps& taps, const Rgb& dout, std::vector<real>& buf);

// Transpose of the prefilter operator: folds grad.mips and grad.diffuse into
// grad.base (level 0 passes through as the identity).
void prefilter_backward(const EnvCubemap& env, EnvGrad& grad);

// ---------------------------------------------------------------------------
// Lat-long (equirectangular) conversion. Row 0 is the +y pole; the image
// center column looks down -z and the seam (column 0) down +z; u increases
// towards +x at the center. Width must be twice the height.
// ---------------------------------------------------------------------------

Vec3 latlong_dir(real u, real v);
Vec2 dir_to_latlong(const Vec3& dir);

CubemapData latlong_to_cubemap(const Image& latlong, int face_res);
Image cubemap_to_latlong(const CubemapData& cube, int height);

// White-environment prior: mean over (texel, channel) of the absolute
// deviation from the texel's channel mean. Zero iff every texel is gray.
real light_reg_loss(const CubemapData& base);
void light_reg_backward(const CubemapData& base, real dloss, std::vector<real>& base_grad);

// Serialization: lat-long PFMs for base, each mip and the diffuse map plus a
// sidecar manifest (face_res, levels, roughness values, samples, seed).
void save_env(const std::string& dir, const EnvCubemap& env);
EnvCubemap load_env(const std::string& dir);

// Builds a full environment from a single lat-long PFM.
EnvCubemap env_from_latlong_file(const std::string& pfm_path, int face_res,
                                 int samples_per_texel, std::uint64_t seed);

}  // namespace pirsurf
