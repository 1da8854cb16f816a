#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pirsurf/brdf.hpp"
#include "pirsurf/common.hpp"

namespace pirsurf {

// Corner data for one trilinear query, reused by value, gradient and all
// pullbacks so forward and backward stay exactly consistent.
struct TrilinearCache {
  int node[8];    // flat node indices (channel factor excluded)
  real w[8];      // interpolation weights (sum to 1)
  Vec3 dw[8];     // d(weight)/d(x); zero along clamped axes
  real oob_extra = 0;  // max(0, |x|_inf - rad), added to channel 0
  Vec3 doob{0, 0, 0};
};

// Dense trilinear feature grid over [-rad, rad]^3. Channel 0 is the SDF
// value (negative inside); the remaining channels are latent material
// features. Queries outside the domain clamp to the boundary and add the
// L-inf distance overshoot to channel 0, so rays approaching the cube always
// see positive SDF outside it.
struct FeatureGrid {
  int res = 0;
  real rad = 1.5;
  int channels = 13;
  std::vector<real> values;  // node-major: ((z*res+y)*res+x)*channels + c

  real spacing() const { return 2 * rad / (res - 1); }
  std::size_t node_count() const { return std::size_t(res) * res * res; }
  int node_index(int x, int y, int z) const { return (z * res + y) * res + x; }
  real* node(int x, int y, int z) { return &values[std::size_t(node_index(x, y, z)) * channels]; }
  const real* node(int x, int y, int z) const {
    return &values[std::size_t(node_index(x, y, z)) * channels];
  }
  Vec3 node_pos(int x, int y, int z) const {
    real h = spacing();
    return {-rad + x * h, -rad + y * h, -rad + z * h};
  }

  void setup_cache(const Vec3& x, TrilinearCache& c) const;
  real sample_sdf(const TrilinearCache& c) const;
  void sample_all(const TrilinearCache& c, real* out) const;  // out[channels], incl. oob on ch 0
  Vec3 sdf_gradient(const TrilinearCache& c) const;           // analytic d(sdf)/d(x)
};

FeatureGrid make_feature_grid(int res, real rad, int channels);

// SDF channel set to a sphere of the given radius, latent channels N(0, sigma).
void init_grid_sphere(FeatureGrid& grid, real sphere_radius, real latent_sigma,
                      std::uint64_t seed);

// Bakes an analytic SDF into channel 0 at the grid nodes.
void bake_grid_sdf(FeatureGrid& grid, const std::function<real(const Vec3&)>& sdf);

// Trilinear feature lookup (convenience wrapper over setup_cache/sample_all).
void sample_feature(const FeatureGrid& grid, const Vec3& x, real* out);

// Normalized analytic gradient of the SDF channel. Vanishing gradients
// return +z and set the degenerate flag.
Vec3 sdf_normal(const FeatureGrid& grid, const Vec3& x, bool* degenerate = nullptr);

struct SdfRegResult {
  real eikonal = 0;   // mean (|grad s| - 1)^2
  real sparsity = 0;  // mean exp(-lambda_sa * |s|)
};

SdfRegResult sdf_reg_losses(const FeatureGrid& grid, std::span<const Vec3> pts, real lambda_sa);

// Accumulates d(eik_scale*eikonal + sp_scale*sparsity)/d(grid values) into a
// dense buffer shaped like grid.values.
SdfRegResult sdf_reg_backward(const FeatureGrid& grid, std::span<const Vec3> pts, real lambda_sa,
                              real eik_scale, real sp_scale, std::vector<real>& grid_grad);

// ---------------------------------------------------------------------------
// Material decoder: latent channels are squashed to [0,1] by a sigmoid, run
// through one tanh hidden layer, and the six outputs (kd, o, r, m) are
// sigmoid-activated so materials stay inside (0,1) by construction.
// ---------------------------------------------------------------------------

struct MaterialDecoder {
  int in_dim = 12;
  int hidden = 32;
  std::vector<real> w1, b1;  // hidden x in_dim, hidden
  std::vector<real> w2, b2;  // 6 x hidden, 6

  std::size_t param_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

MaterialDecoder make_material_decoder(int in_dim, int hidden, std::uint64_t seed);

inline constexpr int kDecoderMaxIn = 32;
inline constexpr int kDecoderMaxHidden = 64;

struct DecoderCache {
  real squashed[kDecoderMaxIn];
  real act[kDecoderMaxHidden];
  real out[6];
};

MaterialSample decode_material(const MaterialDecoder& dec, const real* latent_raw,
                               DecoderCache* cache = nullptr);

// dparams (nullable) is laid out [w1|b1|w2|b2]; dlatent_raw (nullable) gets
// the gradient with respect to the raw (pre-sigmoid) latent inputs.
void decode_material_backward(const MaterialDecoder& dec, const DecoderCache& cache,
                              const MaterialGrad& dmat, real* dlatent_raw, real* dparams);

// ---------------------------------------------------------------------------
// Radiance head: per-cell SH coefficients (degree 2, 9 basis functions x 3
// channels) evaluated against the viewing direction, plus a fixed-weight
// projection of the same coefficients onto the surface normal. Decoded
// radiance is sigmoid-clamped to [0,1].
// ---------------------------------------------------------------------------

inline constexpr int kShBasis = 9;

void sh_basis(const Vec3& d, real out[kShBasis]);
void sh_basis_grad(const Vec3& d, real out[kShBasis], Vec3 dout[kShBasis]);

struct RadianceHead {
  int res = 0;
  real rad = 1.5;
  real normal_mix = 0.25;      // fixed mixing weight, not optimized
  std::vector<real> coeffs;    // node-major * (kShBasis*3)

  std::size_t node_count() const { return std::size_t(res) * res * res; }
};

RadianceHead make_radiance_head(int res, real rad);

struct RadianceCache {
  TrilinearCache tri;
  real cvec[kShBasis * 3];
  real yv[kShBasis], yn[kShBasis];
  Vec3 dyn[kShBasis];
  real out[3];
};

Rgb eval_radiance(const RadianceHead& head, const Vec3& x, const Vec3& n, const Vec3& v,
                  RadianceCache* cache = nullptr);

// dcoeff_local is kShBasis*3 and must be scattered through cache.tri by the
// caller; dn (nullable) accumulates the normal-projection pullback.
void eval_radiance_backward(const RadianceHead& head, const RadianceCache& cache, const Rgb& dout,
                            real* dcoeff_local, Vec3* dn);

// ---------------------------------------------------------------------------
// Material-field regularizers (forward evaluation; the training loop fuses
// its own backward). KL pushes every squashed latent channel's batch mean
// towards Bern(0.05); smoothness is the mean L1 distance between materials
// decoded from f and f + df, df ~ N(0, eps^2) on the latent channels.
// ---------------------------------------------------------------------------

real bern_kl(real q, real p);  // KL(Bern(q) || Bern(p)), p clamped to [1e-4, 1-1e-4]

struct MatFieldReg {
  real kl_sparsity = 0;
  real smoothness = 0;
};

MatFieldReg material_field_reg(const MaterialDecoder& dec,
                               const std::vector<std::vector<real>>& latents_raw, real eps,
                               std::uint64_t seed);

}  // namespace pirsurf
