#include "pirsurf/fields.hpp"

#include "pirsurf/rng.hpp"

namespace pirsurf {

void FeatureGrid::setup_cache(const Vec3& x, TrilinearCache& c) const {
  real h = spacing();
  int i0[3];
  real f[3];
  bool clamped[3];
  for (int k = 0; k < 3; ++k) {
    real u = (x[k] + rad) / h;
    clamped[k] = u <= 0.0 || u >= res - 1.0;
    u = clamp(u, 0.0, real(res - 1));
    i0[k] = std::min(int(u), res - 2);
    f[k] = clamp(u - i0[k], 0.0, 1.0);
  }
  for (int corner = 0; corner < 8; ++corner) {
    int a = corner & 1, b = (corner >> 1) & 1, d = (corner >> 2) & 1;
    c.node[corner] = node_index(i0[0] + a, i0[1] + b, i0[2] + d);
    real wx = a ? f[0] : 1 - f[0];
    real wy = b ? f[1] : 1 - f[1];
    real wz = d ? f[2] : 1 - f[2];
    c.w[corner] = wx * wy * wz;
    real gx = clamped[0] ? 0.0 : (a ? 1.0 : -1.0) / h;
    real gy = clamped[1] ? 0.0 : (b ? 1.0 : -1.0) / h;
    real gz = clamped[2] ? 0.0 : (d ? 1.0 : -1.0) / h;
    c.dw[corner] = {gx * wy * wz, wx * gy * wz, wx * wy * gz};
  }
  real linf = linf_norm(x);
  c.oob_extra = std::max(0.0, linf - rad);
  c.doob = {0, 0, 0};
  if (c.oob_extra > 0) {
    Vec3 a = vabs(x);
    int axis = a.x >= a.y && a.x >= a.z ? 0 : (a.y >= a.z ? 1 : 2);
    c.doob[axis] = x[axis] >= 0 ? 1.0 : -1.0;
  }
}

real FeatureGrid::sample_sdf(const TrilinearCache& c) const {
  real s = 0;
  for (int k = 0; k < 8; ++k) s += values[std::size_t(c.node[k]) * channels] * c.w[k];
  return s + c.oob_extra;
}

void FeatureGrid::sample_all(const TrilinearCache& c, real* out) const {
  for (int ch = 0; ch < channels; ++ch) out[ch] = 0;
  for (int k = 0; k < 8; ++k) {
    const real* n = &values[std::size_t(c.node[k]) * channels];
    real w = c.w[k];
    for (int ch = 0; ch < channels; ++ch) out[ch] += n[ch] * w;
  }
  out[0] += c.oob_extra;
}

Vec3 FeatureGrid::sdf_gradient(const TrilinearCache& c) const {
  Vec3 g = c.doob;
  for (int k = 0; k < 8; ++k) g += c.dw[k] * values[std::size_t(c.node[k]) * channels];
  return g;
}

FeatureGrid make_feature_grid(int res, real rad, int channels) {
  if (res < 2) throw PirError("feature grid resolution must be >= 2");
  if (channels < 2) throw PirError("feature grid needs at least 2 channels");
  FeatureGrid g;
  g.res = res;
  g.rad = rad;
  g.channels = channels;
  g.values.assign(g.node_count() * channels, 0.0);
  return g;
}

void init_grid_sphere(FeatureGrid& grid, real sphere_radius, real latent_sigma,
                      std::uint64_t seed) {
  Pcg32 rng(seed, 0x9f1d);
  for (int z = 0; z < grid.res; ++z)
    for (int y = 0; y < grid.res; ++y)
      for (int x = 0; x < grid.res; ++x) {
        real* n = grid.node(x, y, z);
        n[0] = length(grid.node_pos(x, y, z)) - sphere_radius;
        for (int c = 1; c < grid.channels; ++c) n[c] = latent_sigma * rng.next_gaussian();
      }
}

void bake_grid_sdf(FeatureGrid& grid, const std::function<real(const Vec3&)>& sdf) {
  for (int z = 0; z < grid.res; ++z)
    for (int y = 0; y < grid.res; ++y)
      for (int x = 0; x < grid.res; ++x) grid.node(x, y, z)[0] = sdf(grid.node_pos(x, y, z));
}

void sample_feature(const FeatureGrid& grid, const Vec3& x, real* out) {
  TrilinearCache c;
  grid.setup_cache(x, c);
  grid.sample_all(c, out);
}

Vec3 sdf_normal(const FeatureGrid& grid, const Vec3& x, bool* degenerate) {
  TrilinearCache c;
  grid.setup_cache(x, c);
  Vec3 g = grid.sdf_gradient(c);
  real len = length(g);
  if (len <= 1e-8) {
    if (degenerate) *degenerate = true;
    return {0, 0, 1};
  }
  if (degenerate) *degenerate = false;
  return g / len;
}

SdfRegResult sdf_reg_losses(const FeatureGrid& grid, std::span<const Vec3> pts, real lambda_sa) {
  if (pts.empty()) throw PirError("sdf_reg_losses: need at least one sample point");
  SdfRegResult r;
  TrilinearCache c;
  for (const Vec3& p : pts) {
    grid.setup_cache(p, c);
    real s = grid.sample_sdf(c);
    Vec3 g = grid.sdf_gradient(c);
    r.eikonal += sqr(length(g) - 1.0);
    r.sparsity += std::exp(-lambda_sa * std::fabs(s));
  }
  r.eikonal /= real(pts.size());
  r.sparsity /= real(pts.size());
  return r;
}

SdfRegResult sdf_reg_backward(const FeatureGrid& grid, std::span<const Vec3> pts, real lambda_sa,
                              real eik_scale, real sp_scale, std::vector<real>& grid_grad) {
  if (pts.empty()) throw PirError("sdf_reg_backward: need at least one sample point");
  SdfRegResult r;
  TrilinearCache c;
  const real inv_n = 1.0 / real(pts.size());
  for (const Vec3& p : pts) {
    grid.setup_cache(p, c);
    real s = grid.sample_sdf(c);
    Vec3 g = grid.sdf_gradient(c);
    real len = length(g);
    r.eikonal += sqr(len - 1.0);
    real sp = std::exp(-lambda_sa * std::fabs(s));
    r.sparsity += sp;

    // d eik / d g = 2 (len-1) g/len (guard the origin)
    Vec3 dg = len > 1e-12 ? g * (eik_scale * inv_n * 2.0 * (len - 1.0) / len) : Vec3{0, 0, 0};
    real sgn = s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
    real ds = sp_scale * inv_n * sp * (-lambda_sa) * sgn;
    for (int k = 0; k < 8; ++k) {
      real* dst = &grid_grad[std::size_t(c.node[k]) * grid.channels];
      dst[0] += dot(dg, c.dw[k]) + ds * c.w[k];
    }
  }
  r.eikonal *= inv_n;
  r.sparsity *= inv_n;
  return r;
}

MaterialDecoder make_material_decoder(int in_dim, int hidden, std::uint64_t seed) {
  if (in_dim > kDecoderMaxIn || hidden > kDecoderMaxHidden)
    throw PirError("material decoder exceeds compiled size caps");
  MaterialDecoder d;
  d.in_dim = in_dim;
  d.hidden = hidden;
  d.w1.assign(std::size_t(hidden) * in_dim, 0.0);
  d.b1.assign(hidden, 0.0);
  d.w2.assign(std::size_t(6) * hidden, 0.0);
  d.b2.assign(6, 0.0);
  Pcg32 rng(seed, 0xdec0);
  real a1 = std::sqrt(6.0 / (in_dim + hidden));
  for (auto& w : d.w1) w = a1 * (2.0 * rng.next_real() - 1.0);
  real a2 = std::sqrt(6.0 / (hidden + 6));
  for (auto& w : d.w2) w = a2 * (2.0 * rng.next_real() - 1.0);
  return d;
}

MaterialSample decode_material(const MaterialDecoder& dec, const real* latent_raw,
                               DecoderCache* cache) {
  DecoderCache local;
  DecoderCache& c = cache ? *cache : local;
  for (int i = 0; i < dec.in_dim; ++i) c.squashed[i] = sigmoid(latent_raw[i]);
  for (int h = 0; h < dec.hidden; ++h) {
    real z = dec.b1[h];
    const real* wrow = &dec.w1[std::size_t(h) * dec.in_dim];
    for (int i = 0; i < dec.in_dim; ++i) z += wrow[i] * c.squashed[i];
    c.act[h] = std::tanh(z);
  }
  for (int o = 0; o < 6; ++o) {
    real z = dec.b2[o];
    const real* wrow = &dec.w2[std::size_t(o) * dec.hidden];
    for (int h = 0; h < dec.hidden; ++h) z += wrow[h] * c.act[h];
    c.out[o] = sigmoid(z);
  }
  MaterialSample m;
  m.kd = {c.out[0], c.out[1], c.out[2]};
  m.o = c.out[3];
  m.r = c.out[4];
  m.m = c.out[5];
  return m;
}

void decode_material_backward(const MaterialDecoder& dec, const DecoderCache& c,
                              const MaterialGrad& dmat, real* dlatent_raw, real* dparams) {
  real dout[6] = {dmat.kd.x, dmat.kd.y, dmat.kd.z, dmat.o, dmat.r, dmat.m};
  real dz2[6];
  for (int o = 0; o < 6; ++o) dz2[o] = dout[o] * d_sigmoid_from_value(c.out[o]);

  real* dw1 = dparams;
  real* db1 = dparams ? dparams + dec.w1.size() : nullptr;
  real* dw2 = dparams ? db1 + dec.b1.size() : nullptr;
  real* db2 = dparams ? dw2 + dec.w2.size() : nullptr;

  real dact[kDecoderMaxHidden] = {};
  for (int o = 0; o < 6; ++o) {
    const real* wrow = &dec.w2[std::size_t(o) * dec.hidden];
    for (int h = 0; h < dec.hidden; ++h) {
      dact[h] += dz2[o] * wrow[h];
      if (dw2) dw2[std::size_t(o) * dec.hidden + h] += dz2[o] * c.act[h];
    }
    if (db2) db2[o] += dz2[o];
  }

  real dsq[kDecoderMaxIn] = {};
  for (int h = 0; h < dec.hidden; ++h) {
    real dz1 = dact[h] * (1.0 - c.act[h] * c.act[h]);
    const real* wrow = &dec.w1[std::size_t(h) * dec.in_dim];
    for (int i = 0; i < dec.in_dim; ++i) {
      dsq[i] += dz1 * wrow[i];
      if (dw1) dw1[std::size_t(h) * dec.in_dim + i] += dz1 * c.squashed[i];
    }
    if (db1) db1[h] += dz1;
  }

  if (dlatent_raw)
    for (int i = 0; i < dec.in_dim; ++i)
      dlatent_raw[i] += dsq[i] * d_sigmoid_from_value(c.squashed[i]);
}

namespace {
constexpr real kSh0 = 0.28209479177387814;
constexpr real kSh1 = 0.4886025119029199;
constexpr real kSh2 = 1.0925484305920792;
constexpr real kSh20 = 0.31539156525252005;
constexpr real kSh22 = 0.5462742152960396;
}  // namespace

void sh_basis(const Vec3& d, real out[kShBasis]) {
  out[0] = kSh0;
  out[1] = kSh1 * d.y;
  out[2] = kSh1 * d.z;
  out[3] = kSh1 * d.x;
  out[4] = kSh2 * d.x * d.y;
  out[5] = kSh2 * d.y * d.z;
  out[6] = kSh20 * (3.0 * d.z * d.z - 1.0);
  out[7] = kSh2 * d.x * d.z;
  out[8] = kSh22 * (d.x * d.x - d.y * d.y);
}

void sh_basis_grad(const Vec3& d, real out[kShBasis], Vec3 dout[kShBasis]) {
  sh_basis(d, out);
  dout[0] = {0, 0, 0};
  dout[1] = {0, kSh1, 0};
  dout[2] = {0, 0, kSh1};
  dout[3] = {kSh1, 0, 0};
  dout[4] = {kSh2 * d.y, kSh2 * d.x, 0};
  dout[5] = {0, kSh2 * d.z, kSh2 * d.y};
  dout[6] = {0, 0, kSh20 * 6.0 * d.z};
  dout[7] = {kSh2 * d.z, 0, kSh2 * d.x};
  dout[8] = {kSh22 * 2.0 * d.x, -kSh22 * 2.0 * d.y, 0};
}

RadianceHead make_radiance_head(int res, real rad) {
  if (res < 2) throw PirError("radiance head resolution must be >= 2");
  RadianceHead h;
  h.res = res;
  h.rad = rad;
  h.coeffs.assign(h.node_count() * kShBasis * 3, 0.0);
  return h;
}

namespace {

// Head nodes share the FeatureGrid trilinear layout; borrow its cache setup
// through a shim grid that only carries geometry.
void head_cache(const RadianceHead& head, const Vec3& x, TrilinearCache& c) {
  FeatureGrid shim;
  shim.res = head.res;
  shim.rad = head.rad;
  shim.channels = 1;
  shim.setup_cache(x, c);
}

}  // namespace

Rgb eval_radiance(const RadianceHead& head, const Vec3& x, const Vec3& n, const Vec3& v,
                  RadianceCache* cache) {
  RadianceCache local;
  RadianceCache& c = cache ? *cache : local;
  head_cache(head, x, c.tri);
  constexpr int kC = kShBasis * 3;
  for (int i = 0; i < kC; ++i) c.cvec[i] = 0;
  for (int k = 0; k < 8; ++k) {
    const real* src = &head.coeffs[std::size_t(c.tri.node[k]) * kC];
    real w = c.tri.w[k];
    for (int i = 0; i < kC; ++i) c.cvec[i] += src[i] * w;
  }
  sh_basis(v, c.yv);
  sh_basis_grad(n, c.yn, c.dyn);
  Rgb out;
  for (int ch = 0; ch < 3; ++ch) {
    real logit = 0;
    for (int k = 0; k < kShBasis; ++k)
      logit += c.cvec[k * 3 + ch] * (c.yv[k] + head.normal_mix * c.yn[k]);
    c.out[ch] = sigmoid(logit);
    out[ch] = c.out[ch];
  }
  return out;
}

void eval_radiance_backward(const RadianceHead& head, const RadianceCache& c, const Rgb& dout,
                            real* dcoeff_local, Vec3* dn) {
  real dlogit[3];
  for (int ch = 0; ch < 3; ++ch) dlogit[ch] = dout[ch] * d_sigmoid_from_value(c.out[ch]);
  for (int k = 0; k < kShBasis; ++k) {
    real basis = c.yv[k] + head.normal_mix * c.yn[k];
    for (int ch = 0; ch < 3; ++ch) dcoeff_local[k * 3 + ch] = dlogit[ch] * basis;
  }
  if (dn) {
    Vec3 acc{0, 0, 0};
    for (int k = 0; k < kShBasis; ++k) {
      real coef = 0;
      for (int ch = 0; ch < 3; ++ch) coef += dlogit[ch] * c.cvec[k * 3 + ch];
      acc += c.dyn[k] * coef;
    }
    *dn += acc * head.normal_mix;
  }
}

real bern_kl(real q, real p) {
  p = clamp(p, 1e-4, 1.0 - 1e-4);
  return q * std::log(q / p) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
}

MatFieldReg material_field_reg(const MaterialDecoder& dec,
                               const std::vector<std::vector<real>>& latents_raw, real eps,
                               std::uint64_t seed) {
  if (latents_raw.size() < 2) throw PirError("material_field_reg: batch size must be >= 2");
  MatFieldReg out;
  int dims = dec.in_dim;
  std::vector<real> mean(dims, 0.0);
  Pcg32 rng(seed, 0x3eed);
  real l1 = 0;
  std::vector<real> perturbed(dims);
  for (const auto& f : latents_raw) {
    for (int i = 0; i < dims; ++i) mean[i] += sigmoid(f[i]);
    for (int i = 0; i < dims; ++i) perturbed[i] = f[i] + eps * rng.next_gaussian();
    MaterialSample a = decode_material(dec, f.data());
    MaterialSample b = decode_material(dec, perturbed.data());
    l1 += std::fabs(a.kd.x - b.kd.x) + std::fabs(a.kd.y - b.kd.y) + std::fabs(a.kd.z - b.kd.z) +
          std::fabs(a.o - b.o) + std::fabs(a.r - b.r) + std::fabs(a.m - b.m);
  }
  for (int i = 0; i < dims; ++i) out.kl_sparsity += bern_kl(0.05, mean[i] / latents_raw.size());
  out.smoothness = l1 / real(latents_raw.size());
  return out;
}

}  // namespace pirsurf
