#include "pirsurf/renderer.hpp"

#include <memory>

#include "pirsurf/threads.hpp"

namespace pirsurf {

struct RenderWorkspace::SampleRec {
  real t = 0;
  Vec3 pos;
  TrilinearCache tri;
  real sdf = 0;
  // segment state (valid for indices < n_segments)
  real alpha = 0;
  AlphaGrads dalpha;
  real trans = 1;
  real w = 0;
  bool payload = false;
  // payload caches
  real feat[kMaxFeatureChannels];
  Vec3 grad_sdf;
  real grad_len = 0;
  Vec3 n;
  bool normal_degenerate = false;
  RadianceCache rad;
  DecoderCache dec;
  MaterialSample mat;
  ShadeCache shade;
  Rgb c_tex{0, 0, 0}, c_mat{0, 0, 0};
};

RenderWorkspace::RenderWorkspace() { recs = new std::vector<SampleRec>(); }
RenderWorkspace::~RenderWorkspace() { delete recs; }

void GradSink::init(const SceneModel& model) {
  grid.assign(model.grid.node_count() * model.grid.channels, 0.f);
  grid_mark.assign(model.grid.node_count(), 0);
  grid_touched.clear();
  grid_touched.reserve(1 << 16);
  head.assign(model.head.node_count() * kShBasis * 3, 0.f);
  head_mark.assign(model.head.node_count(), 0);
  head_touched.clear();
  head_touched.reserve(1 << 16);
  decoder.assign(model.decoder.param_count(), 0.0);
  env.init(model.env);
  dlog_tau = 0;
}

void GradSink::clear_touched(int grid_channels) {
  for (int node : grid_touched) {
    grid_mark[node] = 0;
    float* g = &grid[std::size_t(node) * grid_channels];
    for (int c = 0; c < grid_channels; ++c) g[c] = 0.f;
  }
  grid_touched.clear();
  for (int node : head_touched) {
    head_mark[node] = 0;
    float* g = &head[std::size_t(node) * kShBasis * 3];
    for (int c = 0; c < kShBasis * 3; ++c) g[c] = 0.f;
  }
  head_touched.clear();
  std::fill(decoder.begin(), decoder.end(), 0.0);
  env.clear();
  dlog_tau = 0;
}

namespace {

constexpr int kPayloadDim = 13;  // c_tex(3) c_mat(3) kd(3) r m o opacity

inline real dot13(const real* a, const real* b) {
  real s = 0;
  for (int k = 0; k < kPayloadDim; ++k) s += a[k] * b[k];
  return s;
}

// Perturbation stream for the latent smoothness term; phase A and the
// backward must draw identical noise.
inline Pcg32 smooth_rng(std::uint64_t t_seed, int sample_index) {
  return Pcg32(seed_of(t_seed, 0xdf00, std::uint64_t(sample_index)), 0x11);
}

}  // namespace

void render_ray(const SceneModel& model, const Ray& ray, const RenderSettings& settings,
                const OccupancyGrid* occ, std::uint64_t t_seed, RayForward& out,
                RenderWorkspace& ws, const RayOutputGrads* grads, GradSink* sink) {
  out = RayForward{};
  const real tau = model.tau();
  const Vec3 view = -ray.dir;
  const Rgb bg_lin = srgb_to_linear(settings.bg_srgb);
  const int channels = model.grid.channels;
  const int latent_dim = channels - 1;
  const bool backward = grads != nullptr && sink != nullptr;

  Pcg32 trng(seed_of(t_seed, 0x7a11), 3);
  sample_ray_ts(ray, model.grid.rad, occ, settings.samples_per_ray, trng, ws.ts);
  auto& recs = *ws.recs;
  const int count = int(ws.ts.size());
  if (count < 2) {
    out.tex_srgb = settings.bg_srgb;
    out.mat_lin = bg_lin;
    out.mat_srgb = linear_to_srgb(out.mat_lin);
    return;
  }
  if (int(recs.size()) < count) recs.resize(count);

  for (int i = 0; i < count; ++i) {
    auto& r = recs[i];
    r.t = ws.ts[i];
    r.pos = ray.origin + ray.dir * r.t;
    model.grid.setup_cache(r.pos, r.tri);
    r.sdf = model.grid.sample_sdf(r.tri);
  }

  real transmittance = 1.0;
  int used = 0;
  for (int i = 0; i < count - 1; ++i) {
    auto& r = recs[i];
    r.trans = transmittance;
    bool underflow = false;
    r.alpha = backward ? alpha_from_sdf_grad(r.sdf, recs[i + 1].sdf, tau, r.dalpha, &underflow)
                       : alpha_from_sdf(r.sdf, recs[i + 1].sdf, tau, &underflow);
    out.any_underflow |= underflow;
    r.w = r.alpha * transmittance;
    transmittance *= (1.0 - r.alpha);
    used = i + 1;
    if (transmittance < settings.t_stop) break;
  }
  out.n_segments = used;

  Rgb sum_tex{0, 0, 0}, sum_mat{0, 0, 0}, sum_kd{0, 0, 0};
  real sum_r = 0, sum_m = 0, sum_o = 0;
  real opacity = 0;
  real smooth_sum = 0;
  for (int i = 0; i < used; ++i) {
    auto& r = recs[i];
    opacity += r.w;
    r.payload =
        r.w >= settings.weight_skip && (settings.radiance_branch || settings.material_branch);
    if (!r.payload) continue;
    model.grid.sample_all(r.tri, r.feat);
    r.grad_sdf = model.grid.sdf_gradient(r.tri);
    r.grad_len = length(r.grad_sdf);
    if (r.grad_len <= 1e-8) {
      r.n = {0, 0, 1};
      r.normal_degenerate = true;
    } else {
      r.n = r.grad_sdf / r.grad_len;
      r.normal_degenerate = false;
    }
    if (settings.radiance_branch) {
      r.c_tex = eval_radiance(model.head, r.pos, r.n, view, &r.rad);
      sum_tex += r.c_tex * r.w;
    }
    if (settings.material_branch) {
      r.mat = decode_material(model.decoder, r.feat + 1, &r.dec);
      r.c_mat = shade_pir(r.mat, r.n, view, model.env, model.lut, settings.cos_anneal, &r.shade);
      sum_mat += r.c_mat * r.w;
      sum_kd += r.mat.kd * r.w;
      sum_r += r.mat.r * r.w;
      sum_m += r.mat.m * r.w;
      sum_o += r.mat.o * r.w;
      for (int c = 0; c < latent_dim; ++c) out.sig_sum[c] += sigmoid(r.feat[1 + c]);
      ++out.n_payload;
      if (settings.smooth_eps > 0) {
        Pcg32 dfr = smooth_rng(t_seed, i);
        real pert[kDecoderMaxIn];
        for (int c = 0; c < latent_dim; ++c)
          pert[c] = r.feat[1 + c] + settings.smooth_eps * dfr.next_gaussian();
        MaterialSample pm = decode_material(model.decoder, pert);
        smooth_sum += std::fabs(r.mat.kd.x - pm.kd.x) + std::fabs(r.mat.kd.y - pm.kd.y) +
                      std::fabs(r.mat.kd.z - pm.kd.z) + std::fabs(r.mat.o - pm.o) +
                      std::fabs(r.mat.r - pm.r) + std::fabs(r.mat.m - pm.m);
      }
    }
  }
  out.opacity = opacity;
  out.kd_sum = sum_kd;
  out.smooth_sum = smooth_sum;
  out.tex_srgb = sum_tex + settings.bg_srgb * transmittance;
  out.mat_lin = sum_mat + bg_lin * transmittance;
  out.mat_srgb = linear_to_srgb(out.mat_lin);
  out.has_surface = opacity >= 0.5;
  if (out.has_surface) {
    out.e_kd = sum_kd / opacity;
    out.e_r = sum_r / opacity;
    out.e_m = sum_m / opacity;
    out.e_o = sum_o / opacity;
  }

  if (!backward) return;

  // ---- backward ----
  Rgb d_mat_lin{grads->d_mat_srgb.x * d_linear_to_srgb(out.mat_lin.x),
                grads->d_mat_srgb.y * d_linear_to_srgb(out.mat_lin.y),
                grads->d_mat_srgb.z * d_linear_to_srgb(out.mat_lin.z)};
  real d_op = grads->d_opacity;
  Rgb d_sum_kd{0, 0, 0};
  real d_sum_r = 0, d_sum_m = 0, d_sum_o = 0;
  if (out.has_surface) {
    d_sum_kd = grads->d_e_kd / opacity;
    d_sum_r = grads->d_e_r / opacity;
    d_sum_m = grads->d_e_m / opacity;
    d_sum_o = grads->d_e_o / opacity;
    d_op -= (dot(grads->d_e_kd, out.e_kd) + grads->d_e_r * out.e_r + grads->d_e_m * out.e_m +
             grads->d_e_o * out.e_o) /
            opacity;
  }

  real g[kPayloadDim] = {grads->d_tex_srgb.x,
                         grads->d_tex_srgb.y,
                         grads->d_tex_srgb.z,
                         d_mat_lin.x,
                         d_mat_lin.y,
                         d_mat_lin.z,
                         d_sum_kd.x,
                         d_sum_kd.y,
                         d_sum_kd.z,
                         d_sum_r,
                         d_sum_m,
                         d_sum_o,
                         d_op};
  // "rest of the ray" payload, seeded with the background
  real rest[kPayloadDim] = {settings.bg_srgb.x, settings.bg_srgb.y, settings.bg_srgb.z,
                            bg_lin.x,           bg_lin.y,           bg_lin.z,
                            0, 0, 0, 0, 0, 0, 0};

  static thread_local std::vector<real> dsdf;
  dsdf.assign(count, 0.0);

  for (int i = used - 1; i >= 0; --i) {
    auto& r = recs[i];
    real y[kPayloadDim] = {};
    if (r.payload) {
      if (settings.radiance_branch) {
        y[0] = r.c_tex.x;
        y[1] = r.c_tex.y;
        y[2] = r.c_tex.z;
      }
      if (settings.material_branch) {
        y[3] = r.c_mat.x;
        y[4] = r.c_mat.y;
        y[5] = r.c_mat.z;
        y[6] = r.mat.kd.x;
        y[7] = r.mat.kd.y;
        y[8] = r.mat.kd.z;
        y[9] = r.mat.r;
        y[10] = r.mat.m;
        y[11] = r.mat.o;
      }
    }
    y[12] = 1.0;  // opacity slot

    real d_alpha = r.trans * (dot13(g, y) - dot13(g, rest));
    dsdf[i] += d_alpha * r.dalpha.d_si;
    dsdf[i + 1] += d_alpha * r.dalpha.d_snext;
    sink->dlog_tau += d_alpha * r.dalpha.d_tau * tau;

    if (r.payload) {
      Vec3 dn_total{0, 0, 0};
      if (settings.radiance_branch) {
        Rgb dc_tex = grads->d_tex_srgb * r.w;
        real dcoeff[kShBasis * 3];
        Vec3 dn_rad{0, 0, 0};
        eval_radiance_backward(model.head, r.rad, dc_tex, dcoeff, &dn_rad);
        for (int k = 0; k < 8; ++k) {
          real wk = r.rad.tri.w[k];
          if (wk == 0) continue;
          for (int s = 0; s < kShBasis * 3; ++s)
            if (dcoeff[s] != 0) sink->add_head(r.rad.tri.node[k], s, dcoeff[s] * wk);
        }
        dn_total += dn_rad;
      }
      if (settings.material_branch) {
        MaterialGrad dmat;
        Vec3 dn_shade{0, 0, 0};
        shade_pir_backward(r.shade, d_mat_lin * r.w, dmat, dn_shade,
                           settings.grad_env ? &sink->env : nullptr);
        dmat.kd += d_sum_kd * r.w;
        dmat.r += d_sum_r * r.w;
        dmat.m += d_sum_m * r.w;
        dmat.o += d_sum_o * r.w;

        real dlat[kDecoderMaxIn] = {};
        if (grads->smooth_scale > 0 && settings.smooth_eps > 0) {
          Pcg32 dfr = smooth_rng(t_seed, i);
          real pert[kDecoderMaxIn];
          for (int c = 0; c < latent_dim; ++c)
            pert[c] = r.feat[1 + c] + settings.smooth_eps * dfr.next_gaussian();
          DecoderCache pc;
          MaterialSample pm = decode_material(model.decoder, pert, &pc);
          auto sgn = [](real a, real b) { return a > b ? 1.0 : (a < b ? -1.0 : 0.0); };
          real s6[6] = {sgn(r.mat.kd.x, pm.kd.x), sgn(r.mat.kd.y, pm.kd.y),
                        sgn(r.mat.kd.z, pm.kd.z), sgn(r.mat.o, pm.o),
                        sgn(r.mat.r, pm.r),       sgn(r.mat.m, pm.m)};
          real sc = grads->smooth_scale;
          dmat.kd += Rgb{sc * s6[0], sc * s6[1], sc * s6[2]};
          dmat.o += sc * s6[3];
          dmat.r += sc * s6[4];
          dmat.m += sc * s6[5];
          MaterialGrad dmb;
          dmb.kd = {-sc * s6[0], -sc * s6[1], -sc * s6[2]};
          dmb.o = -sc * s6[3];
          dmb.r = -sc * s6[4];
          dmb.m = -sc * s6[5];
          decode_material_backward(model.decoder, pc, dmb, dlat, sink->decoder.data());
        }
        if (grads->d_sig) {
          for (int c = 0; c < latent_dim; ++c) {
            real sg = sigmoid(r.feat[1 + c]);
            dlat[c] += grads->d_sig[c] * d_sigmoid_from_value(sg);
          }
        }
        decode_material_backward(model.decoder, r.dec, dmat, dlat, sink->decoder.data());
        for (int k = 0; k < 8; ++k) {
          real wk = r.tri.w[k];
          if (wk == 0) continue;
          for (int c = 0; c < latent_dim; ++c)
            if (dlat[c] != 0) sink->add_grid(r.tri.node[k], channels, 1 + c, dlat[c] * wk);
        }
        if (settings.grad_shading_normal) dn_total += dn_shade;
      }
      if (!r.normal_degenerate &&
          (dn_total.x != 0 || dn_total.y != 0 || dn_total.z != 0)) {
        Vec3 dg = (dn_total - r.n * dot(r.n, dn_total)) / r.grad_len;
        for (int k = 0; k < 8; ++k) {
          real contrib = dot(dg, r.tri.dw[k]);
          if (contrib != 0) sink->add_grid(r.tri.node[k], channels, 0, contrib);
        }
      }
    }

    for (int k = 0; k < kPayloadDim; ++k) rest[k] = r.alpha * y[k] + (1.0 - r.alpha) * rest[k];
  }

  for (int i = 0; i <= used && i < count; ++i) {
    if (dsdf[i] == 0) continue;
    const auto& r = recs[i];
    for (int k = 0; k < 8; ++k)
      if (r.tri.w[k] != 0) sink->add_grid(r.tri.node[k], channels, 0, dsdf[i] * r.tri.w[k]);
  }
}

std::pair<Rgb, real> render_pixel_radiance(const SceneModel& model, const Ray& ray,
                                           const RenderSettings& settings,
                                           const OccupancyGrid* occ, std::uint64_t t_seed) {
  RenderSettings s = settings;
  s.material_branch = false;
  s.radiance_branch = true;
  RenderWorkspace ws;
  RayForward out;
  render_ray(model, ray, s, occ, t_seed, out, ws);
  return {out.tex_srgb, out.opacity};
}

std::pair<Rgb, real> render_pixel_material(const SceneModel& model, const Ray& ray,
                                           const RenderSettings& settings,
                                           const OccupancyGrid* occ, std::uint64_t t_seed) {
  RenderSettings s = settings;
  s.material_branch = true;
  s.radiance_branch = false;
  RenderWorkspace ws;
  RayForward out;
  render_ray(model, ray, s, occ, t_seed, out, ws);
  return {out.mat_srgb, out.opacity};
}

Image render_image(const SceneModel& model, const Camera& cam, RenderBranch branch,
                   const RenderSettings& settings, const OccupancyGrid* occ, Image* linear_out) {
  RenderSettings s = settings;
  s.radiance_branch = branch == RenderBranch::kRadiance;
  s.material_branch = branch != RenderBranch::kRadiance;
  Image img(cam.width, cam.height);
  if (linear_out) *linear_out = Image(cam.width, cam.height);

  int workers = thread_count();
  std::vector<std::unique_ptr<RenderWorkspace>> wss(workers);
  for (auto& w : wss) w = std::make_unique<RenderWorkspace>();

  parallel_for(std::int64_t(cam.width) * cam.height, [&](std::int64_t b, std::int64_t e, int w) {
    RayForward out;
    for (std::int64_t p = b; p < e; ++p) {
      int px = int(p % cam.width), py = int(p / cam.width);
      Ray ray = generate_ray(cam, px + 0.5, py + 0.5);
      std::uint64_t t_seed = seed_of(settings.seed, std::uint64_t(p), 0xace);
      render_ray(model, ray, s, occ, t_seed, out, *wss[w]);
      Rgb srgb, lin;
      switch (branch) {
        case RenderBranch::kRadiance:
          srgb = out.tex_srgb;
          lin = out.tex_srgb;
          break;
        case RenderBranch::kMaterial:
          srgb = out.mat_srgb;
          lin = out.mat_lin;
          break;
        case RenderBranch::kAlbedo:
          lin = out.kd_sum;
          srgb = linear_to_srgb(clamp(lin, 0.0, 1.0));
          break;
      }
      img.set(px, py, srgb);
      if (linear_out) linear_out->set(px, py, lin);
    }
  });
  return img;
}

}  // namespace pirsurf
