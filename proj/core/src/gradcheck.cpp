#include "pirsurf/gradcheck.hpp"

#include <algorithm>
#include <sstream>

#include "pirsurf/rng.hpp"

namespace pirsurf {

namespace {

struct LossSelect {
  bool c_tex = false;
  bool c_mat = false;
  bool mask = false;
  bool sdf_reg = false;
  bool mat_reg = false;  // latent KL + smoothness
  bool patch = false;
  bool light = false;

  bool material() const { return c_mat || mat_reg || patch; }
};

struct ToyScene {
  SceneModel model;
  std::vector<RayBatchEntry> batch;
  LossWeights weights;
  std::vector<Vec3> reg_points;
  int samples_per_ray = 24;
  real cos_anneal = 0.7;
  real smooth_eps = 0.02;
};

RenderSettings toy_settings(const ToyScene& s, const LossSelect& sel) {
  RenderSettings st;
  st.samples_per_ray = s.samples_per_ray;
  st.cos_anneal = s.cos_anneal;
  st.weight_skip = 0;
  st.t_stop = 0;
  st.radiance_branch = sel.c_tex;
  st.material_branch = sel.material();
  st.smooth_eps = sel.mat_reg ? s.smooth_eps : 0.0;
  return st;
}

ToyScene build_toy(std::uint64_t seed) {
  ToyScene s;
  Pcg32 rng(seed, 0x70f);

  s.model.grid = make_feature_grid(8, 1.0, 13);
  init_grid_sphere(s.model.grid, 0.45, 0.15, seed);
  for (std::size_t n = 0; n < s.model.grid.node_count(); ++n)
    s.model.grid.values[n * 13] += 0.03 * rng.next_gaussian();

  s.model.head = make_radiance_head(8, 1.0);
  for (real& c : s.model.head.coeffs) c = 0.3 * rng.next_gaussian();

  s.model.decoder = make_material_decoder(12, 8, seed);

  s.model.env.face_res = 4;
  s.model.env.samples_per_texel = 32;
  s.model.env.seed = seed;
  s.model.env.base = CubemapData(4);
  for (real& t : s.model.env.base.texels) t = 0.05 + 1.4 * rng.next_real();
  rebuild_env(s.model.env);

  s.model.lut = bake_splitsum_lut(16, 1024, seed);
  s.model.log_tau = 2.3;

  auto make_cam = [&](real theta, real phi) {
    Vec3 eye{3.0 * std::cos(phi) * std::sin(theta), 3.0 * std::cos(theta),
             3.0 * std::sin(phi) * std::sin(theta)};
    return make_lookat_camera(eye, {0, 0, 0}, {0, 1, 0}, 30.0, 8, 8);
  };
  Camera cams[3] = {make_cam(1.3, 0.4), make_cam(1.9, 2.2), make_cam(0.8, 4.4)};

  auto push = [&](const Camera& cam, int px, int py, int patch_id) {
    RayBatchEntry e;
    e.ray = generate_ray(cam, px, py);
    e.bg_srgb = {rng.next_real(), rng.next_real(), rng.next_real()};
    e.gt_srgb = {rng.next_real(), rng.next_real(), rng.next_real()};
    e.gt_mask = patch_id >= 0 ? 1.0 : (rng.next_real() < 0.5 ? 1.0 : 0.0);
    e.patch_id = patch_id;
    e.t_seed = seed_of(seed, 0x9a1, s.batch.size());
    s.batch.push_back(e);
  };
  // 2x2 patch through the object center plus four scattered rays
  push(cams[0], 3, 3, 0);
  push(cams[0], 4, 3, 0);
  push(cams[0], 3, 4, 0);
  push(cams[0], 4, 4, 0);
  push(cams[1], 3, 4, -1);
  push(cams[1], 5, 5, -1);
  push(cams[2], 2, 2, -1);
  push(cams[2], 6, 6, -1);

  s.reg_points.resize(32);
  for (auto& p : s.reg_points)
    p = {2 * rng.next_real() - 1, 2 * rng.next_real() - 1, 2 * rng.next_real() - 1};
  return s;
}

struct ToyGrads {
  std::vector<real> grid, head, dec, env_base;
  real log_tau = 0;
};

struct ToyForwardOut {
  std::vector<RayForward> forwards;
  LossBreakdown lb;
  std::int64_t n_payload = 0;
  std::vector<real> d_sig;
  real p_mean[kMaxFeatureChannels] = {};
};

// Mirrors the training-loop loss assembly on the toy batch.
void toy_forward(ToyScene& s, const LossSelect& sel, ToyForwardOut& out,
                 std::vector<RayOutputGrads>* ray_grads) {
  if (sel.material()) rebuild_env(s.model.env);
  RenderSettings st = toy_settings(s, sel);
  const int n_rays = int(s.batch.size());
  const int latent_dim = s.model.grid.channels - 1;
  out.forwards.assign(n_rays, RayForward{});
  RenderWorkspace ws;
  for (int i = 0; i < n_rays; ++i) {
    RenderSettings si = st;
    si.bg_srgb = s.batch[i].bg_srgb;
    render_ray(s.model, s.batch[i].ray, si, nullptr, s.batch[i].t_seed, out.forwards[i], ws);
  }

  LossBreakdown lb;
  const real inv3r = 1.0 / (3.0 * n_rays);
  const real invr = 1.0 / n_rays;
  auto sgn = [](real x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); };
  if (ray_grads) ray_grads->assign(n_rays, RayOutputGrads{});

  for (int i = 0; i < n_rays; ++i) {
    const auto& f = out.forwards[i];
    if (sel.c_tex) {
      Rgb d = f.tex_srgb - s.batch[i].gt_srgb;
      lb.c_tex += s.weights.c1 * (std::fabs(d.x) + std::fabs(d.y) + std::fabs(d.z)) * inv3r +
                  s.weights.c2 * dot(d, d) * inv3r;
      if (ray_grads)
        (*ray_grads)[i].d_tex_srgb =
            Rgb{sgn(d.x), sgn(d.y), sgn(d.z)} * (s.weights.c1 * inv3r) +
            d * (2 * s.weights.c2 * inv3r);
    }
    if (sel.c_mat) {
      Rgb d = f.mat_srgb - s.batch[i].gt_srgb;
      lb.c_mat += s.weights.c1 * (std::fabs(d.x) + std::fabs(d.y) + std::fabs(d.z)) * inv3r +
                  s.weights.c2 * dot(d, d) * inv3r;
      if (ray_grads)
        (*ray_grads)[i].d_mat_srgb =
            Rgb{sgn(d.x), sgn(d.y), sgn(d.z)} * (s.weights.c1 * inv3r) +
            d * (2 * s.weights.c2 * inv3r);
    }
    if (sel.mask) {
      real op = clamp(f.opacity, 1e-5, 1.0 - 1e-5);
      lb.mask += -s.weights.mask * invr *
                 (s.batch[i].gt_mask * std::log(op) +
                  (1.0 - s.batch[i].gt_mask) * std::log(1.0 - op));
      if (ray_grads && f.opacity > 1e-5 && f.opacity < 1.0 - 1e-5)
        (*ray_grads)[i].d_opacity += s.weights.mask * invr *
                                     (-s.batch[i].gt_mask / op +
                                      (1.0 - s.batch[i].gt_mask) / (1.0 - op));
    }
  }

  out.n_payload = 0;
  real smooth_total = 0;
  if (sel.mat_reg) {
    const int c_latent = latent_dim;
    for (int c = 0; c < c_latent; ++c) out.p_mean[c] = 0;
    for (const auto& f : out.forwards) {
      out.n_payload += f.n_payload;
      smooth_total += f.smooth_sum;
      for (int c = 0; c < c_latent; ++c) out.p_mean[c] += f.sig_sum[c];
    }
    out.d_sig.assign(c_latent, 0.0);
    if (out.n_payload > 0) {
      for (int c = 0; c < c_latent; ++c) {
        out.p_mean[c] /= real(out.n_payload);
        lb.mat_kl += s.weights.mf1 * bern_kl(0.05, out.p_mean[c]);
        real p = out.p_mean[c];
        if (p > 1e-4 && p < 1.0 - 1e-4)
          out.d_sig[c] = s.weights.mf1 * (-0.05 / p + 0.95 / (1.0 - p)) / real(out.n_payload);
      }
      lb.mat_smooth = s.weights.mf2 * smooth_total / real(out.n_payload);
      if (ray_grads)
        for (auto& g : *ray_grads) {
          g.d_sig = out.d_sig.data();
          g.smooth_scale = s.weights.mf2 / real(out.n_payload);
        }
    }
  }

  if (sel.patch) {
    std::vector<int> rays;
    real occ_acc = 0;
    int occ_n = 0;
    for (int i = 0; i < n_rays; ++i) {
      if (s.batch[i].patch_id != 0 || !out.forwards[i].has_surface) continue;
      rays.push_back(i);
      occ_acc += sqr(out.forwards[i].e_o);
      ++occ_n;
    }
    if (rays.size() >= 2) {
      const real n = real(rays.size());
      for (int c = 0; c < 3; ++c) {
        real mean = 0;
        for (int ri : rays) mean += out.forwards[ri].e_kd[c];
        mean /= n;
        real var = 0;
        for (int ri : rays) var += sqr(out.forwards[ri].e_kd[c] - mean);
        real stdev = std::sqrt(std::max(var / n, 0.0));
        lb.mat_patch += s.weights.mid * stdev / 3.0;
        if (ray_grads) {
          real denom = n * std::max(stdev, 1e-6);
          for (int ri : rays)
            (*ray_grads)[ri].d_e_kd[c] +=
                s.weights.mid / 3.0 * (out.forwards[ri].e_kd[c] - mean) / denom;
        }
      }
      auto scalar_term = [&](auto getter, real weight, auto setter) {
        real mean = 0;
        for (int ri : rays) mean += getter(out.forwards[ri]);
        mean /= n;
        real var = 0;
        for (int ri : rays) var += sqr(getter(out.forwards[ri]) - mean);
        real stdev = std::sqrt(std::max(var / n, 0.0));
        lb.mat_patch += weight * stdev;
        if (ray_grads) {
          real denom = n * std::max(stdev, 1e-6);
          for (int ri : rays)
            setter((*ray_grads)[ri], weight * (getter(out.forwards[ri]) - mean) / denom);
        }
      };
      scalar_term([](const RayForward& f) { return f.e_r; }, s.weights.mir,
                  [](RayOutputGrads& g, real v) { g.d_e_r += v; });
      scalar_term([](const RayForward& f) { return f.e_m; }, s.weights.mim,
                  [](RayOutputGrads& g, real v) { g.d_e_m += v; });
    }
    if (occ_n > 0) {
      lb.mat_occ = s.weights.mio * occ_acc / occ_n;
      if (ray_grads)
        for (int ri : rays)
          (*ray_grads)[ri].d_e_o += s.weights.mio * 2.0 * out.forwards[ri].e_o / occ_n;
    }
  }

  if (sel.sdf_reg) {
    SdfRegResult sr = sdf_reg_losses(s.model.grid, s.reg_points, s.weights.sa);
    lb.sdf_eik = s.weights.se * sr.eikonal;
    lb.sdf_sparse = s.weights.ss * sr.sparsity;
  }
  if (sel.light) lb.light = s.weights.light * light_reg_loss(s.model.env.base);
  out.lb = lb;
}

real toy_loss(ToyScene& s, const LossSelect& sel) {
  ToyForwardOut out;
  toy_forward(s, sel, out, nullptr);
  return out.lb.total();
}

ToyGrads toy_grads(ToyScene& s, const LossSelect& sel) {
  ToyForwardOut out;
  std::vector<RayOutputGrads> ray_grads;
  toy_forward(s, sel, out, &ray_grads);

  GradSink sink;
  sink.init(s.model);
  RenderWorkspace ws;
  RenderSettings st = toy_settings(s, sel);
  RayForward scratch;
  for (std::size_t i = 0; i < s.batch.size(); ++i) {
    RenderSettings si = st;
    si.bg_srgb = s.batch[i].bg_srgb;
    render_ray(s.model, s.batch[i].ray, si, nullptr, s.batch[i].t_seed, scratch, ws,
               &ray_grads[i], &sink);
  }

  ToyGrads g;
  g.grid.assign(s.model.grid.values.size(), 0.0);
  g.head.assign(s.model.head.coeffs.size(), 0.0);
  g.dec.assign(s.model.decoder.param_count(), 0.0);
  g.env_base.assign(s.model.env.base.texels.size(), 0.0);
  for (int node : sink.grid_touched) {
    const float* src = &sink.grid[std::size_t(node) * s.model.grid.channels];
    for (int c = 0; c < s.model.grid.channels; ++c)
      g.grid[std::size_t(node) * s.model.grid.channels + c] += real(src[c]);
  }
  for (int node : sink.head_touched) {
    const float* src = &sink.head[std::size_t(node) * kShBasis * 3];
    for (int c = 0; c < kShBasis * 3; ++c)
      g.head[std::size_t(node) * kShBasis * 3 + c] += real(src[c]);
  }
  for (std::size_t k = 0; k < g.dec.size(); ++k) g.dec[k] += sink.decoder[k];
  g.log_tau = sink.dlog_tau;

  if (sel.sdf_reg)
    sdf_reg_backward(s.model.grid, s.reg_points, s.weights.sa, s.weights.se, s.weights.ss,
                     g.grid);
  if (sel.light) light_reg_backward(s.model.env.base, s.weights.light, sink.env.base);
  if (sel.material() || sel.light) {
    prefilter_backward(s.model.env, sink.env);
    g.env_base = sink.env.base;
  }
  return g;
}

struct BufferRef {
  real* data;
  std::size_t size;
  const real* analytic;
  // restrict candidate indices (e.g. SDF channel only); empty = all
  std::function<bool(std::size_t)> filter;
};

real rel_err(real fd, real an) {
  real denom = std::max(std::fabs(fd), std::fabs(an));
  if (denom < 1e-8) return 0.0;
  return std::fabs(fd - an) / denom;
}

// Central difference with kink-aware refinement: steps straddling a
// piecewise-linear boundary (LUT bins, mip lerp, clamps) re-test smaller.
real checked_rel_err(ToyScene& s, const LossSelect& sel, real* param, real analytic, real h,
                     real tol) {
  auto central = [&](real step) {
    real saved = *param;
    *param = saved + step;
    real lp = toy_loss(s, sel);
    *param = saved - step;
    real lm = toy_loss(s, sel);
    *param = saved;
    return (lp - lm) / (2 * step);
  };
  real err = rel_err(central(h), analytic);
  if (err > tol) {
    err = std::min(err, rel_err(central(h / 8), analytic));
    err = std::min(err, rel_err(central(h / 64), analytic));
  }
  return err;
}

GradCheckRow check_buffer(ToyScene& s, const LossSelect& sel, const std::string& name,
                          const BufferRef& buf, int max_checks, real h, real tol,
                          Pcg32& rng) {
  GradCheckRow row;
  row.path = name;
  // rank candidates by |analytic| and add a few random ones
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < buf.size; ++i)
    if (!buf.filter || buf.filter(i)) candidates.push_back(i);
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(buf.analytic[a]) > std::fabs(buf.analytic[b]);
  });
  std::vector<std::size_t> picks;
  for (std::size_t i = 0; i < candidates.size() && int(picks.size()) < max_checks * 3 / 4; ++i)
    picks.push_back(candidates[i]);
  while (int(picks.size()) < max_checks && !candidates.empty())
    picks.push_back(candidates[rng.next_below(std::uint32_t(candidates.size()))]);

  for (std::size_t idx : picks) {
    real err = checked_rel_err(s, sel, &buf.data[idx], buf.analytic[idx], h, tol);
    row.max_rel_err = std::max(row.max_rel_err, err);
    ++row.checked;
  }
  row.pass = row.max_rel_err <= tol;
  return row;
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed) {
  GradCheckReport report;
  const real h = report.fd_step;
  const real tol = report.tolerance;
  ToyScene scene = build_toy(seed);
  Pcg32 rng(seed, 0xfd);
  const int channels = scene.model.grid.channels;

  auto run = [&](const std::string& name, const LossSelect& sel,
                 const std::string& which, int max_checks) {
    ToyGrads g = toy_grads(scene, sel);
    BufferRef buf;
    if (which == "grid_sdf") {
      buf = {scene.model.grid.values.data(), scene.model.grid.values.size(), g.grid.data(),
             [channels](std::size_t i) { return i % channels == 0; }};
    } else if (which == "grid_latent") {
      buf = {scene.model.grid.values.data(), scene.model.grid.values.size(), g.grid.data(),
             [channels](std::size_t i) { return i % channels != 0; }};
    } else if (which == "grid_all") {
      buf = {scene.model.grid.values.data(), scene.model.grid.values.size(), g.grid.data(), {}};
    } else if (which == "head") {
      buf = {scene.model.head.coeffs.data(), scene.model.head.coeffs.size(), g.head.data(), {}};
    } else if (which == "env") {
      buf = {scene.model.env.base.texels.data(), scene.model.env.base.texels.size(),
             g.env_base.data(), {}};
    } else if (which == "log_tau") {
      buf = {&scene.model.log_tau, 1, &g.log_tau, {}};
    }
    report.rows.push_back(check_buffer(scene, sel, name, buf, max_checks, h, tol, rng));
  };

  LossSelect geo;
  geo.c_tex = true;
  geo.mask = true;
  run("grid.sdf -> alpha -> composite -> color+mask", geo, "grid_sdf", 32);

  LossSelect mat;
  mat.c_mat = true;
  run("grid.latent -> material -> shading -> color", mat, "grid_latent", 32);
  run("cubemap.base -> prefilter -> shading -> color", mat, "env", 32);

  LossSelect taus;
  taus.c_tex = true;
  taus.c_mat = true;
  taus.mask = true;
  run("log_tau -> alpha -> losses", taus, "log_tau", 1);

  LossSelect tex;
  tex.c_tex = true;
  run("sh_head -> radiance -> color", tex, "head", 32);

  // decoder parameters: check the four sub-buffers against one grad layout
  {
    ToyGrads g = toy_grads(scene, mat);
    GradCheckRow row;
    row.path = "decoder.params -> material -> color";
    std::size_t off = 0;
    auto sub = [&](std::vector<real>& params, int n_checks) {
      Pcg32 sub_rng(seed_of(seed, off), 2);
      for (int k = 0; k < n_checks && !params.empty(); ++k) {
        std::size_t idx = sub_rng.next_below(std::uint32_t(params.size()));
        real err = checked_rel_err(scene, mat, &params[idx], g.dec[off + idx], h, tol);
        row.max_rel_err = std::max(row.max_rel_err, err);
        ++row.checked;
      }
      off += params.size();
    };
    sub(scene.model.decoder.w1, 10);
    sub(scene.model.decoder.b1, 4);
    sub(scene.model.decoder.w2, 10);
    sub(scene.model.decoder.b2, 4);
    row.pass = row.max_rel_err <= tol;
    report.rows.push_back(row);
  }

  LossSelect matreg;
  matreg.mat_reg = true;
  run("latent regs (KL + smoothness) -> grid", matreg, "grid_latent", 24);

  LossSelect patch;
  patch.c_mat = false;
  patch.patch = true;
  run("patch std + occlusion -> grid", patch, "grid_all", 24);

  LossSelect sdfreg;
  sdfreg.sdf_reg = true;
  run("sdf regs (eikonal + sparsity) -> grid", sdfreg, "grid_sdf", 24);

  LossSelect lightsel;
  lightsel.light = true;
  lightsel.c_mat = true;  // exercises both light paths into the base
  run("light prior + shading -> cubemap.base", lightsel, "env", 24);

  LossSelect all;
  all.c_tex = all.c_mat = all.mask = all.sdf_reg = all.mat_reg = all.patch = all.light = true;
  run("total loss -> grid (all channels)", all, "grid_all", 24);
  run("total loss -> cubemap.base", all, "env", 16);
  run("total loss -> log_tau", all, "log_tau", 1);

  return report;
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream os;
  os << "finite-difference gradient checks (step " << report.fd_step << ", tolerance "
     << report.tolerance << ")\n";
  for (const auto& r : report.rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "  [%s] %-48s n=%-3d max_rel=%.3e\n",
                  r.pass ? "PASS" : "FAIL", r.path.c_str(), r.checked, r.max_rel_err);
    os << line;
  }
  os << (report.all_pass() ? "all gradient paths PASS\n" : "gradient check FAILURES present\n");
  return os.str();
}

}  // namespace pirsurf
