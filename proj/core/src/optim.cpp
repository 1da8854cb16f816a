#include "pirsurf/optim.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "pirsurf/checkpoint.hpp"
#include "pirsurf/threads.hpp"

namespace pirsurf {

namespace fs = std::filesystem;

std::string LossBreakdown::first_non_finite() const {
  const struct {
    const char* name;
    real v;
  } items[] = {{"c_mat", c_mat},         {"c_tex", c_tex},           {"mask", mask},
               {"sdf_eik", sdf_eik},     {"sdf_sparse", sdf_sparse}, {"mat_kl", mat_kl},
               {"mat_smooth", mat_smooth}, {"mat_patch", mat_patch}, {"mat_occ", mat_occ},
               {"light", light}};
  for (const auto& it : items)
    if (!std::isfinite(it.v)) return it.name;
  return "";
}

std::pair<real, real> image_losses(std::span<const Rgb> pred, std::span<const Rgb> gt,
                                   std::span<const real> pred_opacity,
                                   std::span<const real> gt_mask, const LossWeights& w) {
  if (pred.size() != gt.size() || pred.size() != pred_opacity.size() ||
      pred.size() != gt_mask.size())
    throw PirError("image_losses: shape mismatch");
  const real n = real(pred.size());
  real l1 = 0, l2 = 0, bce = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Rgb d = pred[i] - gt[i];
    l1 += std::fabs(d.x) + std::fabs(d.y) + std::fabs(d.z);
    l2 += d.x * d.x + d.y * d.y + d.z * d.z;
    real op = clamp(pred_opacity[i], 1e-5, 1.0 - 1e-5);
    bce += -(gt_mask[i] * std::log(op) + (1.0 - gt_mask[i]) * std::log(1.0 - op));
  }
  real color = w.c1 * l1 / (3 * n) + w.c2 * l2 / (3 * n);
  real mask = w.mask * bce / n;
  return {color, mask};
}

real lr_schedule(int step, real base_lr, int warmup, int total_steps, real final_ratio) {
  if (step < 0) throw PirError("lr_schedule: negative step");
  if (warmup > 0 && step < warmup)
    return base_lr * (0.01 + 0.99 * real(step) / real(warmup));
  if (total_steps <= warmup) return base_lr;
  real t = real(step - warmup) / real(total_steps - warmup);
  return base_lr * std::exp(std::log(final_ratio) * t);
}

void adam_update(std::span<real> params, std::span<const real> grads, std::span<real> m,
                 std::span<real> v, int t, real lr, real beta1, real beta2, real eps) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
    throw PirError("adam_update: shape mismatch");
  const real c1 = 1.0 - std::pow(beta1, t);
  const real c2 = 1.0 - std::pow(beta2, t);
  real* p = params.data();
  const real* g = grads.data();
  real* mm = m.data();
  real* vv = v.data();
  parallel_for(std::int64_t(params.size()), [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t i = b; i < e; ++i) {
      mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
      real mhat = mm[i] / c1;
      real vhat = vv[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  });
}

namespace {

struct MaskedIndex {
  std::vector<std::vector<int>> pixels;  // masked-in flat pixel ids per frame
  std::vector<std::int64_t> cumulative;  // prefix sums, size frames+1
  std::int64_t total = 0;
};

MaskedIndex build_masked_index(const std::vector<LoadedFrame>& frames) {
  MaskedIndex idx;
  idx.pixels.resize(frames.size());
  idx.cumulative.assign(frames.size() + 1, 0);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& m = frames[f].mask;
    for (std::size_t p = 0; p < m.size(); ++p)
      if (m[p]) idx.pixels[f].push_back(int(p));
    idx.cumulative[f + 1] = idx.cumulative[f] + std::int64_t(idx.pixels[f].size());
  }
  idx.total = idx.cumulative.back();
  return idx;
}

void sample_training_rays_indexed(const std::vector<LoadedFrame>& frames, const MaskedIndex& idx,
                                  int n_rays, int patch_size, std::uint64_t seed, int step,
                                  std::vector<RayBatchEntry>& out, int* n_patches) {
  if (n_rays % 2 != 0) throw PirError("sample_training_rays: n_rays must be even");
  const int half = n_rays / 2;
  const int ps2 = patch_size * patch_size;
  if (half % ps2 != 0)
    throw PirError("sample_training_rays: patch_size^2 must divide n_rays/2");
  const int patches = half / ps2;
  if (frames.empty()) throw PirError("sample_training_rays: empty dataset");
  for (const auto& f : frames)
    if (f.camera.width < patch_size || f.camera.height < patch_size)
      throw PirError("sample_training_rays: image smaller than patch");
  if (idx.total == 0) throw PirError("sample_training_rays: no masked-in pixels");

  out.clear();
  out.reserve(n_rays);
  Pcg32 rng(seed_of(seed, std::uint64_t(step), 0xba7c), 5);

  auto push_entry = [&](int frame_id, int px, int py, int patch_id) {
    const LoadedFrame& frame = frames[frame_id];
    RayBatchEntry e;
    e.ray = generate_ray(frame.camera, px, py);
    e.bg_srgb = {rng.next_real(), rng.next_real(), rng.next_real()};
    std::size_t flat = std::size_t(py) * frame.camera.width + px;
    if (frame.mask[flat]) {
      e.gt_srgb = frame.image.at(px, py);
      e.gt_mask = 1.0;
    } else {
      e.gt_srgb = e.bg_srgb;  // fresh random value for masked-out pixels
      e.gt_mask = 0.0;
    }
    e.patch_id = patch_id;
    e.frame = frame_id;
    e.px = px;
    e.py = py;
    e.t_seed = seed_of(seed, std::uint64_t(step), 0x5107, out.size());
    out.push_back(e);
  };

  for (int p = 0; p < patches; ++p) {
    int f = int(rng.next_below(std::uint32_t(frames.size())));
    const auto& frame = frames[f];
    int x0 = int(rng.next_below(std::uint32_t(frame.camera.width - patch_size + 1)));
    int y0 = int(rng.next_below(std::uint32_t(frame.camera.height - patch_size + 1)));
    for (int dy = 0; dy < patch_size; ++dy)
      for (int dx = 0; dx < patch_size; ++dx) push_entry(f, x0 + dx, y0 + dy, p);
  }
  for (int i = 0; i < half; ++i) {
    std::int64_t k = std::int64_t(rng.next_below(std::uint32_t(idx.total)));
    std::size_t f = 0;
    while (idx.cumulative[f + 1] <= k) ++f;
    int flat = idx.pixels[f][std::size_t(k - idx.cumulative[f])];
    push_entry(int(f), flat % frames[f].camera.width, flat / frames[f].camera.width, -1);
  }
  if (n_patches) *n_patches = patches;
}

}  // namespace

void sample_training_rays(const std::vector<LoadedFrame>& frames, int n_rays, int patch_size,
                          std::uint64_t seed, int step, std::vector<RayBatchEntry>& out,
                          int* n_patches) {
  MaskedIndex idx = build_masked_index(frames);
  sample_training_rays_indexed(frames, idx, n_rays, patch_size, seed, step, out, n_patches);
}

std::vector<Vec3> training_reg_points(std::uint64_t seed, int step, int count, real rad) {
  std::vector<Vec3> pts(count);
  Pcg32 rng(seed_of(seed, std::uint64_t(step), 0x2e9), 11);
  for (auto& p : pts)
    p = {(2 * rng.next_real() - 1) * rad, (2 * rng.next_real() - 1) * rad,
         (2 * rng.next_real() - 1) * rad};
  return pts;
}

namespace {

struct PatchStats {
  std::vector<int> rays;  // qualifying ray indices
};

// population std with a zero-safe forward; the backward uses a floored std
real pop_std(const std::vector<real>& xs, real mean) {
  real var = 0;
  for (real x : xs) var += sqr(x - mean);
  var /= real(xs.size());
  return std::sqrt(std::max(var, 0.0));
}

}  // namespace

real patch_material_loss(std::span<const RayForward> forwards,
                         std::span<const RayBatchEntry> batch, int n_patches,
                         const LossWeights& w, real* occ_term) {
  std::vector<PatchStats> patches(n_patches);
  real occ_acc = 0;
  int occ_n = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    int pid = batch[i].patch_id;
    if (pid < 0) continue;
    if (!forwards[i].has_surface) continue;
    patches[pid].rays.push_back(int(i));
    occ_acc += sqr(forwards[i].e_o);
    ++occ_n;
  }
  real loss = 0;
  std::vector<real> vals;
  for (const auto& p : patches) {
    if (p.rays.size() < 2) continue;
    const real n = real(p.rays.size());
    real kd_std = 0;
    for (int c = 0; c < 3; ++c) {
      vals.clear();
      real mean = 0;
      for (int ri : p.rays) {
        vals.push_back(forwards[ri].e_kd[c]);
        mean += forwards[ri].e_kd[c];
      }
      mean /= n;
      kd_std += pop_std(vals, mean);
    }
    loss += w.mid * kd_std / 3.0;
    vals.clear();
    real mean_r = 0;
    for (int ri : p.rays) {
      vals.push_back(forwards[ri].e_r);
      mean_r += forwards[ri].e_r;
    }
    loss += w.mir * pop_std(vals, mean_r / n);
    vals.clear();
    real mean_m = 0;
    for (int ri : p.rays) {
      vals.push_back(forwards[ri].e_m);
      mean_m += forwards[ri].e_m;
    }
    loss += w.mim * pop_std(vals, mean_m / n);
  }
  real occ = occ_n > 0 ? w.mio * occ_acc / occ_n : 0.0;
  if (occ_term) *occ_term = occ;
  return loss + occ;
}

SceneModel init_model(const TrainConfig& c, real rad) {
  SceneModel model;
  model.grid = make_feature_grid(c.grid_res, rad, c.grid_channels);
  init_grid_sphere(model.grid, c.sphere_init_ratio * rad, c.latent_sigma, c.seed);
  model.head = make_radiance_head(c.head_res, rad);
  model.decoder = make_material_decoder(c.grid_channels - 1, 32, c.seed);
  model.env = make_env_cubemap(c.env_face_res, c.init_env_value, c.env_prefilter_samples, c.seed);
  model.lut = bake_splitsum_lut(c.lut_size, c.lut_samples, c.seed);
  model.log_tau = c.init_log_tau;
  return model;
}

namespace {

struct AdamState {
  std::vector<real> m, v;
  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

void write_csv_header(std::ofstream& f) {
  f << "step,c_mat,c_tex,mask,sdf_eik,sdf_sparse,mat_kl,mat_smooth,mat_patch,mat_occ,light,"
       "total,lr_a,lr_b,tau\n";
}

void write_csv_row(std::ofstream& f, int step, const LossBreakdown& lb, real lr_a, real lr_b,
                   real tau) {
  char buf[640];
  std::snprintf(buf, sizeof(buf),
                "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                "%.17g\n",
                step, lb.c_mat, lb.c_tex, lb.mask, lb.sdf_eik, lb.sdf_sparse, lb.mat_kl,
                lb.mat_smooth, lb.mat_patch, lb.mat_occ, lb.light, lb.total(), lr_a, lr_b, tau);
  f << buf;
}

}  // namespace

TrainResult run_training(const SceneManifest& manifest, const TrainConfig& config) {
  fs::create_directories(config.out_dir);
  std::vector<LoadedFrame> frames = load_frames(manifest);
  if (frames.empty()) throw PirError("run_training: scene has no frames");
  MaskedIndex masked = build_masked_index(frames);

  SceneModel model = init_model(config, manifest.rad);
  OccupancyGrid occ = make_occupancy_grid(config.occ_res, manifest.rad);

  // optimizer A: grid + SH head + log tau; optimizer B: decoder + cubemap
  AdamState ad_grid, ad_head, ad_tau, ad_dec, ad_env;
  ad_grid.init(model.grid.values.size());
  ad_head.init(model.head.coeffs.size());
  ad_tau.init(1);
  ad_dec.init(model.decoder.param_count());
  ad_env.init(model.env.base.texels.size());

  std::vector<real> grid_grad(model.grid.values.size(), 0.0);
  std::vector<real> head_grad(model.head.coeffs.size(), 0.0);
  std::vector<real> dec_grad(model.decoder.param_count(), 0.0);
  EnvGrad env_grad;
  env_grad.init(model.env);
  real tau_grad = 0;

  const int workers = thread_count();
  std::vector<std::unique_ptr<GradSink>> sinks(workers);
  std::vector<std::unique_ptr<RenderWorkspace>> workspaces(workers);
  for (int w = 0; w < workers; ++w) {
    sinks[w] = std::make_unique<GradSink>();
    sinks[w]->init(model);
    workspaces[w] = std::make_unique<RenderWorkspace>();
  }

  std::ofstream csv(config.out_dir + "/metrics.csv");
  if (!csv) throw PirError("cannot write metrics log in " + config.out_dir);
  write_csv_header(csv);

  std::vector<RayBatchEntry> batch;
  std::vector<RayForward> forwards;
  std::vector<RayOutputGrads> ray_grads;
  std::vector<Vec3> reg_points(config.reg_points);

  const int latent_dim = model.grid.channels - 1;
  std::vector<real> d_sig(latent_dim, 0.0);

  TrainResult result;
  const std::string ckpt_final = config.out_dir + "/checkpoint_final.bin";

  for (int step = 0; step < config.steps; ++step) {
    const bool material_on = step >= config.material_start;
    const real tau = model.tau();

    if (step % config.occ_every == 0)
      update_occupancy(occ, model.grid, tau, config.occ_threshold);

    sample_training_rays_indexed(frames, masked, config.rays_per_step, config.patch_size,
                                 config.seed, step, batch, nullptr);
    const int n_rays = int(batch.size());
    const int n_patches = (config.rays_per_step / 2) / (config.patch_size * config.patch_size);

    RenderSettings settings;
    settings.samples_per_ray = config.samples_per_ray;
    settings.cos_anneal = config.anneal_steps > 0
                              ? clamp(real(step) / config.anneal_steps, 0.0, 1.0)
                              : 1.0;
    settings.radiance_branch = true;
    settings.material_branch = material_on;
    settings.smooth_eps = material_on ? config.smooth_eps : 0.0;
    settings.grad_shading_normal = config.grad_shading_normal;
    settings.seed = config.seed;

    // ---- phase A: forward ----
    forwards.assign(n_rays, RayForward{});
    parallel_for(n_rays, [&](std::int64_t b, std::int64_t e, int w) {
      for (std::int64_t i = b; i < e; ++i) {
        RenderSettings s = settings;
        s.bg_srgb = batch[i].bg_srgb;
        render_ray(model, batch[i].ray, s, &occ, batch[i].t_seed, forwards[i], *workspaces[w]);
      }
    });

    // ---- losses ----
    LossBreakdown lb;
    const real inv3r = 1.0 / (3.0 * n_rays);
    const real invr = 1.0 / n_rays;
    {
      real l1m = 0, l2m = 0, l1t = 0, l2t = 0, bce = 0;
      for (int i = 0; i < n_rays; ++i) {
        Rgb dt = forwards[i].tex_srgb - batch[i].gt_srgb;
        l1t += std::fabs(dt.x) + std::fabs(dt.y) + std::fabs(dt.z);
        l2t += dot(dt, dt);
        if (material_on) {
          Rgb dm = forwards[i].mat_srgb - batch[i].gt_srgb;
          l1m += std::fabs(dm.x) + std::fabs(dm.y) + std::fabs(dm.z);
          l2m += dot(dm, dm);
        }
        real op = clamp(forwards[i].opacity, 1e-5, 1.0 - 1e-5);
        bce += -(batch[i].gt_mask * std::log(op) +
                 (1.0 - batch[i].gt_mask) * std::log(1.0 - op));
      }
      lb.c_tex = config.weights.c1 * l1t * inv3r + config.weights.c2 * l2t * inv3r;
      if (material_on)
        lb.c_mat = config.weights.c1 * l1m * inv3r + config.weights.c2 * l2m * inv3r;
      lb.mask = config.weights.mask * bce * invr;
    }

    // latent regularizers
    std::int64_t n_payload = 0;
    real smooth_total = 0;
    real p_mean[kMaxFeatureChannels] = {};
    if (material_on) {
      for (int i = 0; i < n_rays; ++i) {
        n_payload += forwards[i].n_payload;
        smooth_total += forwards[i].smooth_sum;
        for (int c = 0; c < latent_dim; ++c) p_mean[c] += forwards[i].sig_sum[c];
      }
      if (n_payload > 0) {
        for (int c = 0; c < latent_dim; ++c) {
          p_mean[c] /= real(n_payload);
          lb.mat_kl += config.weights.mf1 * bern_kl(0.05, p_mean[c]);
          real p = p_mean[c];
          if (p > 1e-4 && p < 1.0 - 1e-4)
            d_sig[c] = config.weights.mf1 * (-0.05 / p + 0.95 / (1.0 - p)) / real(n_payload);
          else
            d_sig[c] = 0;
        }
        lb.mat_smooth = config.weights.mf2 * smooth_total / real(n_payload);
      } else {
        std::fill(d_sig.begin(), d_sig.end(), 0.0);
      }
    }

    // SDF regularizers on uniform domain points (forward value + gradient)
    {
      reg_points = training_reg_points(config.seed, step, config.reg_points, manifest.rad);
      SdfRegResult sr = sdf_reg_backward(model.grid, reg_points, config.weights.sa,
                                         config.weights.se, config.weights.ss, grid_grad);
      lb.sdf_eik = config.weights.se * sr.eikonal;
      lb.sdf_sparse = config.weights.ss * sr.sparsity;
    }

    // patch regularizer (values + per-ray pullbacks)
    ray_grads.assign(n_rays, RayOutputGrads{});
    if (material_on) {
      std::vector<std::vector<int>> patch_rays(n_patches);
      real occ_acc = 0;
      int occ_n = 0;
      for (int i = 0; i < n_rays; ++i) {
        if (batch[i].patch_id < 0 || !forwards[i].has_surface) continue;
        patch_rays[batch[i].patch_id].push_back(i);
        occ_acc += sqr(forwards[i].e_o);
        ++occ_n;
      }
      real patch_loss = 0;
      for (const auto& rays : patch_rays) {
        if (rays.size() < 2) continue;
        const real n = real(rays.size());
        // kd channels
        for (int c = 0; c < 3; ++c) {
          real mean = 0;
          for (int ri : rays) mean += forwards[ri].e_kd[c];
          mean /= n;
          real var = 0;
          for (int ri : rays) var += sqr(forwards[ri].e_kd[c] - mean);
          real stdev = std::sqrt(std::max(var / n, 0.0));
          patch_loss += config.weights.mid * stdev / 3.0;
          real denom = n * std::max(stdev, 1e-6);
          for (int ri : rays)
            ray_grads[ri].d_e_kd[c] +=
                config.weights.mid / 3.0 * (forwards[ri].e_kd[c] - mean) / denom;
        }
        auto scalar_term = [&](auto getter, real weight, auto setter) {
          real mean = 0;
          for (int ri : rays) mean += getter(forwards[ri]);
          mean /= n;
          real var = 0;
          for (int ri : rays) var += sqr(getter(forwards[ri]) - mean);
          real stdev = std::sqrt(std::max(var / n, 0.0));
          patch_loss += weight * stdev;
          real denom = n * std::max(stdev, 1e-6);
          for (int ri : rays) setter(ray_grads[ri], weight * (getter(forwards[ri]) - mean) / denom);
        };
        scalar_term([](const RayForward& f) { return f.e_r; }, config.weights.mir,
                    [](RayOutputGrads& g, real v) { g.d_e_r += v; });
        scalar_term([](const RayForward& f) { return f.e_m; }, config.weights.mim,
                    [](RayOutputGrads& g, real v) { g.d_e_m += v; });
      }
      lb.mat_patch = patch_loss;
      if (occ_n > 0) {
        lb.mat_occ = config.weights.mio * occ_acc / occ_n;
        for (int i = 0; i < n_rays; ++i) {
          if (batch[i].patch_id < 0 || !forwards[i].has_surface) continue;
          ray_grads[i].d_e_o += config.weights.mio * 2.0 * forwards[i].e_o / occ_n;
        }
      }
    }

    // illumination prior
    if (material_on) {
      lb.light = config.weights.light * light_reg_loss(model.env.base);
      light_reg_backward(model.env.base, config.weights.light, env_grad.base);
    }

    std::string bad = lb.first_non_finite();
    if (!bad.empty())
      throw PirError("non-finite loss component '" + bad + "' at step " + std::to_string(step));

    const real lr_a = lr_schedule(step, config.base_lr, config.warmup, config.steps,
                                  config.final_ratio);
    const real lr_b = material_on
                          ? lr_schedule(step - config.material_start, config.base_lr,
                                        config.warmup, config.steps - config.material_start,
                                        config.final_ratio)
                          : 0.0;
    write_csv_row(csv, step, lb, lr_a, lr_b, tau);
    if (step == 0) result.first = lb;
    result.last = lb;

    // ---- per-ray output gradients ----
    const real smooth_scale =
        material_on && n_payload > 0 ? config.weights.mf2 / real(n_payload) : 0.0;
    for (int i = 0; i < n_rays; ++i) {
      auto& g = ray_grads[i];
      Rgb dt = forwards[i].tex_srgb - batch[i].gt_srgb;
      auto sgn = [](real x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); };
      g.d_tex_srgb = Rgb{config.weights.c1 * sgn(dt.x), config.weights.c1 * sgn(dt.y),
                         config.weights.c1 * sgn(dt.z)} *
                         inv3r +
                     dt * (2.0 * config.weights.c2 * inv3r);
      if (material_on) {
        Rgb dm = forwards[i].mat_srgb - batch[i].gt_srgb;
        g.d_mat_srgb = Rgb{config.weights.c1 * sgn(dm.x), config.weights.c1 * sgn(dm.y),
                           config.weights.c1 * sgn(dm.z)} *
                           inv3r +
                       dm * (2.0 * config.weights.c2 * inv3r);
        g.d_sig = d_sig.data();
        g.smooth_scale = smooth_scale;
      }
      real op = forwards[i].opacity;
      if (op > 1e-5 && op < 1.0 - 1e-5) {
        g.d_opacity += config.weights.mask * invr *
                       (-batch[i].gt_mask / op + (1.0 - batch[i].gt_mask) / (1.0 - op));
      }
    }

    // ---- phase B: backward ----
    parallel_for(n_rays, [&](std::int64_t b, std::int64_t e, int w) {
      RayForward scratch;
      for (std::int64_t i = b; i < e; ++i) {
        RenderSettings s = settings;
        s.bg_srgb = batch[i].bg_srgb;
        render_ray(model, batch[i].ray, s, &occ, batch[i].t_seed, scratch, *workspaces[w],
                   &ray_grads[i], sinks[w].get());
      }
    });

    // deterministic merge in worker order
    for (int w = 0; w < workers; ++w) {
      GradSink& s = *sinks[w];
      for (int node : s.grid_touched) {
        const float* src = &s.grid[std::size_t(node) * model.grid.channels];
        real* dst = &grid_grad[std::size_t(node) * model.grid.channels];
        for (int c = 0; c < model.grid.channels; ++c) dst[c] += real(src[c]);
      }
      for (int node : s.head_touched) {
        const float* src = &s.head[std::size_t(node) * kShBasis * 3];
        real* dst = &head_grad[std::size_t(node) * kShBasis * 3];
        for (int c = 0; c < kShBasis * 3; ++c) dst[c] += real(src[c]);
      }
      for (std::size_t k = 0; k < dec_grad.size(); ++k) dec_grad[k] += s.decoder[k];
      env_grad.add(s.env);
      tau_grad += s.dlog_tau;
      s.clear_touched(model.grid.channels);
    }

    if (material_on) prefilter_backward(model.env, env_grad);

    // ---- optimizer A: grid, head, log tau ----
    adam_update(model.grid.values, grid_grad, ad_grid.m, ad_grid.v, step + 1, lr_a);
    adam_update(model.head.coeffs, head_grad, ad_head.m, ad_head.v, step + 1, lr_a);
    {
      std::span<real> p(&model.log_tau, 1);
      std::span<const real> g(&tau_grad, 1);
      adam_update(p, g, ad_tau.m, ad_tau.v, step + 1, config.tau_lr);
    }

    // ---- optimizer B: decoder + cubemap ----
    if (material_on) {
      const int tb = step - config.material_start + 1;
      std::size_t off = 0;
      auto sub = [&](std::vector<real>& params) {
        std::span<real> p(params.data(), params.size());
        std::span<const real> g(dec_grad.data() + off, params.size());
        std::span<real> m(ad_dec.m.data() + off, params.size());
        std::span<real> v(ad_dec.v.data() + off, params.size());
        adam_update(p, g, m, v, tb, lr_b);
        off += params.size();
      };
      sub(model.decoder.w1);
      sub(model.decoder.b1);
      sub(model.decoder.w2);
      sub(model.decoder.b2);
      adam_update(model.env.base.texels, env_grad.base, ad_env.m, ad_env.v, tb, lr_b);
      for (real& t : model.env.base.texels) t = std::max(t, 0.0);
      rebuild_env(model.env);
    }

    // clear global grads
    std::fill(grid_grad.begin(), grid_grad.end(), 0.0);
    std::fill(head_grad.begin(), head_grad.end(), 0.0);
    std::fill(dec_grad.begin(), dec_grad.end(), 0.0);
    env_grad.clear();
    tau_grad = 0;

    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
        step + 1 < config.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint_%06d.bin", step + 1);
      save_checkpoint(config.out_dir + name, model, step + 1, config.seed);
    }
  }

  save_checkpoint(ckpt_final, model, config.steps, config.seed);
  save_env(config.out_dir + "/env", model.env);
  result.checkpoint_path = ckpt_final;
  result.metrics_path = config.out_dir + "/metrics.csv";
  return result;
}

}  // namespace pirsurf
