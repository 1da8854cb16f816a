// Acceptance suite: one pass/fail line per criterion. Exit code 0 when every
// criterion passes, 1 otherwise (3 for non-authoritative dev runs at reduced
// step counts).

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "pirsurf/checkpoint.hpp"
#include "pirsurf/gradcheck.hpp"
#include "pirsurf/mesh.hpp"
#include "pirsurf/metrics.hpp"
#include "pirsurf/optim.hpp"
#include "pirsurf/threads.hpp"

using namespace pirsurf;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
bool g_authoritative = true;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// environments
// ---------------------------------------------------------------------------

Image latlong_from(const std::function<Rgb(const Vec3&)>& f, int h) {
  Image img(2 * h, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < 2 * h; ++x)
      img.set(x, y, f(latlong_dir((x + 0.5) / (2.0 * h), (y + 0.5) / h)));
  return img;
}

// grayscale sky with one dominant light
Image training_env() {
  Vec3 light = normalize(Vec3{0.45, 0.75, -0.5});
  return latlong_from(
      [&](const Vec3& d) {
        real v = 0.22 + 0.1 * (d.y + 1.0) * 0.5;
        real c = dot(d, light);
        if (c > 0.95) v += 3.5 * clamp((c - 0.95) / 0.02, 0.0, 1.0);
        return Rgb{v, v, v};
      },
      64);
}

Image relight_env() {
  Vec3 l1 = normalize(Vec3{-0.6, 0.55, 0.58});
  Vec3 l2 = normalize(Vec3{0.7, 0.2, 0.69});
  return latlong_from(
      [&](const Vec3& d) {
        real v = 0.15 + 0.05 * (d.x + 1.0) * 0.5;
        if (dot(d, l1) > 0.94) v += 4.0;
        if (dot(d, l2) > 0.88) v += 1.2;
        return Rgb{v, v, v};
      },
      64);
}

CubemapData fixture_env_base(int which, int res) {
  CubemapData cube(res);
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        Vec3 d = cube.texel_dir(face, i, j);
        Rgb v;
        switch (which) {
          case 0:  // vertical gradient sky
            v = {0.3 + 0.5 * (d.y + 1) * 0.5, 0.35 + 0.45 * (d.y + 1) * 0.5,
                 0.5 + 0.5 * (d.y + 1) * 0.5};
            break;
          case 1: {  // two soft blobs
            real a = std::exp(-8 * (1 - dot(d, normalize(Vec3{0.6, 0.6, 0.52}))));
            real b = std::exp(-12 * (1 - dot(d, normalize(Vec3{-0.5, 0.1, -0.86}))));
            v = {0.1 + 2.5 * a + 0.8 * b, 0.12 + 2.2 * a + 1.0 * b, 0.15 + 1.8 * a + 1.4 * b};
            break;
          }
          default:  // uniform plus a hard disc
            v = {0.8, 0.8, 0.8};
            if (dot(d, normalize(Vec3{0.2, 0.9, 0.38})) > 0.93) v = {6, 5.5, 5};
            break;
        }
        cube.store(face, i, j, v);
      }
  return cube;
}

FixtureSpec acceptance_fixture_spec(const std::string& dir) {
  FixtureSpec spec;
  spec.seed = 11;
  spec.rad = 1.5;
  spec.smooth_k = 0.12;
  FixturePrimitive sphere;
  sphere.type = FixturePrimitive::Type::kSphere;
  sphere.center = {0, 0.1, 0};
  sphere.radius = 0.5;
  FixturePrimitive torus;
  torus.type = FixturePrimitive::Type::kTorus;
  torus.center = {0, -0.28, 0};
  torus.major = 0.62;
  torus.minor = 0.17;
  spec.primitives = {sphere, torus};
  spec.materials.below = {{0.7, 0.3, 0.2}, 0.0, 0.8, 0.0};   // diffuse band
  spec.materials.above = {{0.8, 0.8, 0.8}, 0.0, 0.2, 0.9};   // glossy band
  spec.materials.band_normal = {0, 1, 0};
  spec.materials.band_offset = 0.12;
  spec.env_path = dir + "/env_train_src.pfm";
  spec.relight_env_path = dir + "/env_relight_src.pfm";
  spec.width = 128;
  spec.height = 128;
  spec.fov_y_deg = 45;
  spec.camera_distance = 3.2;
  spec.train_cameras = 50;
  spec.novel_cameras = 8;
  spec.relight_cameras = 8;
  spec.env_face_res = 64;
  return spec;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (float& v : out.data) {
    float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    v = std::round(c * 255.f) / 255.f;
  }
  return out;
}

real mean_psnr_against(const std::vector<Image>& preds, const SceneManifest& gt_manifest,
                       const std::vector<LoadedFrame>& gt_frames, bool masked, bool align) {
  real acc = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Image pred = quantize8(preds[i]);
    Image gt = gt_frames[i].image;
    const std::vector<std::uint8_t>* mask = masked ? &gt_frames[i].mask : nullptr;
    if (align) {
      // albedo protocol: per-channel scale matching over the mask
      Image gt_albedo = load_png(
          (fs::path(gt_manifest.base_dir) / gt_manifest.albedo_paths[i]).string());
      pred = albedo_scale_align(pred, gt_albedo, gt_frames[i].mask).aligned;
      acc += psnr(pred, gt_albedo, mask);
      continue;
    }
    acc += psnr(pred, gt, mask);
  }
  return acc / preds.size();
}

// ---------------------------------------------------------------------------

void criterion_1_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  GradCheckReport report_data = run_gradcheck(7);
  double dt = seconds_since(t0);
  real worst = 0;
  for (const auto& r : report_data.rows) worst = std::max(worst, r.max_rel_err);
  bool pass = report_data.all_pass() && dt <= 120.0;
  report("C1 gradient-suite", pass,
         fmt("%zu paths, worst rel err %.2e, %.1fs (budget 120s)", report_data.rows.size(),
             worst, dt));
  if (!report_data.all_pass()) std::fputs(format_report(report_data).c_str(), stdout);
}

void criterion_2_splitsum() {
  auto t0 = std::chrono::steady_clock::now();
  SplitSumLUT lut = bake_splitsum_lut(64, 4096, 0);
  std::vector<EnvCubemap> envs;
  for (int which = 0; which < 3; ++which) {
    EnvCubemap env;
    env.face_res = 32;
    env.samples_per_texel = 1024;
    env.seed = 2 + which;
    env.base = fixture_env_base(which, 32);
    rebuild_env(env);
    envs.push_back(std::move(env));
  }
  Pcg32 rng(99, 5);
  real acc = 0;
  int count = 0;
  for (int cfg = 0; cfg < 256; ++cfg) {
    const EnvCubemap& env = envs[cfg % 3];
    MaterialSample mat;
    mat.kd = {0.05 + 0.9 * rng.next_real(), 0.05 + 0.9 * rng.next_real(),
              0.05 + 0.9 * rng.next_real()};
    mat.o = 0.5 * rng.next_real();
    mat.r = 0.3 + 0.7 * rng.next_real();
    mat.m = rng.next_real();
    Vec3 n = normalize(Vec3{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()});
    Vec3 v = normalize(n + Vec3{0.5 * rng.next_gaussian(), 0.5 * rng.next_gaussian(),
                                0.5 * rng.next_gaussian()});
    if (dot(v, n) < 0.05) {
      --cfg;
      continue;
    }
    Rgb pir = shade_pir(mat, n, v, env, lut);
    Rgb ref = shade_reference_mc(mat, n, v, env.base, 100000, seed_of(1234, cfg));
    for (int c = 0; c < 3; ++c) acc += std::fabs(pir[c] - ref[c]) / (ref[c] + 1e-3);
    count += 3;
  }
  real mean_rel = acc / count;
  double dt = seconds_since(t0);
  report("C2 split-sum-fidelity", mean_rel <= 0.15 && dt <= 300.0,
         fmt("mean rel deviation %.4f (limit 0.15) over 256 configs x 3 envs, %.1fs", mean_rel,
             dt));
}

void criterion_3_lut_oracle() {
  SplitSumLUT lut = bake_splitsum_lut(64, 4096, 0);
  bool bounds_ok = true;
  for (int j = 0; j < lut.size && bounds_ok; ++j)
    for (int i = 0; i < lut.size; ++i) {
      const real* e = lut.entry(i, j);
      if (e[0] < 0 || e[1] < 0 || e[0] > 1 || e[1] > 1 || e[0] + e[1] > 1 + 1e-3) {
        bounds_ok = false;
        break;
      }
    }
  std::mt19937_64 gen(4242);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  real worst = 0;
  for (int k = 0; k < 32; ++k) {
    int i = int(uni(gen) * lut.size);
    int j = int(uni(gen) * lut.size);
    real cos_v = lut.entry_cos(i);
    real rough = lut.entry_roughness(j);
    real alpha = rough * rough;
    Vec3 v{std::sqrt(std::max(0.0, 1.0 - cos_v * cos_v)), 0, cos_v};
    real acc_s = 0, acc_b = 0;
    const int samples = 1000000;
    for (int s = 0; s < samples; ++s) {
      Vec2 u{uni(gen), uni(gen)};
      Vec3 h = ggx_sample_half(u, alpha);
      Vec3 l = h * (2 * dot(v, h)) - v;
      if (l.z <= 0) continue;
      real vo_h = std::max(dot(v, h), 1e-12);
      real g = smith_g1_ibl(l.z, rough) * smith_g1_ibl(cos_v, rough);
      real g_vis = g * vo_h / (std::max(h.z, 1e-12) * cos_v);
      real fc = std::pow(1.0 - vo_h, 5.0);
      acc_s += (1 - fc) * g_vis;
      acc_b += fc * g_vis;
    }
    worst = std::max(worst, std::fabs(lut.entry(i, j)[0] - acc_s / samples));
    worst = std::max(worst, std::fabs(lut.entry(i, j)[1] - acc_b / samples));
  }
  report("C3 lut-oracle", bounds_ok && worst <= 0.01,
         fmt("32 entries vs 1e6-sample MC, worst |delta| %.4f (limit 0.01), bounds %s", worst,
             bounds_ok ? "ok" : "VIOLATED"));
}

void criterion_4_unbiasedness() {
  const real tau = std::exp(6.0);
  const int k_samples = 128;
  Pcg32 rng(31, 1);
  int hits = 0;
  bool weights_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    real t_star = 0.15 + 0.7 * rng.next_real();
    real slope = 0.4 + 1.8 * rng.next_real();
    std::vector<real> ts(k_samples);
    for (int i = 0; i < k_samples; ++i) ts[i] = (i + rng.next_real()) / k_samples;
    std::vector<real> alphas(k_samples - 1);
    for (int i = 0; i + 1 < k_samples; ++i)
      alphas[i] = alpha_from_sdf(slope * (t_star - ts[i]), slope * (t_star - ts[i + 1]), tau);
    std::vector<Rgb> colors(k_samples - 1, Rgb{1, 1, 1});
    CompositeResult r = composite(colors, alphas);
    real wsum = 0;
    int best = 0;
    for (int i = 0; i + 1 < k_samples; ++i) {
      wsum += r.weights[i];
      if (r.weights[i] > r.weights[best]) best = i;
    }
    if (wsum > 1.0 + 1e-9) weights_ok = false;
    real spacing = 1.0 / k_samples;
    if (t_star >= ts[best] - spacing && t_star <= ts[best + 1] + spacing) ++hits;
  }
  report("C4 neus-unbiasedness", hits == 100 && weights_ok,
         fmt("argmax within one spacing for %d/100 rays, weight sums %s", hits,
             weights_ok ? "<=1" : "VIOLATED"));
}

void criterion_5_prefilter() {
  // constant passthrough
  EnvCubemap cst = make_env_cubemap(16, 0.37, 256, 5);
  real worst = 0;
  for (const auto& level : cst.mips)
    for (real v : level.texels) worst = std::max(worst, std::fabs(v - 0.37));
  for (real v : cst.diffuse.texels) worst = std::max(worst, std::fabs(v - 0.37));

  // one bright texel vs quadrature of the normalized kernel
  EnvCubemap env;
  env.face_res = 8;
  env.roughness_levels = {0.0, 0.5};
  env.samples_per_texel = 200000;
  env.seed = 3;
  env.base = CubemapData(8, 0.0);
  env.base.store(4, 3, 3, {40, 40, 40});
  prefilter_specular(env);
  Vec3 axis = env.base.texel_dir(4, 3, 3);
  real got = env.mips[1].sample(axis).x;

  const real alpha = 0.25 * 0.25 * 4;  // r=0.5 -> alpha=0.25; alpha^2 below
  (void)alpha;
  real num = 0, den = 0;
  const int subdiv = 8, res = 8;
  const real a = 0.25;  // alpha = r^2
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        real omega = cube_texel_solid_angle(i, j, res) / (subdiv * subdiv);
        for (int sj = 0; sj < subdiv; ++sj)
          for (int si = 0; si < subdiv; ++si) {
            real s = 2.0 * (i + (si + 0.5) / subdiv) / res - 1.0;
            real t = 2.0 * (j + (sj + 0.5) / subdiv) / res - 1.0;
            Vec3 l = cube_face_dir(face, s, t);
            real c = dot(l, axis);
            if (c <= 0) continue;
            Vec3 h = normalize(l + axis);
            real d = a * a / (kPi * sqr(sqr(dot(h, axis)) * (a * a - 1.0) + 1.0));
            real w = c * d * omega;
            num += env.base.sample(l).x * w;
            den += w;
          }
      }
  real want = num / den;
  real rel = std::fabs(got - want) / want;
  report("C5 prefilter-invariants", worst <= 1e-6 && rel <= 0.02,
         fmt("constant passthrough err %.2e (limit 1e-6), bright-texel rel err %.4f (limit 0.02)",
             worst, rel));
}

struct C6Result {
  bool completed = false;
  real novel_psnr = 0;       // best branch
  real novel_psnr_radiance = 0;
  real novel_psnr_material = 0;
  std::string checkpoint;
};

C6Result run_round_trip(const std::string& fixture_dir, const std::string& train_dir, int steps,
                        int material_start, bool full_eval, const FixtureSpec& spec) {
  C6Result res;
  SceneManifest manifest = load_manifest(fixture_dir + "/train/manifest.json");
  TrainConfig config;
  config.steps = steps;
  config.seed = 1;
  config.material_start = material_start;
  config.out_dir = train_dir;
  config.anneal_steps = 5000;

  auto t0 = std::chrono::steady_clock::now();
  TrainResult train = run_training(manifest, config);
  double train_time = seconds_since(t0);
  int cores = std::min(thread_count(), 8);
  double budget = 1800.0 * 8.0 / cores;
  std::printf("  training: %d steps in %.0fs on %d threads (scaled budget %.0fs)\n",
              steps, train_time, thread_count(), budget);

  SceneModel model = load_checkpoint(train.checkpoint_path);
  res.checkpoint = train.checkpoint_path;
  OccupancyGrid occ = make_occupancy_grid(64, model.grid.rad);
  update_occupancy(occ, model.grid, model.tau());

  SceneManifest novel = load_manifest(fixture_dir + "/novel/manifest.json");
  auto novel_frames = load_frames(novel);
  RenderSettings rs;

  std::vector<Image> rad_preds, mat_preds;
  for (const auto& frame : novel.frames) {
    rad_preds.push_back(render_image(model, frame.camera, RenderBranch::kRadiance, rs, &occ));
    mat_preds.push_back(render_image(model, frame.camera, RenderBranch::kMaterial, rs, &occ));
  }
  res.novel_psnr_radiance = mean_psnr_against(rad_preds, novel, novel_frames, false, false);
  res.novel_psnr_material = mean_psnr_against(mat_preds, novel, novel_frames, false, false);
  res.novel_psnr = std::max(res.novel_psnr_radiance, res.novel_psnr_material);
  res.completed = true;

  if (!full_eval) return res;

  bool time_ok = train_time <= budget;

  // relighting under the held-out environment vs MC ground truth
  EnvCubemap relit_env = env_from_latlong_file(fixture_dir + "/env_relight.pfm", 64, 256,
                                               model.env.seed);
  SceneModel relit = model;
  relit.env = relit_env;
  SceneManifest relight = load_manifest(fixture_dir + "/relight/manifest.json");
  auto relight_frames = load_frames(relight);
  std::vector<Image> relit_preds;
  for (const auto& frame : relight.frames)
    relit_preds.push_back(render_image(relit, frame.camera, RenderBranch::kMaterial, rs, &occ));
  real relight_psnr = mean_psnr_against(relit_preds, relight, relight_frames, false, false);

  // scale-aligned albedo over the mask
  std::vector<Image> albedo_preds;
  for (const auto& frame : novel.frames)
    albedo_preds.push_back(render_image(model, frame.camera, RenderBranch::kAlbedo, rs, &occ));
  real albedo_psnr = mean_psnr_against(albedo_preds, novel, novel_frames, true, true);

  // exported mesh against the analytic surface
  TriangleMesh mesh = marching_cubes(model.grid);
  real cell = model.grid.spacing();
  std::size_t good = 0;
  for (const Vec3& v : mesh.vertices)
    if (std::fabs(fixture_sdf(spec, v)) <= 2.0 * cell) ++good;
  real mesh_frac = mesh.vertices.empty() ? 0.0 : real(good) / mesh.vertices.size();
  save_obj(train_dir + "/mesh.obj", mesh);

  bool pass = time_ok && res.novel_psnr >= 30.0 && relight_psnr >= 22.0 && albedo_psnr >= 22.0 &&
              mesh_frac >= 0.99;
  report("C6 round-trip-factorization", pass,
         fmt("novel %.2f dB (rad %.2f / mat %.2f, limit 30), relight %.2f dB (limit 22), "
             "albedo %.2f dB (limit 22), mesh %.1f%% within 2 cells (limit 99%%), time %s",
             res.novel_psnr, res.novel_psnr_radiance, res.novel_psnr_material, relight_psnr,
             albedo_psnr, 100.0 * mesh_frac, time_ok ? "ok" : "OVER BUDGET"));
  return res;
}

void criterion_7_loss_fidelity(const std::string& fixture_dir) {
  SceneManifest manifest = load_manifest(fixture_dir + "/train/manifest.json");
  TrainConfig config;
  config.steps = 1;
  config.seed = 5;
  config.rays_per_step = 512;
  config.patch_size = 8;
  config.grid_res = 32;
  config.head_res = 32;
  config.env_face_res = 32;
  config.env_prefilter_samples = 32;
  config.lut_size = 16;
  config.lut_samples = 1024;
  config.reg_points = 512;
  config.occ_res = 32;
  config.out_dir = "acceptance_out/c7_train";
  fs::remove_all(config.out_dir);
  TrainResult result = run_training(manifest, config);

  // independent recomputation of every component at step 0
  SceneModel model = init_model(config, manifest.rad);
  OccupancyGrid occ = make_occupancy_grid(config.occ_res, manifest.rad);
  update_occupancy(occ, model.grid, model.tau(), config.occ_threshold);
  auto frames = load_frames(manifest);
  std::vector<RayBatchEntry> batch;
  sample_training_rays(frames, config.rays_per_step, config.patch_size, config.seed, 0, batch,
                       nullptr);
  RenderSettings settings;
  settings.samples_per_ray = config.samples_per_ray;
  settings.cos_anneal = 0.0;
  settings.smooth_eps = config.smooth_eps;
  settings.seed = config.seed;
  std::vector<RayForward> fw(batch.size());
  RenderWorkspace ws;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    RenderSettings s = settings;
    s.bg_srgb = batch[i].bg_srgb;
    render_ray(model, batch[i].ray, s, &occ, batch[i].t_seed, fw[i], ws);
  }
  const LossWeights& w = config.weights;
  const real n = real(batch.size());
  real l1m = 0, l2m = 0, l1t = 0, l2t = 0, bce = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      real dm = fw[i].mat_srgb[c] - batch[i].gt_srgb[c];
      real dt = fw[i].tex_srgb[c] - batch[i].gt_srgb[c];
      l1m += std::fabs(dm);
      l2m += dm * dm;
      l1t += std::fabs(dt);
      l2t += dt * dt;
    }
    real op = clamp(fw[i].opacity, 1e-5, 1.0 - 1e-5);
    bce += -(batch[i].gt_mask * std::log(op) + (1 - batch[i].gt_mask) * std::log(1 - op));
  }
  LossBreakdown mine;
  mine.c_mat = w.c1 * l1m / (3 * n) + w.c2 * l2m / (3 * n);
  mine.c_tex = w.c1 * l1t / (3 * n) + w.c2 * l2t / (3 * n);
  mine.mask = w.mask * bce / n;

  auto pts = training_reg_points(config.seed, 0, config.reg_points, manifest.rad);
  SdfRegResult sr = sdf_reg_losses(model.grid, pts, w.sa);
  mine.sdf_eik = w.se * sr.eikonal;
  mine.sdf_sparse = w.ss * sr.sparsity;

  std::int64_t n_payload = 0;
  real smooth = 0;
  real p_mean[kMaxFeatureChannels] = {};
  for (const auto& f : fw) {
    n_payload += f.n_payload;
    smooth += f.smooth_sum;
    for (int c = 0; c < config.grid_channels - 1; ++c) p_mean[c] += f.sig_sum[c];
  }
  for (int c = 0; c < config.grid_channels - 1; ++c)
    mine.mat_kl += w.mf1 * bern_kl(0.05, p_mean[c] / n_payload);
  mine.mat_smooth = w.mf2 * smooth / n_payload;

  int n_patches = (config.rays_per_step / 2) / (config.patch_size * config.patch_size);
  real occ_term = 0;
  mine.mat_patch = patch_material_loss(fw, batch, n_patches, w, &occ_term) - occ_term;
  mine.mat_occ = occ_term;
  mine.light = w.light * light_reg_loss(model.env.base);

  // parse the logged step-0 row
  std::ifstream csv(result.metrics_path);
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  std::vector<real> cells;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(std::atof(cell.c_str()));
  // columns: step + 10 components + total + lr_a + lr_b + tau
  const real logged[10] = {cells[1], cells[2], cells[3], cells[4], cells[5],
                           cells[6], cells[7], cells[8], cells[9], cells[10]};
  const real computed[10] = {mine.c_mat,  mine.c_tex,      mine.mask,     mine.sdf_eik,
                             mine.sdf_sparse, mine.mat_kl, mine.mat_smooth, mine.mat_patch,
                             mine.mat_occ, mine.light};
  const char* names[10] = {"c_mat", "c_tex", "mask", "sdf_eik", "sdf_sparse",
                           "mat_kl", "mat_smooth", "mat_patch", "mat_occ", "light"};
  real worst = 0;
  std::string worst_name = "-";
  for (int k = 0; k < 10; ++k) {
    real err = std::fabs(logged[k] - computed[k]) / std::max(1.0, std::fabs(computed[k]));
    if (err > worst) {
      worst = err;
      worst_name = names[k];
    }
  }
  report("C7 loss-weight-fidelity", worst <= 1e-6,
         fmt("step-0 breakdown vs independent recomputation, worst err %.2e on %s (limit 1e-6)",
             worst, worst_name.c_str()));
}

void criterion_8_determinism(const std::string& fixture_dir) {
  SceneManifest manifest = load_manifest(fixture_dir + "/train/manifest.json");
  auto bytes = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  TrainConfig config;
  config.steps = 200;
  config.seed = 77;
  config.rays_per_step = 1024;
  config.grid_res = 32;
  config.head_res = 32;
  config.env_face_res = 32;
  config.env_prefilter_samples = 32;
  config.lut_size = 16;
  config.lut_samples = 1024;
  config.samples_per_ray = 48;
  config.reg_points = 512;
  config.occ_res = 32;
  config.checkpoint_every = 0;
  config.out_dir = "acceptance_out/c8_run_a";
  fs::remove_all(config.out_dir);
  TrainResult a = run_training(manifest, config);
  config.out_dir = "acceptance_out/c8_run_b";
  fs::remove_all(config.out_dir);
  TrainResult b = run_training(manifest, config);
  bool ckpt_same = bytes(a.checkpoint_path) == bytes(b.checkpoint_path);
  bool csv_same = bytes(a.metrics_path) == bytes(b.metrics_path);
  report("C8 determinism", ckpt_same && csv_same,
         fmt("200-step twin runs: checkpoints %s, metric logs %s",
             ckpt_same ? "bit-identical" : "DIFFER", csv_same ? "bit-identical" : "DIFFER"));
}

}  // namespace

int main(int argc, char** argv) {
  int steps = 5000;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--steps") == 0 && i + 1 < argc) steps = std::atoi(argv[++i]);
  }
  if (steps != 5000) {
    g_authoritative = false;
    std::printf("NOTE: dev run at %d steps; C6/C9 thresholds are defined at 5000 steps\n", steps);
  }

  fs::create_directories("acceptance_out");
  std::string fixture_dir = "acceptance_out/fixture";

  criterion_1_gradients();
  criterion_2_splitsum();
  criterion_3_lut_oracle();
  criterion_4_unbiasedness();
  criterion_5_prefilter();

  // fixture for C6-C9
  {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(fixture_dir);
    save_pfm(fixture_dir + "/env_train_src.pfm", training_env());
    save_pfm(fixture_dir + "/env_relight_src.pfm", relight_env());
    FixtureSpec spec = acceptance_fixture_spec(fixture_dir);
    if (fs::exists(fixture_dir + "/train/manifest.json")) {
      // generation is seed-deterministic; an existing tree is identical
      std::printf("  fixture: reusing %s\n", fixture_dir.c_str());
    } else {
      fixture_generate(spec, fixture_dir, 1024);
      std::printf("  fixture: 50+8+8 views at 128^2 in %.0fs\n", seconds_since(t0));
    }
    std::fflush(stdout);

    C6Result c6 = run_round_trip(fixture_dir, "acceptance_out/c6_train", steps, 0, true, spec);

    criterion_7_loss_fidelity(fixture_dir);
    criterion_8_determinism(fixture_dir);

    // C9: ablation hook, material branch enabled late
    C6Result c9 = run_round_trip(fixture_dir, "acceptance_out/c9_train", steps, 2000, false,
                                 spec);
    real gap = std::fabs(c6.novel_psnr - c9.novel_psnr);
    report("C9 ablation-hook", c6.completed && c9.completed && gap <= 2.0,
           fmt("material_start 0 vs 2000: novel-view %.2f vs %.2f dB (gap %.2f, limit 2)",
               c6.novel_psnr, c9.novel_psnr, gap));
  }

  std::printf("%d criterion failure(s)\n", g_failures);
  if (!g_authoritative) return 3;
  return g_failures == 0 ? 0 : 1;
}
