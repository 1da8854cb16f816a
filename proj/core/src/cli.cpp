#include "pirsurf/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pirsurf/checkpoint.hpp"
#include "pirsurf/gradcheck.hpp"
#include "pirsurf/mesh.hpp"
#include "pirsurf/metrics.hpp"
#include "pirsurf/optim.hpp"

namespace pirsurf {

namespace fs = std::filesystem;

namespace {

Camera scale_camera(const Camera& cam, int width, int height) {
  if (width <= 0 || height <= 0 || (width == cam.width && height == cam.height)) return cam;
  Camera out = cam;
  real sx = real(width) / cam.width, sy = real(height) / cam.height;
  out.fx *= sx;
  out.cx *= sx;
  out.fy *= sy;
  out.cy *= sy;
  out.width = width;
  out.height = height;
  return out;
}

void render_set(const SceneModel& model, const SceneManifest& cams, RenderBranch branch,
                const RenderSettings& settings, const std::string& out_dir, bool write_pfm) {
  fs::create_directories(out_dir);
  OccupancyGrid occ = make_occupancy_grid(64, model.grid.rad);
  update_occupancy(occ, model.grid, model.tau());
  for (std::size_t i = 0; i < cams.frames.size(); ++i) {
    Image linear;
    Image img = render_image(model, cams.frames[i].camera, branch, settings, &occ, &linear);
    std::string stem = fs::path(cams.frames[i].image_path).stem().string();
    save_png(out_dir + "/" + stem + ".png", img);
    if (write_pfm) save_pfm(out_dir + "/" + stem + ".pfm", linear);
  }
}

int cmd_fixture(const std::string& spec_path, int samples, const std::string& out) {
  FixtureSpec spec = load_fixture_spec(spec_path);
  std::string manifest = fixture_generate(spec, out, samples);
  std::printf("fixture written: %s\n", manifest.c_str());
  return 0;
}

int cmd_bake_lut(int size, int samples, std::uint64_t seed, const std::string& out) {
  SplitSumLUT lut = bake_splitsum_lut(size, samples, seed);
  save_lut(out, lut);
  std::printf("lut written: %s (%dx%d, %d samples)\n", out.c_str(), size, size, samples);
  return 0;
}

int cmd_prefilter(const std::string& env_path, const std::string& out, int face_res, int samples,
                  std::uint64_t seed) {
  EnvCubemap env = env_from_latlong_file(env_path, face_res, samples, seed);
  save_env(out, env);
  std::printf("prefiltered environment written to %s\n", out.c_str());
  return 0;
}

int cmd_render(const std::string& checkpoint, const std::string& camera_set,
               const std::string& branch_name, const std::string& env_path, int width, int height,
               int samples_per_ray, const std::string& out_dir, bool write_pfm) {
  SceneModel model = load_checkpoint(checkpoint);
  if (!env_path.empty()) {
    EnvCubemap env = env_from_latlong_file(env_path, model.env.face_res,
                                           std::max(model.env.samples_per_texel, 256),
                                           model.env.seed);
    model.env = env;
  }
  SceneManifest cams = load_manifest(camera_set);
  for (auto& f : cams.frames) f.camera = scale_camera(f.camera, width, height);
  RenderBranch branch;
  if (branch_name == "radiance") branch = RenderBranch::kRadiance;
  else if (branch_name == "material") branch = RenderBranch::kMaterial;
  else if (branch_name == "albedo") branch = RenderBranch::kAlbedo;
  else throw PirError("unknown branch: " + branch_name);
  RenderSettings settings;
  if (samples_per_ray > 0) settings.samples_per_ray = samples_per_ray;
  render_set(model, cams, branch, settings, out_dir, write_pfm);
  std::printf("rendered %zu views to %s\n", cams.frames.size(), out_dir.c_str());
  return 0;
}

int cmd_relight(const std::string& checkpoint, const std::string& env_path,
                const std::string& camera_set, int width, int height, int samples_per_ray,
                const std::string& out_dir, bool write_pfm) {
  return cmd_render(checkpoint, camera_set, "material", env_path, width, height, samples_per_ray,
                    out_dir, write_pfm);
}

int cmd_export_mesh(const std::string& checkpoint, const std::string& out, real iso) {
  FeatureGrid grid;
  if (checkpoint.size() > 4 && checkpoint.substr(checkpoint.size() - 4) == ".bin") {
    // try the full checkpoint first, fall back to a bare grid blob
    try {
      SceneModel model = load_checkpoint(checkpoint);
      grid = std::move(model.grid);
    } catch (const PirError&) {
      grid = load_feature_grid(checkpoint);
    }
  } else {
    SceneModel model = load_checkpoint(checkpoint);
    grid = std::move(model.grid);
  }
  TriangleMesh mesh = marching_cubes(grid, iso);
  save_obj(out, mesh);
  std::printf("mesh written: %s (%zu vertices, %zu faces)\n", out.c_str(), mesh.vertices.size(),
              mesh.faces.size());
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& mask_dir,
             const std::string& report, bool align_albedo) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(pred_dir))
    if (entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw PirError("no PNG files in " + pred_dir);

  std::ofstream csv(report);
  if (!csv) throw PirError("cannot write report: " + report);
  csv << "file,psnr,ssim\n";
  real psnr_sum = 0, ssim_sum = 0;
  for (const auto& name : names) {
    Image pred = load_png(pred_dir + "/" + name);
    Image gt = load_png(gt_dir + "/" + name);
    std::vector<std::uint8_t> mask;
    const std::vector<std::uint8_t>* mask_ptr = nullptr;
    if (!mask_dir.empty()) {
      int mw = 0, mh = 0;
      mask = load_mask_png(mask_dir + "/" + name, &mw, &mh);
      mask_ptr = &mask;
    }
    if (align_albedo) {
      if (!mask_ptr) throw PirError("--align-albedo requires --mask");
      pred = albedo_scale_align(pred, gt, mask).aligned;
    }
    real p = psnr(pred, gt, mask_ptr);
    real s = ssim(pred, gt);
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f\n", name.c_str(), p, s);
    csv << line;
    psnr_sum += p;
    ssim_sum += s;
  }
  char line[256];
  std::snprintf(line, sizeof(line), "mean,%.6f,%.6f\n", psnr_sum / names.size(),
                ssim_sum / names.size());
  csv << line;
  std::printf("eval: %zu pairs, mean psnr %.3f dB, mean ssim %.4f -> %s\n", names.size(),
              psnr_sum / names.size(), ssim_sum / names.size(), report.c_str());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  GradCheckReport report = run_gradcheck(seed);
  std::fputs(format_report(report).c_str(), stdout);
  return report.all_pass() ? 0 : 1;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"pirsurf: inverse rendering of SDF geometry, PBR material and environment "
               "illumination from posed images"};
  app.require_subcommand(1);

  // fixture
  auto* fixture = app.add_subcommand("fixture", "generate a synthetic ground-truth scene");
  std::string fx_spec, fx_out = "fixture_out";
  int fx_samples = 1024;
  fixture->add_option("--spec", fx_spec, "fixture spec JSON")->required();
  fixture->add_option("--samples", fx_samples, "MC samples per pixel");
  fixture->add_option("--out", fx_out, "output directory")->required();

  // bake-lut
  auto* bake = app.add_subcommand("bake-lut", "bake the split-sum scale/bias table");
  int lut_size = 64, lut_samples = 4096;
  std::uint64_t lut_seed = 0;
  std::string lut_out = "lut.pfm";
  bake->add_option("--size", lut_size, "table edge size");
  bake->add_option("--samples", lut_samples, "samples per entry");
  bake->add_option("--seed", lut_seed, "bake seed");
  bake->add_option("--out", lut_out, "output PFM path")->required();

  // prefilter
  auto* pre = app.add_subcommand("prefilter", "prefilter an environment map");
  std::string pre_env, pre_out = "env_out";
  int pre_res = 64, pre_samples = 256;
  std::uint64_t pre_seed = 0;
  pre->add_option("--env", pre_env, "lat-long PFM")->required();
  pre->add_option("--out", pre_out, "output directory")->required();
  pre->add_option("--face-res", pre_res, "cubemap face resolution");
  pre->add_option("--samples", pre_samples, "samples per texel");
  pre->add_option("--seed", pre_seed, "sampling seed");

  // train
  auto* train = app.add_subcommand("train", "optimize geometry, material and illumination");
  train->set_config("--config", "", "config file mirroring the flags (flags win)");
  TrainConfig tc;
  std::string scene_path;
  train->add_option("--scene", scene_path, "scene manifest JSON")->required();
  train->add_option("--steps", tc.steps, "training steps");
  train->add_option("--seed", tc.seed, "run seed");
  train->add_option("--material-start", tc.material_start, "step enabling the material branch");
  train->add_option("--out", tc.out_dir, "output directory");
  train->add_option("--rays", tc.rays_per_step, "rays per step");
  train->add_option("--patch-size", tc.patch_size, "patch edge for patch-based sampling");
  train->add_option("--samples-per-ray", tc.samples_per_ray, "stratified samples per ray");
  train->add_option("--occ-res", tc.occ_res, "occupancy grid resolution");
  train->add_option("--occ-every", tc.occ_every, "occupancy update period");
  train->add_option("--grid-res", tc.grid_res, "feature grid resolution");
  train->add_option("--head-res", tc.head_res, "radiance head resolution");
  train->add_option("--env-res", tc.env_face_res, "environment face resolution");
  train->add_option("--env-samples", tc.env_prefilter_samples, "prefilter samples per texel");
  train->add_option("--lut-size", tc.lut_size, "split-sum LUT size");
  train->add_option("--lut-samples", tc.lut_samples, "split-sum LUT bake samples");
  train->add_option("--lr", tc.base_lr, "base learning rate");
  train->add_option("--tau-lr", tc.tau_lr, "log-tau learning rate (constant)");
  train->add_option("--warmup", tc.warmup, "warmup steps");
  train->add_option("--final-ratio", tc.final_ratio, "lr decay target ratio");
  train->add_option("--anneal-steps", tc.anneal_steps, "cosine annealing ramp steps");
  train->add_option("--reg-points", tc.reg_points, "SDF regularizer sample points");
  train->add_option("--smooth-eps", tc.smooth_eps, "latent smoothness perturbation");
  train->add_option("--checkpoint-every", tc.checkpoint_every, "checkpoint period");
  bool no_normal_grad = false;
  train->add_flag("--no-normal-grad", no_normal_grad,
                  "sever shading-to-geometry gradients (ablation)");

  // render
  auto* render = app.add_subcommand("render", "render a trained checkpoint");
  std::string r_ckpt, r_cams, r_branch = "material", r_env, r_out = "render_out";
  int r_w = 0, r_h = 0, r_spp = 0;
  bool r_pfm = false;
  render->add_option("--checkpoint", r_ckpt, "checkpoint file")->required();
  render->add_option("--camera-set", r_cams, "manifest providing cameras")->required();
  render->add_option("--branch", r_branch, "radiance|material|albedo");
  render->add_option("--env", r_env, "override environment (lat-long PFM)");
  render->add_option("--width", r_w, "output width override");
  render->add_option("--height", r_h, "output height override");
  render->add_option("--samples-per-ray", r_spp, "samples per ray");
  render->add_option("--out-dir", r_out, "output directory");
  render->add_flag("--pfm", r_pfm, "also write linear PFM buffers");

  // relight
  auto* relight = app.add_subcommand("relight", "render the material branch under a new light");
  std::string l_ckpt, l_env, l_cams, l_out = "relight_out";
  int l_w = 0, l_h = 0, l_spp = 0;
  bool l_pfm = false;
  relight->add_option("--checkpoint", l_ckpt, "checkpoint file")->required();
  relight->add_option("--env", l_env, "environment lat-long PFM")->required();
  relight->add_option("--camera-set", l_cams, "manifest providing cameras")->required();
  relight->add_option("--width", l_w, "output width override");
  relight->add_option("--height", l_h, "output height override");
  relight->add_option("--samples-per-ray", l_spp, "samples per ray");
  relight->add_option("--out-dir", l_out, "output directory");
  relight->add_flag("--pfm", l_pfm, "also write linear PFM buffers");

  // export-mesh
  auto* mesh = app.add_subcommand("export-mesh", "marching-cubes mesh export");
  std::string m_ckpt, m_out = "mesh.obj";
  real m_iso = 0.0;
  mesh->add_option("--checkpoint", m_ckpt, "checkpoint or grid blob")->required();
  mesh->add_option("--out", m_out, "output OBJ path");
  mesh->add_option("--iso", m_iso, "iso level");

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM evaluation of rendered images");
  std::string e_pred, e_gt, e_mask, e_report = "eval.csv";
  bool e_align = false;
  eval->add_option("--pred", e_pred, "predicted image directory")->required();
  eval->add_option("--gt", e_gt, "ground-truth image directory")->required();
  eval->add_option("--mask", e_mask, "mask directory");
  eval->add_option("--report", e_report, "output CSV");
  eval->add_flag("--align-albedo", e_align, "per-channel scale alignment before metrics");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::uint64_t gc_seed = 7;
  gc->add_option("--seed", gc_seed, "toy scene seed");

  if (argc <= 1) {
    std::fputs(app.help().c_str(), stderr);
    return 2;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (fixture->parsed()) return cmd_fixture(fx_spec, fx_samples, fx_out);
    if (bake->parsed()) return cmd_bake_lut(lut_size, lut_samples, lut_seed, lut_out);
    if (pre->parsed()) return cmd_prefilter(pre_env, pre_out, pre_res, pre_samples, pre_seed);
    if (train->parsed()) {
      tc.grad_shading_normal = !no_normal_grad;
      SceneManifest manifest = load_manifest(scene_path);
      TrainResult result = run_training(manifest, tc);
      std::printf("training done: %s (total loss %.6g)\n", result.checkpoint_path.c_str(),
                  result.last.total());
      return 0;
    }
    if (render->parsed())
      return cmd_render(r_ckpt, r_cams, r_branch, r_env, r_w, r_h, r_spp, r_out, r_pfm);
    if (relight->parsed())
      return cmd_relight(l_ckpt, l_env, l_cams, l_w, l_h, l_spp, l_out, l_pfm);
    if (mesh->parsed()) return cmd_export_mesh(m_ckpt, m_out, m_iso);
    if (eval->parsed()) return cmd_eval(e_pred, e_gt, e_mask, e_report, e_align);
    if (gc->parsed()) return cmd_gradcheck(gc_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace pirsurf
