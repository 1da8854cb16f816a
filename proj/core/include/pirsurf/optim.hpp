#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pirsurf/renderer.hpp"
#include "pirsurf/sceneio.hpp"

namespace pirsurf {

struct LossWeights {
  real c1 = 1.0;      // L1 image term
  real c2 = 10.0;     // MSE image term
  real mask = 0.1;    // opacity BCE
  real se = 0.1;      // eikonal
  real ss = 0.01;     // SDF sparsity
  real sa = 0.01;     // sparsity falloff
  real mf1 = 0.01;    // latent KL
  real mf2 = 0.01;    // latent smoothness
  real mid = 0.01;    // patch albedo std
  real mir = 0.01;    // patch roughness std
  real mim = 0.01;    // patch metallic std
  real mio = 0.001;   // occlusion magnitude
  real light = 0.1;   // white-environment prior
};

struct LossBreakdown {
  real c_mat = 0, c_tex = 0, mask = 0;
  real sdf_eik = 0, sdf_sparse = 0;
  real mat_kl = 0, mat_smooth = 0, mat_patch = 0, mat_occ = 0;
  real light = 0;

  real total() const {
    return c_mat + c_tex + mask + sdf_eik + sdf_sparse + mat_kl + mat_smooth + mat_patch +
           mat_occ + light;
  }
  // Name of the first non-finite component, empty when all finite.
  std::string first_non_finite() const;
};

// Weighted image color loss (L1 + MSE, means over pixels and channels) and
// the mask BCE against the accumulated opacity (clamped to [1e-5, 1-1e-5]).
std::pair<real, real> image_losses(std::span<const Rgb> pred, std::span<const Rgb> gt,
                                   std::span<const real> pred_opacity,
                                   std::span<const real> gt_mask, const LossWeights& weights);

// Linear warmup from 1% to 100% of base over `warmup` steps, then
// exponential decay reaching final_ratio*base at total_steps.
real lr_schedule(int step, real base_lr, int warmup, int total_steps, real final_ratio);

// Standard Adam with bias correction, deterministic.
void adam_update(std::span<real> params, std::span<const real> grads, std::span<real> m,
                 std::span<real> v, int t, real lr, real beta1 = 0.9, real beta2 = 0.999,
                 real eps = 1e-8);

struct RayBatchEntry {
  Ray ray;
  Rgb gt_srgb;
  real gt_mask = 0;
  Rgb bg_srgb;
  int patch_id = -1;  // -1 for the i.i.d. half
  int frame = 0, px = 0, py = 0;
  std::uint64_t t_seed = 0;
};

// Half the budget as contiguous square patches (random frame, random
// top-left), half i.i.d. over all masked-in pixels. Masked-out pixels get a
// fresh random background color as ground truth each time they are drawn.
void sample_training_rays(const std::vector<LoadedFrame>& frames, int n_rays, int patch_size,
                          std::uint64_t seed, int step, std::vector<RayBatchEntry>& out,
                          int* n_patches);

// Uniform SDF-regularizer sample points for a given step, shared between
// the training loop and the loss-fidelity checks.
std::vector<Vec3> training_reg_points(std::uint64_t seed, int step, int count, real rad);

// Patch regularizer over opacity-normalized surface expectations: per patch,
// population std of kd (channel-averaged), r and m over pixels with
// opacity >= 0.5, summed over patches, plus the occlusion magnitude term.
// Exposed for the loss-fidelity tests; the training loop fuses its own
// gradient version.
real patch_material_loss(std::span<const RayForward> forwards,
                         std::span<const RayBatchEntry> batch, int n_patches,
                         const LossWeights& weights, real* occ_term = nullptr);

struct TrainConfig {
  int steps = 5000;
  int rays_per_step = 4096;
  int patch_size = 8;
  int samples_per_ray = 96;
  std::uint64_t seed = 1;
  int material_start = 0;
  int occ_every = 16;
  int occ_res = 64;
  real occ_threshold = 0.001;
  int grid_res = 64;
  int grid_channels = 13;
  int head_res = 64;
  int env_face_res = 64;
  int env_prefilter_samples = 64;  // training-time prefilter fidelity
  int lut_size = 64;
  int lut_samples = 4096;
  real base_lr = 0.01;
  real tau_lr = 0.001;  // constant, not scheduled
  int warmup = 500;
  real final_ratio = 0.01;
  int anneal_steps = 5000;
  int reg_points = 4096;
  real smooth_eps = 0.02;
  int checkpoint_every = 1000;
  LossWeights weights;
  std::string out_dir = "train_out";
  bool grad_shading_normal = true;
  real init_env_value = 0.5;
  real init_log_tau = 3.0;
  real latent_sigma = 0.1;
  real sphere_init_ratio = 0.5;  // SDF init sphere radius as a fraction of rad
};

// Builds the initial model (sphere SDF, zero SH, fresh decoder, constant
// environment, baked LUT) for a scene.
SceneModel init_model(const TrainConfig& config, real rad);

struct TrainResult {
  LossBreakdown first;
  LossBreakdown last;
  std::string checkpoint_path;
  std::string metrics_path;
};

TrainResult run_training(const SceneManifest& manifest, const TrainConfig& config);

}  // namespace pirsurf
