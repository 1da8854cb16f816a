#pragma once

#include <cstdint>
#include <vector>

#include "pirsurf/brdf.hpp"
#include "pirsurf/envlight.hpp"
#include "pirsurf/fields.hpp"
#include "pirsurf/sceneio.hpp"
#include "pirsurf/volren.hpp"

namespace pirsurf {

inline constexpr int kMaxFeatureChannels = 16;

// Everything optimizable plus the frozen LUT.
struct SceneModel {
  FeatureGrid grid;
  RadianceHead head;
  MaterialDecoder decoder;
  EnvCubemap env;
  SplitSumLUT lut;
  real log_tau = 3.0;

  real tau() const { return std::exp(log_tau); }
};

struct RenderSettings {
  int samples_per_ray = 96;
  Rgb bg_srgb{0, 0, 0};
  real cos_anneal = 1.0;
  // Segments below this compositing weight skip radiance/material payload
  // evaluation (their alpha still participates in transmittance). Gradcheck
  // sets both cutoffs to 0.
  real weight_skip = 1e-7;
  real t_stop = 1e-7;
  // Latent perturbation scale of the material smoothness regularizer;
  // 0 disables the extra decode.
  real smooth_eps = 0;
  bool radiance_branch = true;
  bool material_branch = true;
  bool grad_env = true;
  bool grad_shading_normal = true;  // ablation switch: sever shading -> geometry
  std::uint64_t seed = 0;
};

// Per-ray forward outputs. Colors include the background contribution; the
// material branch composites in linear radiance and applies the sRGB
// transfer once at the end.
struct RayForward {
  Rgb tex_srgb{0, 0, 0};
  Rgb mat_lin{0, 0, 0};
  Rgb mat_srgb{0, 0, 0};
  real opacity = 0;
  // Opacity-normalized surface expectations for the patch regularizer,
  // valid when has_surface (opacity >= 0.5).
  Rgb e_kd{0, 0, 0};
  real e_r = 0, e_m = 0, e_o = 0;
  bool has_surface = false;
  Rgb kd_sum{0, 0, 0};  // unnormalized sum(w*kd), used by albedo renders
  // Batch statistics for the latent regularizers.
  real sig_sum[kMaxFeatureChannels] = {};
  real smooth_sum = 0;  // sum over payload points of |Mat(f)-Mat(f+df)|_1
  int n_payload = 0;
  int n_segments = 0;
  bool any_underflow = false;
};

// Loss gradients with respect to one ray's outputs, plus the shared
// per-batch factors of the latent regularizers.
struct RayOutputGrads {
  Rgb d_tex_srgb{0, 0, 0};
  Rgb d_mat_srgb{0, 0, 0};
  real d_opacity = 0;
  Rgb d_e_kd{0, 0, 0};
  real d_e_r = 0, d_e_m = 0, d_e_o = 0;
  const real* d_sig = nullptr;  // per latent channel, already scaled per point
  real smooth_scale = 0;        // weight per point of the f vs f+df L1 term
};

// Per-worker gradient accumulation. Grid and head buffers are float (they
// dominate memory across workers); merging in worker order keeps training
// bit-deterministic.
struct GradSink {
  std::vector<float> grid;
  std::vector<int> grid_touched;
  std::vector<std::uint8_t> grid_mark;
  std::vector<float> head;
  std::vector<int> head_touched;
  std::vector<std::uint8_t> head_mark;
  std::vector<real> decoder;
  EnvGrad env;
  real dlog_tau = 0;

  void init(const SceneModel& model);
  void clear_touched(int grid_channels);

  void add_grid(int node, int channels, int ch, real v) {
    if (!grid_mark[node]) {
      grid_mark[node] = 1;
      grid_touched.push_back(node);
    }
    grid[std::size_t(node) * channels + ch] += float(v);
  }
  void add_head(int node, int slot, real v) {
    if (!head_mark[node]) {
      head_mark[node] = 1;
      head_touched.push_back(node);
    }
    head[std::size_t(node) * (kShBasis * 3) + slot] += float(v);
  }
};

// Reusable per-worker scratch.
struct RenderWorkspace {
  std::vector<real> ts;
  struct SampleRec;
  std::vector<SampleRec>* recs = nullptr;

  RenderWorkspace();
  ~RenderWorkspace();
  RenderWorkspace(const RenderWorkspace&) = delete;
  RenderWorkspace& operator=(const RenderWorkspace&) = delete;
};

// Renders one ray (both branches share sampling, SDF evaluations and hence
// opacity). When grads/sink are given the forward pass caches per-sample
// state and immediately runs the pullback into the sink. t-sample jitter is
// derived from t_seed only, so repeated calls are bit-identical.
void render_ray(const SceneModel& model, const Ray& ray, const RenderSettings& settings,
                const OccupancyGrid* occ, std::uint64_t t_seed, RayForward& out,
                RenderWorkspace& ws, const RayOutputGrads* grads = nullptr,
                GradSink* sink = nullptr);

// Spec-surface wrappers.
std::pair<Rgb, real> render_pixel_radiance(const SceneModel& model, const Ray& ray,
                                           const RenderSettings& settings,
                                           const OccupancyGrid* occ, std::uint64_t t_seed);
std::pair<Rgb, real> render_pixel_material(const SceneModel& model, const Ray& ray,
                                           const RenderSettings& settings,
                                           const OccupancyGrid* occ, std::uint64_t t_seed);

enum class RenderBranch { kRadiance, kMaterial, kAlbedo };

// Full-frame render, pixel-parallel. For kAlbedo the output is the
// volume-integrated diffuse albedo sum(w*kd) in sRGB over black.
Image render_image(const SceneModel& model, const Camera& cam, RenderBranch branch,
                   const RenderSettings& settings, const OccupancyGrid* occ,
                   Image* linear_out = nullptr);

}  // namespace pirsurf
