#include <benchmark/benchmark.h>

#include "pirsurf/brdf.hpp"
#include "pirsurf/fields.hpp"
#include "pirsurf/mesh.hpp"
#include "pirsurf/renderer.hpp"
#include "pirsurf/rng.hpp"
#include "pirsurf/volren.hpp"

using namespace pirsurf;

namespace {

FeatureGrid bench_grid() {
  FeatureGrid g = make_feature_grid(64, 1.5, 13);
  init_grid_sphere(g, 0.75, 0.1, 3);
  return g;
}

EnvCubemap bench_env(int samples) {
  EnvCubemap env;
  env.face_res = 64;
  env.samples_per_texel = samples;
  env.seed = 1;
  env.base = CubemapData(64);
  Pcg32 rng(1, 1);
  for (real& t : env.base.texels) t = rng.next_real();
  rebuild_env(env);
  return env;
}

void BM_TrilinearSample(benchmark::State& state) {
  FeatureGrid g = bench_grid();
  Pcg32 rng(2, 2);
  real out[16];
  TrilinearCache c;
  for (auto _ : state) {
    Vec3 x{2.8 * rng.next_real() - 1.4, 2.8 * rng.next_real() - 1.4, 2.8 * rng.next_real() - 1.4};
    g.setup_cache(x, c);
    g.sample_all(c, out);
    benchmark::DoNotOptimize(out[0]);
  }
}
BENCHMARK(BM_TrilinearSample);

void BM_AlphaFromSdf(benchmark::State& state) {
  Pcg32 rng(3, 3);
  AlphaGrads grads;
  for (auto _ : state) {
    real s = rng.next_real() - 0.5;
    real a = alpha_from_sdf_grad(s, s - 0.02, 400.0, grads);
    benchmark::DoNotOptimize(a);
  }
}
BENCHMARK(BM_AlphaFromSdf);

void BM_ShadePir(benchmark::State& state) {
  EnvCubemap env = bench_env(64);
  SplitSumLUT lut = bake_splitsum_lut(64, 4096, 1);
  MaterialSample mat;
  mat.kd = {0.6, 0.5, 0.4};
  mat.r = 0.45;
  mat.m = 0.3;
  Pcg32 rng(4, 4);
  ShadeCache cache;
  for (auto _ : state) {
    Vec3 n = normalize(Vec3{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()});
    Vec3 v = normalize(n + Vec3{0.3, 0.1, 0.2});
    Rgb out = shade_pir(mat, n, v, env, lut, 1.0, &cache);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_ShadePir);

void BM_ShadePirBackward(benchmark::State& state) {
  EnvCubemap env = bench_env(64);
  SplitSumLUT lut = bake_splitsum_lut(64, 4096, 1);
  EnvGrad grad;
  grad.init(env);
  MaterialSample mat;
  mat.kd = {0.6, 0.5, 0.4};
  mat.r = 0.45;
  mat.m = 0.3;
  Vec3 n = normalize(Vec3{0.2, 0.9, 0.4});
  Vec3 v = normalize(n + Vec3{0.3, 0.1, 0.2});
  ShadeCache cache;
  shade_pir(mat, n, v, env, lut, 1.0, &cache);
  for (auto _ : state) {
    MaterialGrad dmat;
    Vec3 dn{0, 0, 0};
    shade_pir_backward(cache, {1, 1, 1}, dmat, dn, &grad);
    benchmark::DoNotOptimize(dmat);
  }
}
BENCHMARK(BM_ShadePirBackward);

void BM_PrefilterSpecular(benchmark::State& state) {
  EnvCubemap env = bench_env(int(state.range(0)));
  for (auto _ : state) {
    prefilter_specular(env);
    benchmark::DoNotOptimize(env.mips[1].texels[0]);
  }
  state.SetItemsProcessed(state.iterations() * env.base.texel_count() *
                          (env.levels() - 1) * state.range(0));
}
BENCHMARK(BM_PrefilterSpecular)->Arg(32)->Arg(64)->Arg(256);

void BM_RenderRay(benchmark::State& state) {
  SceneModel model;
  model.grid = bench_grid();
  model.head = make_radiance_head(64, 1.5);
  model.decoder = make_material_decoder(12, 32, 1);
  model.env = bench_env(64);
  model.lut = bake_splitsum_lut(64, 4096, 1);
  model.log_tau = 4.0;
  OccupancyGrid occ = make_occupancy_grid(64, 1.5);
  update_occupancy(occ, model.grid, model.tau());
  RenderSettings settings;
  RenderWorkspace ws;
  RayForward out;
  Pcg32 rng(5, 5);
  std::uint64_t t_seed = 0;
  for (auto _ : state) {
    Ray ray;
    ray.origin = {3.0 * std::cos(rng.next_real() * 2 * kPi), 0.4,
                  3.0 * std::sin(rng.next_real() * 2 * kPi)};
    ray.dir = normalize(Vec3{0, 0, 0} - ray.origin);
    render_ray(model, ray, settings, &occ, ++t_seed, out, ws);
    benchmark::DoNotOptimize(out.opacity);
  }
}
BENCHMARK(BM_RenderRay);

void BM_MarchingCubes(benchmark::State& state) {
  FeatureGrid g = make_feature_grid(64, 1.0, 2);
  bake_grid_sdf(g, [](const Vec3& x) { return length(x) - 0.6; });
  for (auto _ : state) {
    TriangleMesh mesh = marching_cubes(g);
    benchmark::DoNotOptimize(mesh.vertices.size());
  }
}
BENCHMARK(BM_MarchingCubes);

}  // namespace

BENCHMARK_MAIN();
