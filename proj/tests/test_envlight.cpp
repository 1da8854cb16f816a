#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pirsurf/envlight.hpp"
#include "pirsurf/rng.hpp"

using namespace pirsurf;

namespace {

Image constant_latlong(int h, const Rgb& c) {
  Image img(2 * h, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < 2 * h; ++x) img.set(x, y, c);
  return img;
}

CubemapData random_base(int res, std::uint64_t seed, real lo = 0.05, real hi = 2.0) {
  CubemapData cube(res);
  Pcg32 rng(seed, 3);
  for (real& t : cube.texels) t = lo + (hi - lo) * rng.next_real();
  return cube;
}

// Continuous limit of the normalized GGX prefilter estimator, integrated by
// dense sub-texel quadrature: sum L(l) (l.r)+ D(h(l)) w / sum (l.r)+ D(h(l)) w.
Rgb prefilter_quadrature_oracle(const CubemapData& base, const Vec3& axis, real roughness,
                                int subdiv) {
  real alpha = roughness * roughness;
  Rgb num{0, 0, 0};
  real den = 0;
  int n = base.face_res;
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        real omega = cube_texel_solid_angle(i, j, n) / (subdiv * subdiv);
        for (int sj = 0; sj < subdiv; ++sj)
          for (int si = 0; si < subdiv; ++si) {
            real s = 2.0 * (i + (si + 0.5) / subdiv) / n - 1.0;
            real t = 2.0 * (j + (sj + 0.5) / subdiv) / n - 1.0;
            Vec3 l = cube_face_dir(face, s, t);
            real cos_lr = dot(l, axis);
            if (cos_lr <= 0) continue;
            Vec3 h = normalize(l + axis);
            real d = alpha * alpha /
                     (kPi * sqr(sqr(dot(h, axis)) * (alpha * alpha - 1.0) + 1.0));
            real w = cos_lr * d * omega;
            num += base.sample(l) * w;
            den += w;
          }
      }
  return num / den;
}

}  // namespace

TEST_CASE("cube face mapping round trips texel directions") {
  CubemapData cube(8);
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i) {
        Vec3 dir = cube.texel_dir(face, i, j);
        int f2;
        real s, t;
        cube_dir_to_face(dir, f2, s, t);
        CHECK(f2 == face);
        CHECK(std::fabs(s - (2.0 * (i + 0.5) / 8 - 1.0)) < 1e-12);
        CHECK(std::fabs(t - (2.0 * (j + 0.5) / 8 - 1.0)) < 1e-12);
      }
}

TEST_CASE("cube texel solid angles cover the sphere") {
  int n = 16;
  real total = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) total += cube_texel_solid_angle(i, j, n);
  CHECK(std::fabs(6 * total - 4 * kPi) < 1e-9);
}

TEST_CASE("constant lat-long converts to constant cubemap") {
  Image ll = constant_latlong(16, {0.5, 0.5, 0.5});
  CubemapData cube = latlong_to_cubemap(ll, 16);
  for (real v : cube.texels) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("single bright lat-long texel maps to the -z cubemap texel") {
  int h = 32;
  Image ll = constant_latlong(h, {0, 0, 0});
  ll.set(h, h / 2, {1, 1, 1});  // image center: u=0.5 (+ half texel), v=0.5
  CubemapData cube = latlong_to_cubemap(ll, 32);
  // brute force over every cubemap texel
  real best = -1;
  Vec3 best_dir;
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < cube.face_res; ++j)
      for (int i = 0; i < cube.face_res; ++i) {
        real v = cube.fetch(face, i, j).x;
        if (v > best) {
          best = v;
          best_dir = cube.texel_dir(face, i, j);
        }
      }
  CHECK(best > 0);
  // the lit direction sits half a lat-long texel off the exact center
  Vec3 expected = latlong_dir((h + 0.5) / (2.0 * h), (h / 2 + 0.5) / real(h));
  CHECK(dot(best_dir, expected) > std::cos(2.0 * kPi / cube.face_res));
  CHECK(best_dir.z < -0.9);
}

TEST_CASE("lat-long round trip on a smooth gradient stays within 2/255") {
  int h = 32;
  Image ll(2 * h, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < 2 * h; ++x) {
      Vec3 d = latlong_dir((x + 0.5) / (2.0 * h), (y + 0.5) / h);
      real v = 0.5 + 0.2 * d.x + 0.15 * d.y - 0.1 * d.z;
      ll.set(x, y, {v, v * 0.8, v * 0.6});
    }
  CubemapData cube = latlong_to_cubemap(ll, 32);  // face_res >= height
  Image back = cubemap_to_latlong(cube, h);
  for (std::size_t k = 0; k < ll.data.size(); ++k)
    CHECK(std::fabs(ll.data[k] - back.data[k]) <= 2.0 / 255.0);
}

TEST_CASE("prefilter of a constant environment is constant at every level") {
  EnvCubemap env = make_env_cubemap(8, 0.7, 64, 11);
  for (int j = 0; j < env.levels(); ++j)
    for (real v : env.mips[j].texels) CHECK(v == doctest::Approx(0.7).epsilon(1e-6));
  for (real v : env.diffuse.texels) CHECK(v == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("roughness-zero level is a bitwise copy of the base") {
  EnvCubemap env;
  env.face_res = 8;
  env.samples_per_texel = 32;
  env.seed = 5;
  env.base = random_base(8, 5);
  rebuild_env(env);
  CHECK(env.mips[0].texels == env.base.texels);
}

TEST_CASE("one-bright-texel prefilter matches the quadrature oracle within 2%") {
  EnvCubemap env;
  env.face_res = 8;
  env.roughness_levels = {0.0, 0.5};
  env.samples_per_texel = 100000;
  env.seed = 3;
  env.base = CubemapData(8, 0.0);
  env.base.store(4, 3, 3, {40, 40, 40});
  prefilter_specular(env);
  Vec3 axis = env.base.texel_dir(4, 3, 3);
  Rgb got = env.mips[1].sample(axis);
  Rgb want = prefilter_quadrature_oracle(env.base, axis, 0.5, 6);
  CHECK(std::fabs(got.x - want.x) / want.x < 0.02);
}

TEST_CASE("diffuse irradiance of upper-hemisphere light is zero at -n") {
  EnvCubemap env;
  env.face_res = 16;
  env.samples_per_texel = 256;
  env.seed = 9;
  env.base = CubemapData(16, 0.0);
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < 16; ++j)
      for (int i = 0; i < 16; ++i)
        if (env.base.texel_dir(face, i, j).y > 0.5) env.base.store(face, i, j, {1, 1, 1});
  rebuild_env(env);
  Rgb at_down = env.diffuse.sample({0, -1, 0});
  CHECK(at_down.x == 0.0);
  CHECK(at_down.y == 0.0);
  CHECK(at_down.z == 0.0);
}

TEST_CASE("sky-gradient diffuse irradiance matches cosine quadrature within 2%") {
  EnvCubemap env;
  env.face_res = 16;
  env.samples_per_texel = 200000;
  env.seed = 13;
  env.base = CubemapData(16);
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < 16; ++j)
      for (int i = 0; i < 16; ++i) {
        Vec3 d = env.base.texel_dir(face, i, j);
        env.base.store(face, i, j, {0.5 + 0.4 * d.z, 0.4 + 0.3 * d.y, 0.3 - 0.2 * d.x});
      }
  diffuse_irradiance(env);
  Vec3 n{0, 0, 1};
  // (1/pi) integral of L (l.n)+ via dense sub-texel quadrature
  Rgb want{0, 0, 0};
  int res = env.base.face_res, subdiv = 6;
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        real omega = cube_texel_solid_angle(i, j, res) / (subdiv * subdiv);
        for (int sj = 0; sj < subdiv; ++sj)
          for (int si = 0; si < subdiv; ++si) {
            real s = 2.0 * (i + (si + 0.5) / subdiv) / res - 1.0;
            real t = 2.0 * (j + (sj + 0.5) / subdiv) / res - 1.0;
            Vec3 l = cube_face_dir(face, s, t);
            real c = dot(l, n);
            if (c <= 0) continue;
            want += env.base.sample(l) * (c * omega / kPi);
          }
      }
  Rgb got = env.diffuse.sample(n);
  for (int c = 0; c < 3; ++c) CHECK(std::fabs(got[c] - want[c]) / want[c] < 0.02);
}

TEST_CASE("sample_prefiltered interpolates and hits exact levels") {
  EnvCubemap env;
  env.face_res = 8;
  env.samples_per_texel = 64;
  env.seed = 21;
  env.base = random_base(8, 21);
  rebuild_env(env);
  Vec3 dir = normalize(Vec3{0.3, 0.8, -0.4});

  // constant env: any roughness returns the constant
  EnvCubemap cst = make_env_cubemap(8, 0.25, 64, 2);
  PrefilterTaps taps;
  Rgb v = sample_prefiltered(cst, dir, 0.37, &taps);
  CHECK(v.x == doctest::Approx(0.25).epsilon(1e-9));
  CHECK_FALSE(taps.clamped_roughness);

  // exact level endpoints
  for (int j = 0; j < env.levels(); ++j) {
    Rgb a = sample_prefiltered(env, dir, env.roughness_levels[j]);
    Rgb b = env.mips[j].sample(dir);
    CHECK(a.x == doctest::Approx(b.x).epsilon(1e-12));
    CHECK(a.y == doctest::Approx(b.y).epsilon(1e-12));
  }

  // out-of-range roughness clamps and flags
  sample_prefiltered(env, dir, 1.5, &taps);
  CHECK(taps.clamped_roughness);
}

TEST_CASE("sample_prefiltered texel gradient matches finite differences") {
  EnvCubemap env;
  env.face_res = 8;
  env.samples_per_texel = 64;
  env.seed = 23;
  env.base = random_base(8, 23);
  rebuild_env(env);
  Vec3 dir = normalize(Vec3{0.4, -0.2, 0.88});
  real r = 0.4;
  PrefilterTaps taps;
  sample_prefiltered(env, dir, r, &taps);
  const real h = 1e-4;
  for (int lvl = 0; lvl < 2; ++lvl)
    for (int k = 0; k < 4; ++k) {
      int level = taps.level[lvl];
      int idx = taps.taps[lvl].idx[k];
      real expect = taps.level_weight[lvl] * taps.taps[lvl].w[k];
      real* slot = &env.mips[level].texels[std::size_t(idx) * 3];
      real saved = *slot;
      *slot = saved + h;
      real up = sample_prefiltered(env, dir, r).x;
      *slot = saved - h;
      real dn = sample_prefiltered(env, dir, r).x;
      *slot = saved;
      real fd = (up - dn) / (2 * h);
      CHECK(std::fabs(fd - expect) < 1e-3 * std::max(1.0, std::fabs(expect)));
    }
}

TEST_CASE("light regularizer: gray maps are free, chroma is penalized") {
  CubemapData gray(4, 0.8);
  CHECK(light_reg_loss(gray) <= 1e-12);  // roundoff of the channel mean

  CubemapData one(4, 1.0);
  one.store(0, 0, 0, {3, 0, 0});
  real expect = (2.0 + 1.0 + 1.0) / (3.0 * one.texel_count());
  CHECK(light_reg_loss(one) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("light regularizer gradient matches finite differences") {
  CubemapData base = random_base(4, 31);
  std::vector<real> grad(base.texels.size(), 0.0);
  light_reg_backward(base, 1.0, grad);
  Pcg32 rng(77, 1);
  const real h = 1e-6;
  for (int k = 0; k < 40; ++k) {
    std::size_t idx = rng.next_below(std::uint32_t(base.texels.size()));
    real saved = base.texels[idx];
    base.texels[idx] = saved + h;
    real up = light_reg_loss(base);
    base.texels[idx] = saved - h;
    real dn = light_reg_loss(base);
    base.texels[idx] = saved;
    real fd = (up - dn) / (2 * h);
    CHECK(std::fabs(fd - grad[idx]) < 1e-3 * std::max(std::fabs(fd), 1e-6));
  }
}

TEST_CASE("prefiltering is linear in the base map") {
  EnvCubemap a, b;
  for (EnvCubemap* e : {&a, &b}) {
    e->face_res = 8;
    e->samples_per_texel = 32;
    e->seed = 55;  // identical kernels
  }
  a.base = random_base(8, 100);
  b.base = random_base(8, 200);
  rebuild_env(a);
  rebuild_env(b);

  EnvCubemap mix = a;
  const real ca = 0.7, cb = 1.9;
  for (std::size_t k = 0; k < mix.base.texels.size(); ++k)
    mix.base.texels[k] = ca * a.base.texels[k] + cb * b.base.texels[k];
  rebuild_env(mix);
  for (int j = 0; j < mix.levels(); ++j)
    for (std::size_t k = 0; k < mix.mips[j].texels.size(); ++k) {
      real want = ca * a.mips[j].texels[k] + cb * b.mips[j].texels[k];
      CHECK(std::fabs(mix.mips[j].texels[k] - want) < 1e-6);
    }
}

TEST_CASE("prefiltered levels stay inside the base value range") {
  EnvCubemap env;
  env.face_res = 8;
  env.samples_per_texel = 128;
  env.seed = 8;
  env.base = random_base(8, 8, 0.2, 3.0);
  rebuild_env(env);
  real lo = 1e9, hi = -1e9;
  for (real v : env.base.texels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (int j = 0; j < env.levels(); ++j)
    for (real v : env.mips[j].texels) {
      CHECK(v >= lo - 1e-9);
      CHECK(v <= hi + 1e-9);
    }
  for (real v : env.diffuse.texels) {
    CHECK(v >= lo - 1e-9);
    CHECK(v <= hi + 1e-9);
  }
}

TEST_CASE("sample_prefiltered is continuous in roughness") {
  EnvCubemap env;
  env.face_res = 8;
  env.samples_per_texel = 64;
  env.seed = 77;
  env.base = random_base(8, 77, 0.0, 2.0);
  rebuild_env(env);
  Vec3 dir = normalize(Vec3{-0.5, 0.6, 0.62});
  real span = 0;
  for (int j = 0; j < env.levels(); ++j) {
    Rgb v = env.mips[j].sample(dir);
    span = std::max({span, std::fabs(v.x), std::fabs(v.y), std::fabs(v.z)});
  }
  const real delta = 1e-3;
  Rgb last = sample_prefiltered(env, dir, 0.0);
  for (real r = delta; r <= 1.0 + 1e-12; r += delta) {
    Rgb cur = sample_prefiltered(env, dir, r);
    real jump = std::fabs(cur.x - last.x);
    // Lipschitz bound: level gap 0.25 between anchors
    CHECK(jump <= span / 0.25 * delta * 2 + 1e-12);
    last = cur;
  }
}

TEST_CASE("env save/load round trip reproduces the environment exactly") {
  EnvCubemap env;
  env.face_res = 8;
  env.samples_per_texel = 64;
  env.seed = 41;
  env.base = random_base(8, 41);
  rebuild_env(env);
  save_env("/tmp/pirsurf_env_test", env);
  EnvCubemap loaded = load_env("/tmp/pirsurf_env_test");
  CHECK(loaded.face_res == env.face_res);
  CHECK(loaded.samples_per_texel == env.samples_per_texel);
  for (std::size_t k = 0; k < env.base.texels.size(); ++k)
    CHECK(loaded.base.texels[k] == doctest::Approx(env.base.texels[k]).epsilon(1e-6));
  // mips rebuilt deterministically from the (float-quantized) base
  CHECK(loaded.mips.size() == env.mips.size());
}

TEST_CASE("lat-long conversion rejects bad dimensions and NaNs") {
  Image bad(10, 7);
  CHECK_THROWS_AS(latlong_to_cubemap(bad, 8), PirError);
  Image nan_img = constant_latlong(8, {0.5, 0.5, 0.5});
  nan_img.data[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(latlong_to_cubemap(nan_img, 8), PirError);
  EnvCubemap env;
  env.face_res = 4;
  env.samples_per_texel = 0;
  env.base = CubemapData(4, 0.5);
  CHECK_THROWS_AS(prefilter_specular(env), PirError);
}
