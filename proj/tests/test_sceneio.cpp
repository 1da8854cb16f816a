#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pirsurf/checkpoint.hpp"
#include "pirsurf/rng.hpp"
#include "pirsurf/sceneio.hpp"

using namespace pirsurf;
namespace fs = std::filesystem;

namespace {

Camera identity_camera(int w, int h, real f) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

Image black_latlong(int h) { return Image(2 * h, h, 0.f); }

FixtureSpec single_sphere_spec(const std::string& env_path, std::uint64_t seed = 1) {
  FixtureSpec spec;
  spec.seed = seed;
  spec.rad = 1.5;
  FixturePrimitive sphere;
  sphere.type = FixturePrimitive::Type::kSphere;
  sphere.radius = 0.5;
  spec.primitives.push_back(sphere);
  spec.materials.below = {{0.7, 0.3, 0.2}, 0.0, 0.8, 0.0};
  spec.materials.above = {{0.8, 0.8, 0.8}, 0.0, 0.2, 0.9};
  spec.materials.band_normal = {0, 1, 0};
  spec.materials.band_offset = 0.1;
  spec.env_path = env_path;
  spec.width = 64;
  spec.height = 64;
  spec.train_cameras = 8;
  spec.novel_cameras = 0;
  spec.relight_cameras = 0;
  spec.env_face_res = 16;
  return spec;
}

}  // namespace

TEST_CASE("generate_ray: principal ray, unit norm, focal scaling") {
  Camera cam = identity_camera(64, 64, 80);
  Ray center = generate_ray(cam, cam.cx - 0.5, cam.cy - 0.5);
  CHECK(center.dir.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(center.dir.y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(center.dir.z == doctest::Approx(1.0).epsilon(1e-12));

  Pcg32 rng(3, 3);
  for (int k = 0; k < 20; ++k) {
    Ray r = generate_ray(cam, rng.next_below(64), rng.next_below(64));
    CHECK(std::fabs(length(r.dir) - 1.0) < 1e-9);
  }

  Camera cam2 = cam;
  cam2.fx *= 2.0;
  Ray a = generate_ray(cam, 10, 20);
  Ray b = generate_ray(cam2, 10, 20);
  CHECK(b.dir.x / b.dir.z == doctest::Approx(0.5 * a.dir.x / a.dir.z).epsilon(1e-12));

  CHECK_THROWS_AS(generate_ray(cam, -1, 0), PirError);
  CHECK_THROWS_AS(generate_ray(cam, 0, 64), PirError);
}

TEST_CASE("project is the inverse of generate_ray on pixel centers") {
  Camera cam = make_lookat_camera({2.4, 1.1, -1.8}, {0.1, -0.2, 0.3}, {0, 1, 0}, 50, 96, 72);
  Pcg32 rng(7, 7);
  for (int k = 0; k < 50; ++k) {
    real px = rng.next_below(96), py = rng.next_below(72);
    Ray ray = generate_ray(cam, px, py);
    Vec3 point = ray.origin + ray.dir * (0.5 + 3.0 * rng.next_real());
    real depth = 0;
    Vec2 back = project(cam, point, &depth);
    CHECK(depth > 0);
    CHECK(std::fabs(back.x - px) < 1e-6);
    CHECK(std::fabs(back.y - py) < 1e-6);
  }
}

TEST_CASE("camera rotations from look-at are orthonormal and upright") {
  Camera cam = make_lookat_camera({0, 0, -3}, {0, 0, 0}, {0, 1, 0}, 45, 32, 32);
  // forward = +z, world-up projects to image-up (negative y direction)
  CHECK(cam.rot.m[2][2] == doctest::Approx(1.0));
  CHECK(cam.rot.m[1][1] == doctest::Approx(-1.0));
  Vec2 above = project(cam, {0, 0.5, 0});
  Vec2 below = project(cam, {0, -0.5, 0});
  CHECK(above.y < below.y);
}

TEST_CASE("PFM round trip is bit exact") {
  Image img(7, 5);
  Pcg32 rng(9, 9);
  for (float& v : img.data) v = float(10.0 * rng.next_real() - 3.0);
  save_pfm("/tmp/pirsurf_io_test.pfm", img);
  Image back = load_pfm("/tmp/pirsurf_io_test.pfm");
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  CHECK(back.data == img.data);
}

TEST_CASE("PNG endpoints and mid-gray EOTF") {
  Image img(4, 2);
  img.set(0, 0, {0, 0, 0});
  img.set(1, 0, {1, 1, 1});
  img.set(2, 0, {128 / 255.0, 128 / 255.0, 128 / 255.0});
  save_png("/tmp/pirsurf_io_test.png", img);
  Image back = load_png("/tmp/pirsurf_io_test.png");
  CHECK(srgb_to_linear(back.at(0, 0).x) == doctest::Approx(0.0));
  CHECK(srgb_to_linear(back.at(1, 0).x) == doctest::Approx(1.0));
  CHECK(srgb_to_linear(back.at(2, 0).x) == doctest::Approx(0.21586).epsilon(1e-3));
  CHECK(linear_to_srgb(srgb_to_linear(0.37)) == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("mask PNG round trips through the 128 threshold") {
  std::vector<std::uint8_t> mask = {1, 0, 0, 1, 1, 1, 0, 0};
  save_mask_png("/tmp/pirsurf_mask_test.png", mask, 4, 2);
  int w = 0, h = 0;
  auto back = load_mask_png("/tmp/pirsurf_mask_test.png", &w, &h);
  CHECK(w == 4);
  CHECK(h == 2);
  CHECK(back == mask);
}

TEST_CASE("manifest round trip preserves cameras and paths") {
  fs::create_directories("/tmp/pirsurf_manifest_test");
  // manifest loading checks file existence
  Image dummy(8, 8, 0.5f);
  save_png("/tmp/pirsurf_manifest_test/im.png", dummy);
  save_mask_png("/tmp/pirsurf_manifest_test/ma.png", std::vector<std::uint8_t>(64, 1), 8, 8);

  SceneManifest m;
  m.rad = 1.25;
  Frame f;
  f.image_path = "im.png";
  f.mask_path = "ma.png";
  f.camera = make_lookat_camera({1, 2, 3}, {0, 0, 0}, {0, 1, 0}, 40, 8, 8);
  m.frames.push_back(f);
  save_manifest("/tmp/pirsurf_manifest_test/manifest.json", m);
  SceneManifest back = load_manifest("/tmp/pirsurf_manifest_test/manifest.json");
  CHECK(back.rad == doctest::Approx(1.25));
  REQUIRE(back.frames.size() == 1);
  const Camera& a = f.camera;
  const Camera& b = back.frames[0].camera;
  CHECK(b.fx == doctest::Approx(a.fx).epsilon(1e-12));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(b.rot.m[r][c] == doctest::Approx(a.rot.m[r][c]).epsilon(1e-12));
}

TEST_CASE("fixture sphere silhouette is a centered disc of the predicted radius") {
  std::string env_path = "/tmp/pirsurf_fx_gray.pfm";
  Image gray = black_latlong(16);
  for (float& v : gray.data) v = 0.4f;
  save_pfm(env_path, gray);
  FixtureSpec spec = single_sphere_spec(env_path);

  const real dist = 3.2;
  Camera cam = make_lookat_camera({0, 0, dist}, {0, 0, 0}, {0, 1, 0}, 45, 64, 64);
  const real t_max = dist + 2 * spec.rad;
  std::vector<std::uint8_t> mask(64 * 64, 0);
  for (int py = 0; py < 64; ++py)
    for (int px = 0; px < 64; ++px)
      mask[py * 64 + px] = sphere_trace(spec, generate_ray(cam, px, py), t_max).hit;

  real expected_r = cam.fx * 0.5 / dist;
  // scan the row through the center
  int py = 32;
  real max_dx = 0;
  int count = 0;
  for (int px = 0; px < 64; ++px)
    if (mask[py * 64 + px]) {
      max_dx = std::max(max_dx, std::fabs(px + 0.5 - cam.cx));
      ++count;
    }
  CHECK(count > 0);
  CHECK(max_dx >= expected_r - 1.0);
  CHECK(max_dx <= expected_r + 1.0);
}

TEST_CASE("fixture generation: black env gives black object pixels; deterministic bytes") {
  std::string env_path = "/tmp/pirsurf_fx_black.pfm";
  save_pfm(env_path, black_latlong(16));
  FixtureSpec spec = single_sphere_spec(env_path, 5);
  spec.width = 32;
  spec.height = 32;
  spec.train_cameras = 8;

  std::string out_a = "/tmp/pirsurf_fx_out_a";
  std::string out_b = "/tmp/pirsurf_fx_out_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  std::string manifest_path = fixture_generate(spec, out_a, 64);
  fixture_generate(spec, out_b, 64);

  SceneManifest manifest = load_manifest(manifest_path);
  auto frames = load_frames(manifest);
  REQUIRE(frames.size() == 8);
  for (const auto& frame : frames)
    for (int py = 0; py < 32; ++py)
      for (int px = 0; px < 32; ++px)
        if (frame.mask[py * 32 + px]) {
          CHECK(frame.image.at(px, py).x == 0.0f);
          CHECK(frame.image.at(px, py).y == 0.0f);
        }

  // two runs, same seed: identical bytes
  for (const char* rel : {"/train/images/train_000.png", "/train/manifest.json", "/gt_grid.bin"}) {
    std::ifstream fa(out_a + rel, std::ios::binary), fb(out_b + rel, std::ios::binary);
    REQUIRE(fa);
    REQUIRE(fb);
    std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(da == db);
  }

  // the baked grid stores the analytic SDF at the nodes
  FeatureGrid gt = load_feature_grid(out_a + "/gt_grid.bin");
  CHECK(gt.rad == doctest::Approx(spec.rad));
  Vec3 probe{0.3, -0.2, 0.1};
  real baked[2];
  sample_feature(gt, probe, baked);
  CHECK(baked[0] == doctest::Approx(fixture_sdf(spec, probe)).epsilon(0.05));
}

TEST_CASE("fixture spec JSON round trip") {
  std::string env_path = "/tmp/pirsurf_fx_gray2.pfm";
  Image gray = black_latlong(8);
  for (float& v : gray.data) v = 0.25f;
  save_pfm(env_path, gray);
  FixtureSpec spec = single_sphere_spec(env_path, 11);
  FixturePrimitive torus;
  torus.type = FixturePrimitive::Type::kTorus;
  torus.center = {0, -0.25, 0};
  torus.major = 0.65;
  torus.minor = 0.18;
  spec.primitives.push_back(torus);
  save_fixture_spec("/tmp/pirsurf_fx_spec.json", spec);
  FixtureSpec back = load_fixture_spec("/tmp/pirsurf_fx_spec.json");
  CHECK(back.primitives.size() == 2);
  CHECK(back.primitives[1].major == doctest::Approx(0.65));
  CHECK(back.materials.above.m == doctest::Approx(0.9));
  Vec3 probe{0.4, 0.1, -0.2};
  CHECK(fixture_sdf(back, probe) == doctest::Approx(fixture_sdf(spec, probe)).epsilon(1e-12));
}
