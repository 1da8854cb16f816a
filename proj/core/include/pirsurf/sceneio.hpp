#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pirsurf/brdf.hpp"
#include "pirsurf/common.hpp"
#include "pirsurf/image.hpp"
#include "pirsurf/volren.hpp"

namespace pirsurf {

struct Mat3 {
  real m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  Vec3 mul(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
  Vec3 mul_transposed(const Vec3& v) const {
    return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
  }
};

// Pinhole camera, OpenCV-style: camera looks down +z in its own frame, x
// right, y down; pixel centers at half-integer coordinates. pose is
// camera-to-world.
struct Camera {
  real fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat3 rot;    // camera-to-world rotation
  Vec3 trans;  // camera center in world
};

Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up, real fov_y_deg,
                          int width, int height);

Ray generate_ray(const Camera& cam, real px, real py);

// Pinhole forward projection to pixel coordinates; z_cam (nullable) receives
// the camera-space depth.
Vec2 project(const Camera& cam, const Vec3& world, real* z_cam = nullptr);

struct Frame {
  std::string image_path;
  std::string mask_path;
  Camera camera;
};

struct SceneManifest {
  real rad = 1.5;
  std::string env_path;  // optional GT environment (lat-long PFM)
  std::vector<Frame> frames;
  std::vector<std::string> albedo_paths;  // optional, fixtures only
  std::string base_dir;                   // directory the manifest was loaded from
};

SceneManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const SceneManifest& manifest);

// Frames with images/masks loaded; images stay sRGB-encoded.
struct LoadedFrame {
  Camera camera;
  Image image;
  std::vector<std::uint8_t> mask;
};

std::vector<LoadedFrame> load_frames(const SceneManifest& manifest);

// ---------------------------------------------------------------------------
// Synthetic fixture generation: analytic SDF primitives shaded by the
// Monte-Carlo reference shader give ground-truth images, masks, albedo maps
// and cameras for round-trip testing.
// ---------------------------------------------------------------------------

struct FixturePrimitive {
  enum class Type { kSphere, kRoundedBox, kTorus } type = Type::kSphere;
  Vec3 center{0, 0, 0};
  real radius = 0.5;     // sphere
  Vec3 half_extent{0.3, 0.3, 0.3};  // rounded box
  real rounding = 0.05;  // rounded box corner radius
  real major = 0.7, minor = 0.15;   // torus (y axis)
};

// Two materials split by a plane band: dot(normal, x) > offset picks `above`.
struct FixtureMaterials {
  MaterialSample below;
  MaterialSample above;
  Vec3 band_normal{0, 1, 0};
  real band_offset = 0.0;
};

struct FixtureSpec {
  std::uint64_t seed = 1;
  real rad = 1.5;
  real smooth_k = 0.1;  // smooth-min blending
  std::vector<FixturePrimitive> primitives;
  FixtureMaterials materials;
  std::string env_path;          // training illumination, lat-long PFM
  std::string relight_env_path;  // optional held-out illumination
  int width = 128, height = 128;
  real fov_y_deg = 45;
  real camera_distance = 3.2;
  int train_cameras = 50;
  int novel_cameras = 8;
  int relight_cameras = 8;
  int env_face_res = 64;
};

FixtureSpec load_fixture_spec(const std::string& path);
void save_fixture_spec(const std::string& path, const FixtureSpec& spec);

real fixture_sdf(const FixtureSpec& spec, const Vec3& x);
MaterialSample fixture_material(const FixtureSpec& spec, const Vec3& x);
Vec3 fixture_normal(const FixtureSpec& spec, const Vec3& x);

// Deterministic camera ring/sphere (fibonacci directions, look-at origin).
std::vector<Camera> fixture_cameras(const FixtureSpec& spec, int count, std::uint64_t salt);

struct SphereTraceResult {
  bool hit = false;
  real t = 0;
  Vec3 pos;
};
SphereTraceResult sphere_trace(const FixtureSpec& spec, const Ray& ray, real t_max);

// Renders GT sets into out_dir/{train,novel,relight}/ plus a baked-SDF grid
// checkpoint for geometry oracles. Returns the training manifest path.
std::string fixture_generate(const FixtureSpec& spec, const std::string& out_dir, int mc_samples);

}  // namespace pirsurf
