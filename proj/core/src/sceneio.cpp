#include "pirsurf/sceneio.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "pirsurf/checkpoint.hpp"
#include "pirsurf/rng.hpp"
#include "pirsurf/threads.hpp"

namespace pirsurf {

namespace fs = std::filesystem;
using nlohmann::json;

Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up, real fov_y_deg,
                          int width, int height) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y_deg * kPi / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  Vec3 forward = normalize(target - eye);
  Vec3 up_use = up;
  if (std::fabs(dot(forward, normalize(up_use))) > 0.999) up_use = {1, 0, 0};
  Vec3 right = normalize(cross(-up_use, forward));
  Vec3 down = cross(forward, right);
  for (int r = 0; r < 3; ++r) {
    cam.rot.m[r][0] = right[r];
    cam.rot.m[r][1] = down[r];
    cam.rot.m[r][2] = forward[r];
  }
  cam.trans = eye;
  return cam;
}

Ray generate_ray(const Camera& cam, real px, real py) {
  if (px < 0 || px >= cam.width || py < 0 || py >= cam.height)
    throw PirError("generate_ray: pixel out of range");
  Vec3 dir_cam{(px + 0.5 - cam.cx) / cam.fx, (py + 0.5 - cam.cy) / cam.fy, 1.0};
  Ray ray;
  ray.origin = cam.trans;
  ray.dir = normalize(cam.rot.mul(dir_cam));
  return ray;
}

Vec2 project(const Camera& cam, const Vec3& world, real* z_cam) {
  Vec3 p = cam.rot.mul_transposed(world - cam.trans);
  if (z_cam) *z_cam = p.z;
  return {cam.fx * p.x / p.z + cam.cx - 0.5, cam.fy * p.y / p.z + cam.cy - 0.5};
}

namespace {

json camera_to_json(const Camera& cam) {
  json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::vector<real> c2w;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) c2w.push_back(cam.rot.m[r][c]);
    c2w.push_back(cam.trans[r]);
  }
  j["c2w"] = c2w;
  return j;
}

Camera camera_from_json(const json& j) {
  Camera cam;
  cam.fx = j.at("fx").get<real>();
  cam.fy = j.at("fy").get<real>();
  cam.cx = j.at("cx").get<real>();
  cam.cy = j.at("cy").get<real>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  auto c2w = j.at("c2w").get<std::vector<real>>();
  if (c2w.size() != 12) throw PirError("camera c2w must have 12 entries");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cam.rot.m[r][c] = c2w[r * 4 + c];
    cam.trans[r] = c2w[r * 4 + 3];
  }
  if (cam.fx <= 0 || cam.fy <= 0) throw PirError("camera focal lengths must be positive");
  if (cam.cx <= 0 || cam.cx >= cam.width || cam.cy <= 0 || cam.cy >= cam.height)
    throw PirError("camera principal point outside the image");
  // orthonormality check
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      real d = 0;
      for (int r = 0; r < 3; ++r) d += cam.rot.m[r][a] * cam.rot.m[r][b];
      real want = a == b ? 1.0 : 0.0;
      if (std::fabs(d - want) > 1e-6) throw PirError("camera rotation is not orthonormal");
    }
  return cam;
}

}  // namespace

SceneManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw PirError("cannot open manifest: " + path);
  json j;
  f >> j;
  SceneManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  if (m.base_dir.empty()) m.base_dir = ".";
  m.rad = j.value("rad", 1.5);
  m.env_path = j.value("env", std::string());
  if (j.contains("albedo")) m.albedo_paths = j.at("albedo").get<std::vector<std::string>>();
  for (const auto& fj : j.at("frames")) {
    Frame frame;
    frame.image_path = fj.at("image").get<std::string>();
    frame.mask_path = fj.at("mask").get<std::string>();
    frame.camera = camera_from_json(fj.at("camera"));
    m.frames.push_back(std::move(frame));
  }
  // referenced files must exist
  for (const auto& frame : m.frames) {
    for (const std::string& p : {frame.image_path, frame.mask_path}) {
      if (!fs::exists(fs::path(m.base_dir) / p))
        throw PirError("manifest references missing file: " + p);
    }
  }
  return m;
}

void save_manifest(const std::string& path, const SceneManifest& m) {
  json j;
  j["rad"] = m.rad;
  if (!m.env_path.empty()) j["env"] = m.env_path;
  if (!m.albedo_paths.empty()) j["albedo"] = m.albedo_paths;
  j["frames"] = json::array();
  for (const auto& frame : m.frames) {
    json fj;
    fj["image"] = frame.image_path;
    fj["mask"] = frame.mask_path;
    fj["camera"] = camera_to_json(frame.camera);
    j["frames"].push_back(fj);
  }
  std::ofstream f(path);
  if (!f) throw PirError("cannot write manifest: " + path);
  f << j.dump(2) << "\n";
}

std::vector<LoadedFrame> load_frames(const SceneManifest& manifest) {
  std::vector<LoadedFrame> frames;
  frames.reserve(manifest.frames.size());
  for (const auto& frame : manifest.frames) {
    LoadedFrame lf;
    lf.camera = frame.camera;
    lf.image = load_png((fs::path(manifest.base_dir) / frame.image_path).string());
    int mw = 0, mh = 0;
    lf.mask = load_mask_png((fs::path(manifest.base_dir) / frame.mask_path).string(), &mw, &mh);
    if (lf.image.width != frame.camera.width || lf.image.height != frame.camera.height ||
        mw != frame.camera.width || mh != frame.camera.height)
      throw PirError("frame resolution mismatch vs manifest: " + frame.image_path);
    frames.push_back(std::move(lf));
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Fixture generation
// ---------------------------------------------------------------------------

namespace {

real sdf_sphere(const Vec3& p, real r) { return length(p) - r; }

real sdf_rounded_box(const Vec3& p, const Vec3& b, real rounding) {
  Vec3 q = vabs(p) - b;
  Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
  return length(qp) + std::min(max_component(q), 0.0) - rounding;
}

real sdf_torus(const Vec3& p, real major, real minor) {
  real qx = std::sqrt(p.x * p.x + p.z * p.z) - major;
  return std::sqrt(qx * qx + p.y * p.y) - minor;
}

real smooth_min(real a, real b, real k) {
  if (k <= 0) return std::min(a, b);
  real h = clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
  return lerp(b, a, h) - k * h * (1.0 - h);
}

json material_to_json(const MaterialSample& m) {
  return json{{"kd", {m.kd.x, m.kd.y, m.kd.z}}, {"o", m.o}, {"r", m.r}, {"m", m.m}};
}

MaterialSample material_from_json(const json& j) {
  MaterialSample m;
  auto kd = j.at("kd").get<std::vector<real>>();
  m.kd = {kd[0], kd[1], kd[2]};
  m.o = j.value("o", 0.0);
  m.r = j.at("r").get<real>();
  m.m = j.at("m").get<real>();
  return m;
}

}  // namespace

real fixture_sdf(const FixtureSpec& spec, const Vec3& x) {
  real d = 1e9;
  bool first = true;
  for (const auto& prim : spec.primitives) {
    Vec3 p = x - prim.center;
    real di = 0;
    switch (prim.type) {
      case FixturePrimitive::Type::kSphere: di = sdf_sphere(p, prim.radius); break;
      case FixturePrimitive::Type::kRoundedBox:
        di = sdf_rounded_box(p, prim.half_extent, prim.rounding);
        break;
      case FixturePrimitive::Type::kTorus: di = sdf_torus(p, prim.major, prim.minor); break;
    }
    d = first ? di : smooth_min(d, di, spec.smooth_k);
    first = false;
  }
  return d;
}

MaterialSample fixture_material(const FixtureSpec& spec, const Vec3& x) {
  const auto& m = spec.materials;
  return dot(m.band_normal, x) > m.band_offset ? m.above : m.below;
}

Vec3 fixture_normal(const FixtureSpec& spec, const Vec3& x) {
  const real h = 1e-5;
  Vec3 g{fixture_sdf(spec, {x.x + h, x.y, x.z}) - fixture_sdf(spec, {x.x - h, x.y, x.z}),
         fixture_sdf(spec, {x.x, x.y + h, x.z}) - fixture_sdf(spec, {x.x, x.y - h, x.z}),
         fixture_sdf(spec, {x.x, x.y, x.z + h}) - fixture_sdf(spec, {x.x, x.y, x.z - h})};
  return normalize(g);
}

std::vector<Camera> fixture_cameras(const FixtureSpec& spec, int count, std::uint64_t salt) {
  std::vector<Camera> cams;
  cams.reserve(count);
  const real golden = kPi * (3.0 - std::sqrt(5.0));
  Pcg32 rng(seed_of(spec.seed, 0xca3, salt), 7);
  real phase = rng.next_real() * 2 * kPi;
  for (int i = 0; i < count; ++i) {
    real z = 1.0 - 2.0 * (i + 0.5) / count;
    real rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    real phi = golden * i + phase;
    Vec3 dir{rho * std::cos(phi), z, rho * std::sin(phi)};
    Vec3 eye = dir * spec.camera_distance;
    cams.push_back(make_lookat_camera(eye, {0, 0, 0}, {0, 1, 0}, spec.fov_y_deg, spec.width,
                                      spec.height));
  }
  return cams;
}

SphereTraceResult sphere_trace(const FixtureSpec& spec, const Ray& ray, real t_max) {
  SphereTraceResult res;
  real t = std::max(ray.t_near, 0.0);
  for (int step = 0; step < 256; ++step) {
    Vec3 p = ray.origin + ray.dir * t;
    real d = fixture_sdf(spec, p);
    if (d < 1e-4) {
      res.hit = true;
      res.t = t;
      res.pos = p;
      return res;
    }
    t += d;
    if (t > t_max) break;
  }
  return res;
}

FixtureSpec load_fixture_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw PirError("cannot open fixture spec: " + path);
  json j;
  f >> j;
  FixtureSpec spec;
  spec.seed = j.value("seed", 1);
  spec.rad = j.value("rad", 1.5);
  spec.smooth_k = j.value("smooth_k", 0.1);
  for (const auto& pj : j.at("primitives")) {
    FixturePrimitive p;
    std::string type = pj.at("type").get<std::string>();
    if (pj.contains("center")) {
      auto c = pj.at("center").get<std::vector<real>>();
      p.center = {c[0], c[1], c[2]};
    }
    if (type == "sphere") {
      p.type = FixturePrimitive::Type::kSphere;
      p.radius = pj.at("radius").get<real>();
    } else if (type == "rounded_box") {
      p.type = FixturePrimitive::Type::kRoundedBox;
      auto h = pj.at("half_extent").get<std::vector<real>>();
      p.half_extent = {h[0], h[1], h[2]};
      p.rounding = pj.value("rounding", 0.05);
    } else if (type == "torus") {
      p.type = FixturePrimitive::Type::kTorus;
      p.major = pj.at("major").get<real>();
      p.minor = pj.at("minor").get<real>();
    } else {
      throw PirError("unknown fixture primitive type: " + type);
    }
    spec.primitives.push_back(p);
  }
  const auto& mj = j.at("materials");
  spec.materials.below = material_from_json(mj.at("below"));
  spec.materials.above = material_from_json(mj.at("above"));
  auto bn = mj.at("band_normal").get<std::vector<real>>();
  spec.materials.band_normal = normalize({bn[0], bn[1], bn[2]});
  spec.materials.band_offset = mj.value("band_offset", 0.0);
  spec.env_path = j.at("env").get<std::string>();
  spec.relight_env_path = j.value("relight_env", std::string());
  spec.width = j.value("width", 128);
  spec.height = j.value("height", 128);
  spec.fov_y_deg = j.value("fov_deg", 45.0);
  spec.camera_distance = j.value("camera_distance", 3.2);
  if (j.contains("cameras")) {
    spec.train_cameras = j.at("cameras").value("train", 50);
    spec.novel_cameras = j.at("cameras").value("novel", 8);
    spec.relight_cameras = j.at("cameras").value("relight", 8);
  }
  spec.env_face_res = j.value("env_face_res", 64);
  return spec;
}

void save_fixture_spec(const std::string& path, const FixtureSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["rad"] = spec.rad;
  j["smooth_k"] = spec.smooth_k;
  j["primitives"] = json::array();
  for (const auto& p : spec.primitives) {
    json pj;
    pj["center"] = {p.center.x, p.center.y, p.center.z};
    switch (p.type) {
      case FixturePrimitive::Type::kSphere:
        pj["type"] = "sphere";
        pj["radius"] = p.radius;
        break;
      case FixturePrimitive::Type::kRoundedBox:
        pj["type"] = "rounded_box";
        pj["half_extent"] = {p.half_extent.x, p.half_extent.y, p.half_extent.z};
        pj["rounding"] = p.rounding;
        break;
      case FixturePrimitive::Type::kTorus:
        pj["type"] = "torus";
        pj["major"] = p.major;
        pj["minor"] = p.minor;
        break;
    }
    j["primitives"].push_back(pj);
  }
  j["materials"] = {{"below", material_to_json(spec.materials.below)},
                    {"above", material_to_json(spec.materials.above)},
                    {"band_normal",
                     {spec.materials.band_normal.x, spec.materials.band_normal.y,
                      spec.materials.band_normal.z}},
                    {"band_offset", spec.materials.band_offset}};
  j["env"] = spec.env_path;
  if (!spec.relight_env_path.empty()) j["relight_env"] = spec.relight_env_path;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["fov_deg"] = spec.fov_y_deg;
  j["camera_distance"] = spec.camera_distance;
  j["cameras"] = {{"train", spec.train_cameras},
                  {"novel", spec.novel_cameras},
                  {"relight", spec.relight_cameras}};
  j["env_face_res"] = spec.env_face_res;
  std::ofstream f(path);
  if (!f) throw PirError("cannot write fixture spec: " + path);
  f << j.dump(2) << "\n";
}

namespace {

struct FixtureSet {
  std::string name;
  std::vector<Camera> cameras;
  const CubemapData* env;
  std::string env_rel_path;
};

void render_fixture_set(const FixtureSpec& spec, const FixtureSet& set,
                        const std::string& out_dir, int mc_samples, std::uint64_t set_salt) {
  fs::create_directories(out_dir + "/images");
  fs::create_directories(out_dir + "/masks");
  fs::create_directories(out_dir + "/albedo");
  fs::create_directories(out_dir + "/linear");

  SceneManifest manifest;
  manifest.rad = spec.rad;
  manifest.env_path = set.env_rel_path;

  const real t_max = spec.camera_distance + spec.rad * 2.5;
  for (std::size_t ci = 0; ci < set.cameras.size(); ++ci) {
    const Camera& cam = set.cameras[ci];
    Image img(cam.width, cam.height), albedo(cam.width, cam.height), lin(cam.width, cam.height);
    std::vector<std::uint8_t> mask(std::size_t(cam.width) * cam.height, 0);
    parallel_for(std::int64_t(cam.width) * cam.height, [&](std::int64_t b, std::int64_t e, int) {
      for (std::int64_t p = b; p < e; ++p) {
        int px = int(p % cam.width), py = int(p / cam.width);
        Ray ray = generate_ray(cam, px, py);
        SphereTraceResult hit = sphere_trace(spec, ray, t_max);
        if (!hit.hit) continue;
        mask[std::size_t(p)] = 1;
        Vec3 n = fixture_normal(spec, hit.pos);
        MaterialSample mat = fixture_material(spec, hit.pos);
        std::uint64_t px_seed = seed_of(spec.seed, set_salt, ci, std::uint64_t(p));
        Rgb radiance = shade_reference_mc(mat, n, -ray.dir, *set.env, mc_samples, px_seed);
        lin.set(px, py, radiance);
        img.set(px, py, linear_to_srgb(clamp(radiance, 0.0, 1e9)));
        albedo.set(px, py, linear_to_srgb(mat.kd));
      }
    });
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03d", set.name.c_str(), int(ci));
    std::string stem = name;
    save_png(out_dir + "/images/" + stem + ".png", img);
    save_mask_png(out_dir + "/masks/" + stem + ".png", mask, cam.width, cam.height);
    save_png(out_dir + "/albedo/" + stem + ".png", albedo);
    save_pfm(out_dir + "/linear/" + stem + ".pfm", lin);
    Frame frame;
    frame.image_path = "images/" + stem + ".png";
    frame.mask_path = "masks/" + stem + ".png";
    frame.camera = cam;
    manifest.frames.push_back(frame);
    manifest.albedo_paths.push_back("albedo/" + stem + ".png");
  }
  save_manifest(out_dir + "/manifest.json", manifest);
}

}  // namespace

std::string fixture_generate(const FixtureSpec& spec, const std::string& out_dir, int mc_samples) {
  if (spec.primitives.empty()) throw PirError("fixture spec has no primitives");
  if (spec.train_cameras < 8) throw PirError("fixture needs at least 8 training cameras");
  fs::create_directories(out_dir);

  Image env_ll = load_pfm(spec.env_path);
  CubemapData env_cube = latlong_to_cubemap(env_ll, spec.env_face_res);
  save_pfm(out_dir + "/env_train.pfm", env_ll);

  CubemapData relight_cube;
  bool has_relight = !spec.relight_env_path.empty();
  if (has_relight) {
    Image rel_ll = load_pfm(spec.relight_env_path);
    relight_cube = latlong_to_cubemap(rel_ll, spec.env_face_res);
    save_pfm(out_dir + "/env_relight.pfm", rel_ll);
  }

  std::vector<FixtureSet> sets;
  sets.push_back({"train", fixture_cameras(spec, spec.train_cameras, 0), &env_cube,
                  "../env_train.pfm"});
  if (spec.novel_cameras > 0)
    sets.push_back({"novel", fixture_cameras(spec, spec.novel_cameras, 1), &env_cube,
                    "../env_train.pfm"});
  if (has_relight && spec.relight_cameras > 0)
    sets.push_back({"relight", fixture_cameras(spec, spec.relight_cameras, 2), &relight_cube,
                    "../env_relight.pfm"});

  std::uint64_t salt = 0;
  for (const auto& set : sets) {
    render_fixture_set(spec, set, out_dir + "/" + set.name, mc_samples, salt++);
  }

  // analytic SDF baked for geometry oracles
  FeatureGrid gt_grid = make_feature_grid(64, spec.rad, 2);
  bake_grid_sdf(gt_grid, [&](const Vec3& x) { return fixture_sdf(spec, x); });
  save_feature_grid(out_dir + "/gt_grid.bin", gt_grid);

  save_fixture_spec(out_dir + "/fixture_spec.json", spec);
  return out_dir + "/train/manifest.json";
}

}  // namespace pirsurf
