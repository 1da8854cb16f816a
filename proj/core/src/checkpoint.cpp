#include "pirsurf/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

namespace pirsurf {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_block(std::FILE* f, const real* data, std::size_t count) {
  if (std::fwrite(data, sizeof(real), count, f) != count)
    throw PirError("checkpoint: short write");
}

void read_block(std::FILE* f, real* data, std::size_t count) {
  if (std::fread(data, sizeof(real), count, f) != count)
    throw PirError("checkpoint: truncated binary section");
}

}  // namespace

void save_checkpoint(const std::string& path, const SceneModel& model, int step,
                     std::uint64_t seed) {
  std::string tmp = path + ".tmp";
  {
    FilePtr f(std::fopen(tmp.c_str(), "wb"));
    if (!f) throw PirError("cannot write checkpoint: " + tmp);
    std::fprintf(f.get(), "PIRSURF_CKPT 1\n");
    std::fprintf(f.get(), "grid_res %d\n", model.grid.res);
    std::fprintf(f.get(), "rad %.17g\n", model.grid.rad);
    std::fprintf(f.get(), "channels %d\n", model.grid.channels);
    std::fprintf(f.get(), "head_res %d\n", model.head.res);
    std::fprintf(f.get(), "normal_mix %.17g\n", model.head.normal_mix);
    std::fprintf(f.get(), "decoder %d %d\n", model.decoder.in_dim, model.decoder.hidden);
    std::fprintf(f.get(), "env_face_res %d\n", model.env.face_res);
    std::fprintf(f.get(), "env_levels %d\n", model.env.levels());
    std::fprintf(f.get(), "env_roughness");
    for (real r : model.env.roughness_levels) std::fprintf(f.get(), " %.17g", r);
    std::fprintf(f.get(), "\n");
    std::fprintf(f.get(), "env_samples %d\n", model.env.samples_per_texel);
    std::fprintf(f.get(), "env_seed %llu\n", static_cast<unsigned long long>(model.env.seed));
    std::fprintf(f.get(), "lut %d %d %llu\n", model.lut.size, model.lut.samples,
                 static_cast<unsigned long long>(model.lut.seed));
    std::fprintf(f.get(), "step %d\n", step);
    std::fprintf(f.get(), "seed %llu\n", static_cast<unsigned long long>(seed));
    std::fprintf(f.get(), "BINARY\n");
    write_block(f.get(), model.grid.values.data(), model.grid.values.size());
    write_block(f.get(), model.head.coeffs.data(), model.head.coeffs.size());
    write_block(f.get(), model.decoder.w1.data(), model.decoder.w1.size());
    write_block(f.get(), model.decoder.b1.data(), model.decoder.b1.size());
    write_block(f.get(), model.decoder.w2.data(), model.decoder.w2.size());
    write_block(f.get(), model.decoder.b2.data(), model.decoder.b2.size());
    write_block(f.get(), model.env.base.texels.data(), model.env.base.texels.size());
    write_block(f.get(), &model.log_tau, 1);
  }
  std::filesystem::rename(tmp, path);
}

SceneModel load_checkpoint(const std::string& path, int* step, std::uint64_t* seed) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw PirError("cannot open checkpoint: " + path);
  char line[512];
  if (!std::fgets(line, sizeof(line), f.get()) || std::string(line).rfind("PIRSURF_CKPT", 0) != 0)
    throw PirError("not a checkpoint file: " + path);

  SceneModel model;
  int grid_res = 0, channels = 0, head_res = 0, dec_in = 0, dec_hidden = 0;
  real rad = 1.5, normal_mix = 0.25;
  int env_res = 0, env_levels = 0, env_samples = 0;
  std::vector<real> roughness;
  unsigned long long env_seed = 0, run_seed = 0, lut_seed = 0;
  int lut_size = 0, lut_samples = 0;
  int step_val = 0;

  while (std::fgets(line, sizeof(line), f.get())) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "BINARY") break;
    if (key == "grid_res") ss >> grid_res;
    else if (key == "rad") ss >> rad;
    else if (key == "channels") ss >> channels;
    else if (key == "head_res") ss >> head_res;
    else if (key == "normal_mix") ss >> normal_mix;
    else if (key == "decoder") ss >> dec_in >> dec_hidden;
    else if (key == "env_face_res") ss >> env_res;
    else if (key == "env_levels") ss >> env_levels;
    else if (key == "env_roughness") {
      real r;
      while (ss >> r) roughness.push_back(r);
    } else if (key == "env_samples") ss >> env_samples;
    else if (key == "env_seed") ss >> env_seed;
    else if (key == "lut") ss >> lut_size >> lut_samples >> lut_seed;
    else if (key == "step") ss >> step_val;
    else if (key == "seed") ss >> run_seed;
  }
  if (grid_res < 2 || channels < 2 || head_res < 2 || env_res < 1)
    throw PirError("checkpoint header incomplete: " + path);

  model.grid = make_feature_grid(grid_res, rad, channels);
  model.head = make_radiance_head(head_res, rad);
  model.head.normal_mix = normal_mix;
  model.decoder = make_material_decoder(dec_in, dec_hidden, 0);
  model.env.face_res = env_res;
  model.env.roughness_levels = roughness;
  model.env.samples_per_texel = env_samples;
  model.env.seed = env_seed;
  model.env.base = CubemapData(env_res);

  read_block(f.get(), model.grid.values.data(), model.grid.values.size());
  read_block(f.get(), model.head.coeffs.data(), model.head.coeffs.size());
  read_block(f.get(), model.decoder.w1.data(), model.decoder.w1.size());
  read_block(f.get(), model.decoder.b1.data(), model.decoder.b1.size());
  read_block(f.get(), model.decoder.w2.data(), model.decoder.w2.size());
  read_block(f.get(), model.decoder.b2.data(), model.decoder.b2.size());
  read_block(f.get(), model.env.base.texels.data(), model.env.base.texels.size());
  read_block(f.get(), &model.log_tau, 1);

  rebuild_env(model.env);
  if (lut_size >= 16) model.lut = bake_splitsum_lut(lut_size, lut_samples, lut_seed);

  if (step) *step = step_val;
  if (seed) *seed = run_seed;
  return model;
}

void save_feature_grid(const std::string& path, const FeatureGrid& grid) {
  std::string tmp = path + ".tmp";
  {
    FilePtr f(std::fopen(tmp.c_str(), "wb"));
    if (!f) throw PirError("cannot write grid blob: " + tmp);
    std::fprintf(f.get(), "PIRSURF_GRID 1\n");
    std::fprintf(f.get(), "res %d rad %.17g channels %d\n", grid.res, grid.rad, grid.channels);
    std::fprintf(f.get(), "BINARY\n");
    write_block(f.get(), grid.values.data(), grid.values.size());
  }
  std::filesystem::rename(tmp, path);
}

FeatureGrid load_feature_grid(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw PirError("cannot open grid blob: " + path);
  char line[256];
  if (!std::fgets(line, sizeof(line), f.get()) || std::string(line).rfind("PIRSURF_GRID", 0) != 0)
    throw PirError("not a grid blob: " + path);
  int res = 0, channels = 0;
  real rad = 0;
  if (!std::fgets(line, sizeof(line), f.get()) ||
      std::sscanf(line, "res %d rad %lf channels %d", &res, &rad, &channels) != 3)
    throw PirError("malformed grid blob header: " + path);
  if (!std::fgets(line, sizeof(line), f.get()))  // BINARY marker
    throw PirError("truncated grid blob: " + path);
  FeatureGrid grid = make_feature_grid(res, rad, channels);
  read_block(f.get(), grid.values.data(), grid.values.size());
  return grid;
}

}  // namespace pirsurf
