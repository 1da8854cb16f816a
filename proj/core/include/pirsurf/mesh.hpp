#pragma once

#include <array>
#include <string>
#include <vector>

#include "pirsurf/common.hpp"
#include "pirsurf/fields.hpp"

namespace pirsurf {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;  // per vertex, from the SDF gradient
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }
};

// Extracts the iso-level of channel 0 (s <= iso inside) with shared edge
// vertices, linear edge interpolation and per-vertex normals from the
// interpolated SDF gradient. An empty level set yields an empty mesh.
TriangleMesh marching_cubes(const FeatureGrid& grid, real iso = 0);

void save_obj(const std::string& path, const TriangleMesh& mesh);
TriangleMesh load_obj(const std::string& path);

}  // namespace pirsurf
