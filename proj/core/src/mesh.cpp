#include "pirsurf/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace pirsurf {

namespace {

#include "mc_tables.inc"

const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

const int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

TriangleMesh marching_cubes(const FeatureGrid& grid, real iso) {
  if (grid.res < 2) throw PirError("marching_cubes: grid resolution must be >= 2");
  TriangleMesh mesh;
  const int res = grid.res;
  // Global edge key: (min corner node, axis). Shared vertices keep the mesh
  // watertight across cell boundaries.
  std::unordered_map<long long, int> edge_vertex;
  auto edge_key = [res](int x, int y, int z, int axis) {
    return (static_cast<long long>((z * res + y) * res + x) << 2) | axis;
  };

  real vals[8];
  for (int z = 0; z < res - 1; ++z) {
    for (int y = 0; y < res - 1; ++y) {
      for (int x = 0; x < res - 1; ++x) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          vals[c] = grid.node(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2])[0] - iso;
          if (vals[c] < 0) cube |= 1 << c;
        }
        int edges = kEdgeTable[cube];
        if (edges == 0) continue;

        int edge_v[12];
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          int c0 = kEdgeCorner[e][0], c1 = kEdgeCorner[e][1];
          int ex = x + std::min(kCorner[c0][0], kCorner[c1][0]);
          int ey = y + std::min(kCorner[c0][1], kCorner[c1][1]);
          int ez = z + std::min(kCorner[c0][2], kCorner[c1][2]);
          int axis = kCorner[c0][0] != kCorner[c1][0] ? 0 : (kCorner[c0][1] != kCorner[c1][1] ? 1 : 2);
          long long key = edge_key(ex, ey, ez, axis);
          auto it = edge_vertex.find(key);
          if (it != edge_vertex.end()) {
            edge_v[e] = it->second;
            continue;
          }
          real v0 = vals[c0], v1 = vals[c1];
          real t = v0 / (v0 - v1);  // scale invariant: identical for s and 2s
          Vec3 p0 = grid.node_pos(x + kCorner[c0][0], y + kCorner[c0][1], z + kCorner[c0][2]);
          Vec3 p1 = grid.node_pos(x + kCorner[c1][0], y + kCorner[c1][1], z + kCorner[c1][2]);
          Vec3 p = lerp(p0, p1, t);
          int idx = int(mesh.vertices.size());
          mesh.vertices.push_back(p);
          mesh.normals.push_back(sdf_normal(grid, p));
          edge_vertex.emplace(key, idx);
          edge_v[e] = idx;
        }

        for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
          // emit with outward (gradient-aligned) winding
          mesh.faces.push_back({edge_v[kTriTable[cube][t]], edge_v[kTriTable[cube][t + 2]],
                                edge_v[kTriTable[cube][t + 1]]});
        }
      }
    }
  }
  return mesh;
}

void save_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw PirError("cannot write OBJ: " + path);
  char line[160];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
    f << line;
  }
  for (const Vec3& n : mesh.normals) {
    std::snprintf(line, sizeof(line), "vn %.9g %.9g %.9g\n", n.x, n.y, n.z);
    f << line;
  }
  for (const auto& face : mesh.faces) {
    std::snprintf(line, sizeof(line), "f %d//%d %d//%d %d//%d\n", face[0] + 1, face[0] + 1,
                  face[1] + 1, face[1] + 1, face[2] + 1, face[2] + 1);
    f << line;
  }
  if (!f) throw PirError("short write on OBJ: " + path);
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw PirError("cannot read OBJ: " + path);
  TriangleMesh mesh;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x >> v.y >> v.z;
      mesh.vertices.push_back(v);
    } else if (tag == "vn") {
      Vec3 n;
      ss >> n.x >> n.y >> n.z;
      mesh.normals.push_back(n);
    } else if (tag == "f") {
      std::array<int, 3> face{};
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        ss >> tok;
        face[k] = std::atoi(tok.c_str()) - 1;
      }
      mesh.faces.push_back(face);
    }
  }
  return mesh;
}

}  // namespace pirsurf
