#pragma once

#include <limits>
#include <span>
#include <vector>

#include "pirsurf/common.hpp"
#include "pirsurf/fields.hpp"
#include "pirsurf/rng.hpp"

namespace pirsurf {

// dir points from the camera into the scene; the paper's view vector
// (towards the camera) is -dir.
struct Ray {
  Vec3 origin;
  Vec3 dir;
  real t_near = 0;
  real t_far = std::numeric_limits<real>::infinity();
};

// Clips the ray against [-rad,rad]^3 and [t_near,t_far]; false when empty.
bool intersect_domain(const Ray& ray, real rad, real& t0, real& t1);

// Sigmoid scaled by tau.
real phi_tau(real s, real tau);

// Discrete opaque-density alpha between consecutive SDF samples:
//   alpha = max((Phi(s_i) - Phi(s_next)) / Phi(s_i), 0)
// Zero when the SDF is non-decreasing. Underflow of Phi(s_i) reports alpha 0
// with the flag set.
real alpha_from_sdf(real s_i, real s_next, real tau, bool* underflow = nullptr);

struct AlphaGrads {
  real d_si = 0, d_snext = 0, d_tau = 0;
};
real alpha_from_sdf_grad(real s_i, real s_next, real tau, AlphaGrads& g,
                         bool* underflow = nullptr);

struct CompositeResult {
  Rgb color{0, 0, 0};
  real opacity = 0;
  std::vector<real> weights;
};

// Front-to-back alpha compositing: w_i = a_i * prod_{j<i} (1 - a_j).
CompositeResult composite(std::span<const Rgb> colors, std::span<const real> alphas);

// res^3 boolean cells over the domain cube; empty cells are skipped during
// ray sampling. Cells are marked by thresholding the per-step alpha at the
// cell center (cell diagonal as the step) and dilated by one cell so pruning
// stays conservative.
struct OccupancyGrid {
  int res = 0;
  real rad = 1.5;
  real threshold = 0.001;
  std::vector<std::uint8_t> cells;

  real cell_size() const { return 2 * rad / res; }
  bool occupied(int x, int y, int z) const {
    return cells[(std::size_t(z) * res + y) * res + x] != 0;
  }
};

OccupancyGrid make_occupancy_grid(int res, real rad);
void update_occupancy(OccupancyGrid& occ, const FeatureGrid& grid, real tau,
                      real threshold = 0.001);

// Stratified t samples over the occupied portion of ray ∩ domain, strictly
// increasing; empty when the ray misses or everything is pruned. occ may be
// null (no pruning).
void sample_ray_ts(const Ray& ray, real rad, const OccupancyGrid* occ, int count, Pcg32& rng,
                   std::vector<real>& out);

}  // namespace pirsurf
