#include "pirsurf/volren.hpp"

#include "pirsurf/threads.hpp"

namespace pirsurf {

bool intersect_domain(const Ray& ray, real rad, real& t0, real& t1) {
  t0 = std::max(ray.t_near, 0.0);
  t1 = ray.t_far;
  for (int k = 0; k < 3; ++k) {
    real o = ray.origin[k], d = ray.dir[k];
    if (std::fabs(d) < 1e-12) {
      if (o < -rad || o > rad) return false;
      continue;
    }
    real ta = (-rad - o) / d, tb = (rad - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 < t1;
}

real phi_tau(real s, real tau) { return sigmoid(tau * s); }

real alpha_from_sdf(real s_i, real s_next, real tau, bool* underflow) {
  if (underflow) *underflow = false;
  if (s_next >= s_i) return 0.0;
  real phi_i = phi_tau(s_i, tau);
  if (phi_i <= 0.0) {
    if (underflow) *underflow = true;
    return 0.0;
  }
  // same expression as the gradient path so both stay bit-identical
  real a = 1.0 - phi_tau(s_next, tau) / phi_i;
  return a > 0 ? a : 0.0;
}

real alpha_from_sdf_grad(real s_i, real s_next, real tau, AlphaGrads& g, bool* underflow) {
  g = {};
  if (underflow) *underflow = false;
  if (s_next >= s_i) return 0.0;
  real phi_i = phi_tau(s_i, tau);
  if (phi_i <= 0.0) {
    if (underflow) *underflow = true;
    return 0.0;
  }
  real phi_n = phi_tau(s_next, tau);
  real ratio = phi_n / phi_i;
  real a = 1.0 - ratio;
  if (a <= 0) return 0.0;
  g.d_si = tau * (1.0 - phi_i) * ratio;
  g.d_snext = -tau * (1.0 - phi_n) * ratio;
  g.d_tau = ratio * (s_i * (1.0 - phi_i) - s_next * (1.0 - phi_n));
  return a;
}

CompositeResult composite(std::span<const Rgb> colors, std::span<const real> alphas) {
  CompositeResult r;
  r.weights.resize(alphas.size());
  real transmittance = 1.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    real w = alphas[i] * transmittance;
    r.weights[i] = w;
    r.color += colors[i] * w;
    r.opacity += w;
    transmittance *= (1.0 - alphas[i]);
  }
  return r;
}

OccupancyGrid make_occupancy_grid(int res, real rad) {
  OccupancyGrid occ;
  occ.res = res;
  occ.rad = rad;
  occ.cells.assign(std::size_t(res) * res * res, 1);
  return occ;
}

void update_occupancy(OccupancyGrid& occ, const FeatureGrid& grid, real tau, real threshold) {
  occ.threshold = threshold;
  const int n = occ.res;
  const real hc = occ.cell_size();
  const real half_diag = 0.5 * hc * std::sqrt(3.0);
  std::vector<std::uint8_t> raw(std::size_t(n) * n * n, 0);
  parallel_for(std::int64_t(n) * n * n, [&](std::int64_t b, std::int64_t e, int) {
    TrilinearCache c;
    for (std::int64_t f = b; f < e; ++f) {
      int x = int(f % n), y = int((f / n) % n), z = int(f / (std::int64_t(n) * n));
      Vec3 center{-occ.rad + (x + 0.5) * hc, -occ.rad + (y + 0.5) * hc, -occ.rad + (z + 0.5) * hc};
      grid.setup_cache(center, c);
      real s = grid.sample_sdf(c);
      real a = alpha_from_sdf(s + half_diag, s - half_diag, tau);
      raw[std::size_t(f)] = a >= threshold ? 1 : 0;
    }
  });
  // dilate by one cell
  parallel_for(std::int64_t(n) * n * n, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t f = b; f < e; ++f) {
      int x = int(f % n), y = int((f / n) % n), z = int(f / (std::int64_t(n) * n));
      std::uint8_t v = 0;
      for (int dz = -1; dz <= 1 && !v; ++dz)
        for (int dy = -1; dy <= 1 && !v; ++dy)
          for (int dx = -1; dx <= 1 && !v; ++dx) {
            int xx = x + dx, yy = y + dy, zz = z + dz;
            if (xx < 0 || yy < 0 || zz < 0 || xx >= n || yy >= n || zz >= n) continue;
            if (raw[(std::size_t(zz) * n + yy) * n + xx]) v = 1;
          }
      occ.cells[std::size_t(f)] = v;
    }
  });
}

namespace {

struct Interval {
  real t0, t1;
};

// Amanatides-Woo traversal collecting contiguous occupied spans.
void occupied_intervals(const Ray& ray, const OccupancyGrid& occ, real t0, real t1,
                        std::vector<Interval>& out) {
  out.clear();
  const int n = occ.res;
  const real hc = occ.cell_size();
  const real eps = 1e-9;
  Vec3 p = ray.origin + ray.dir * (t0 + eps);
  int cell[3];
  for (int k = 0; k < 3; ++k)
    cell[k] = std::min(std::max(int((p[k] + occ.rad) / hc), 0), n - 1);
  real t_max[3], t_delta[3];
  int step[3];
  for (int k = 0; k < 3; ++k) {
    real d = ray.dir[k];
    if (std::fabs(d) < 1e-12) {
      step[k] = 0;
      t_max[k] = std::numeric_limits<real>::infinity();
      t_delta[k] = std::numeric_limits<real>::infinity();
    } else {
      step[k] = d > 0 ? 1 : -1;
      int next = cell[k] + (d > 0 ? 1 : 0);
      real boundary = -occ.rad + next * hc;
      t_max[k] = (boundary - ray.origin[k]) / d;
      t_delta[k] = hc / std::fabs(d);
    }
  }
  real t = t0;
  bool in_run = false;
  real run_start = 0;
  while (t < t1) {
    int axis = t_max[0] <= t_max[1] ? (t_max[0] <= t_max[2] ? 0 : 2) : (t_max[1] <= t_max[2] ? 1 : 2);
    real t_exit = std::min(t_max[axis], t1);
    bool occ_here = occ.occupied(cell[0], cell[1], cell[2]);
    if (occ_here && !in_run) {
      in_run = true;
      run_start = t;
    } else if (!occ_here && in_run) {
      in_run = false;
      if (t > run_start) out.push_back({run_start, t});
    }
    t = t_exit;
    if (t_max[axis] > t1) break;
    cell[axis] += step[axis];
    if (cell[axis] < 0 || cell[axis] >= n) break;
    t_max[axis] += t_delta[axis];
  }
  if (in_run && t1 > run_start) out.push_back({run_start, t1});
}

}  // namespace

void sample_ray_ts(const Ray& ray, real rad, const OccupancyGrid* occ, int count, Pcg32& rng,
                   std::vector<real>& out) {
  out.clear();
  real t0, t1;
  if (!intersect_domain(ray, rad, t0, t1)) return;

  static thread_local std::vector<Interval> intervals;
  intervals.clear();
  if (occ) {
    occupied_intervals(ray, *occ, t0, t1, intervals);
  } else {
    intervals.push_back({t0, t1});
  }
  if (intervals.empty()) return;

  real total = 0;
  for (const auto& iv : intervals) total += iv.t1 - iv.t0;
  if (total <= 0) return;

  out.reserve(count);
  std::size_t iv = 0;
  real cum = 0;
  for (int i = 0; i < count; ++i) {
    real d = (i + rng.next_real()) / count * total;
    while (iv + 1 < intervals.size() && d > cum + (intervals[iv].t1 - intervals[iv].t0)) {
      cum += intervals[iv].t1 - intervals[iv].t0;
      ++iv;
    }
    out.push_back(intervals[iv].t0 + (d - cum));
  }
}

}  // namespace pirsurf
