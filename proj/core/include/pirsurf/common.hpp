#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pirsurf {

// All optimization-side math runs in double so finite-difference checks
// stay meaningful; image buffers are float (see image.hpp).
using real = double;

inline constexpr real kPi = 3.14159265358979323846;

struct Vec2 {
  real x = 0, y = 0;
};

struct Vec3 {
  real x = 0, y = 0, z = 0;

  real& operator[](int i) { return (&x)[i]; }
  real operator[](int i) const { return (&x)[i]; }
};

using Rgb = Vec3;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
inline Vec3 operator*(const Vec3& a, real s) { return {a.x * s, a.y * s, a.z * s}; }
inline Vec3 operator*(real s, const Vec3& a) { return a * s; }
inline Vec3 operator*(const Vec3& a, const Vec3& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
inline Vec3 operator/(const Vec3& a, real s) { return {a.x / s, a.y / s, a.z / s}; }
inline Vec3& operator+=(Vec3& a, const Vec3& b) { a = a + b; return a; }
inline Vec3& operator-=(Vec3& a, const Vec3& b) { a = a - b; return a; }
inline Vec3& operator*=(Vec3& a, real s) { a = a * s; return a; }

inline real dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline real length(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalize(const Vec3& a) { return a / length(a); }
inline real max_component(const Vec3& a) { return std::max(a.x, std::max(a.y, a.z)); }
inline real min_component(const Vec3& a) { return std::min(a.x, std::min(a.y, a.z)); }
inline Vec3 vabs(const Vec3& a) { return {std::fabs(a.x), std::fabs(a.y), std::fabs(a.z)}; }
inline real linf_norm(const Vec3& a) { return max_component(vabs(a)); }

inline real clamp(real v, real lo, real hi) { return std::min(std::max(v, lo), hi); }
inline Vec3 clamp(const Vec3& v, real lo, real hi) {
  return {clamp(v.x, lo, hi), clamp(v.y, lo, hi), clamp(v.z, lo, hi)};
}
inline real sqr(real v) { return v * v; }
inline real lerp(real a, real b, real t) { return a + (b - a) * t; }
inline Vec3 lerp(const Vec3& a, const Vec3& b, real t) { return a + (b - a) * t; }

// Mirror reflection of the view vector about the normal, both unit.
inline Vec3 reflect_dir(const Vec3& v, const Vec3& n) { return n * (2 * dot(v, n)) - v; }

// Numerically stable logistic function.
inline real sigmoid(real z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  real e = std::exp(z);
  return e / (1.0 + e);
}
inline real d_sigmoid_from_value(real s) { return s * (1.0 - s); }

// Branchless orthonormal basis about a unit vector (Duff et al. 2017).
inline void build_onb(const Vec3& n, Vec3& t1, Vec3& t2) {
  real sign = std::copysign(1.0, n.z);
  real a = -1.0 / (sign + n.z);
  real b = n.x * n.y * a;
  t1 = {1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x};
  t2 = {b, sign + n.y * n.y * a, -n.y};
}

class PirError : public std::runtime_error {
 public:
  explicit PirError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pirsurf
