#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace cyclemorph {

// Point in surface-plane coordinates. The two axes are the world x and z
// directions of the canonical frame (the limit cycle lives in the y=0 plane),
// hence the member names.
struct Vec2 {
  double x = 0.0;
  double z = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.z + b.z}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.z - b.z}; }
inline Vec2 operator*(double c, Vec2 a) { return {c * a.x, c * a.z}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.z * b.z; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.z); }

// Ordered planar point list (a polyline sampling of a closed curve, or any
// finite point cloud).
using PointSet2 = std::vector<Vec2>;

bool all_finite(const PointSet2& points);

// Point in the 3D state space of the dynamical systems.
struct State3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Time derivative of a State3.
struct Velocity3 {
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;
};

inline bool is_finite(const State3& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.z);
}
inline bool is_finite(const Velocity3& v) {
  return std::isfinite(v.dx) && std::isfinite(v.dy) && std::isfinite(v.dz);
}

// Row-major 3x3 matrix; used for the Jacobian of the state-space map.
struct Jacobian3 {
  std::array<double, 9> m{};

  double& at(int row, int col) { return m[static_cast<std::size_t>(3 * row + col)]; }
  double at(int row, int col) const { return m[static_cast<std::size_t>(3 * row + col)]; }

  static Jacobian3 identity() {
    Jacobian3 j;
    j.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return j;
  }
};

inline Velocity3 apply(const Jacobian3& j, const Velocity3& v) {
  return {j.m[0] * v.dx + j.m[1] * v.dy + j.m[2] * v.dz,
          j.m[3] * v.dx + j.m[4] * v.dy + j.m[5] * v.dz,
          j.m[6] * v.dx + j.m[7] * v.dy + j.m[8] * v.dz};
}

double det(const Jacobian3& j);

// Similarity transform between normalized shape coordinates (centroid at the
// origin, mean radius 1) and the original plane coordinates:
//   original = scale * normalized + translation.
struct ShapeTransform {
  Vec2 translation{0.0, 0.0};
  double scale = 1.0;

  Vec2 denormalize(Vec2 p) const { return scale * p + translation; }
  Vec2 normalize(Vec2 p) const { return {(p.x - translation.x) / scale, (p.z - translation.z) / scale}; }
};

// Axis-aligned planar box, lo componentwise <= hi.
struct Box2 {
  Vec2 lo;
  Vec2 hi;
};

Box2 bounding_box(const PointSet2& points);

// Grows the box symmetrically about its center by the given factor
// (factor 1.5 = 50% inflation). Degenerate zero-extent axes stay degenerate.
Box2 inflate(const Box2& box, double factor);

}  // namespace cyclemorph
