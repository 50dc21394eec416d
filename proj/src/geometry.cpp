#include "cyclemorph/geometry.hpp"

#include "cyclemorph/errors.hpp"

namespace cyclemorph {

bool all_finite(const PointSet2& points) {
  for (const Vec2& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.z)) return false;
  }
  return true;
}

double det(const Jacobian3& j) {
  const auto& m = j.m;
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Box2 bounding_box(const PointSet2& points) {
  if (points.empty()) throw DomainError("bounding_box: empty point set");
  Box2 box{points.front(), points.front()};
  for (const Vec2& p : points) {
    box.lo.x = std::min(box.lo.x, p.x);
    box.lo.z = std::min(box.lo.z, p.z);
    box.hi.x = std::max(box.hi.x, p.x);
    box.hi.z = std::max(box.hi.z, p.z);
  }
  return box;
}

Box2 inflate(const Box2& box, double factor) {
  if (!(factor >= 0.0)) throw DomainError("inflate: factor must be non-negative");
  const Vec2 center = 0.5 * (box.lo + box.hi);
  const Vec2 half = 0.5 * (box.hi - box.lo);
  return {center - factor * half, center + factor * half};
}

}  // namespace cyclemorph
