#include "cyclemorph/projection.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>

#include "cyclemorph/errors.hpp"

namespace cyclemorph {
namespace {

Eigen::Vector3d to_eigen(const State3& s) { return {s.x, s.y, s.z}; }
State3 from_eigen(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Matrix3d rotation_of(const Quat& q) {
  return Eigen::Quaterniond(q.w, q.x, q.y, q.z).toRotationMatrix();
}

}  // namespace

void CameraModel::validate() const {
  const bool intrinsics_ok = std::isfinite(fx) && fx > 0.0 && std::isfinite(fy) && fy > 0.0 &&
                             std::isfinite(cx) && std::isfinite(cy);
  if (!intrinsics_ok) {
    throw DomainError("CameraModel: fx and fy must be finite and > 0, cx/cy finite");
  }
  if (!is_finite(position)) throw DomainError("CameraModel: non-finite position");
  const double n2 = orientation.w * orientation.w + orientation.x * orientation.x +
                    orientation.y * orientation.y + orientation.z * orientation.z;
  if (!std::isfinite(n2) || std::abs(n2 - 1.0) > 1e-6) {
    throw DomainError("CameraModel: orientation quaternion must be unit length");
  }
}

void SurfacePlane::validate() const {
  if (!is_finite(point) || !is_finite(normal)) throw DomainError("SurfacePlane: non-finite field");
  const double n2 = normal.x * normal.x + normal.y * normal.y + normal.z * normal.z;
  if (n2 < 1e-24) throw GeometryError("SurfacePlane: zero-length normal");
}

State3 RigidTransform::apply(const State3& p) const {
  return {rot[0] * p.x + rot[1] * p.y + rot[2] * p.z + translation.x,
          rot[3] * p.x + rot[4] * p.y + rot[5] * p.z + translation.y,
          rot[6] * p.x + rot[7] * p.y + rot[8] * p.z + translation.z};
}

Ray pixel_ray(const CameraModel& camera, double u, double v) {
  camera.validate();
  if (!std::isfinite(u) || !std::isfinite(v)) throw DomainError("pixel_ray: non-finite pixel");
  const Eigen::Vector3d cam_dir((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
  const Eigen::Vector3d world_dir = (rotation_of(camera.orientation) * cam_dir).normalized();
  return {camera.position, from_eigen(world_dir)};
}

State3 trace_with_depth(const CameraModel& camera, const SketchPoint& point) {
  if (!point.depth) throw DomainError("trace_with_depth: sketch point has no depth");
  const double d = *point.depth;
  if (!std::isfinite(d) || d <= 0.0) {
    throw DomainError("trace_with_depth: depth must be finite and > 0");
  }
  const Ray ray = pixel_ray(camera, point.u, point.v);
  return {ray.origin.x + d * ray.direction.x, ray.origin.y + d * ray.direction.y,
          ray.origin.z + d * ray.direction.z};
}

State3 trace_to_plane(const CameraModel& camera, double u, double v, const SurfacePlane& plane) {
  plane.validate();
  const Ray ray = pixel_ray(camera, u, v);
  const Eigen::Vector3d n = to_eigen(plane.normal).normalized();
  const Eigen::Vector3d dir = to_eigen(ray.direction);
  const double denom = dir.dot(n);
  if (std::abs(denom) < 1e-12) {
    throw GeometryError("trace_to_plane: viewing ray is parallel to the surface plane");
  }
  const double t = (to_eigen(plane.point) - to_eigen(ray.origin)).dot(n) / denom;
  if (t <= 0.0) {
    throw GeometryError("trace_to_plane: surface plane lies behind the camera");
  }
  return from_eigen(to_eigen(ray.origin) + t * dir);
}

RigidTransform plane_frame(const SurfacePlane& plane, const State3& hint_x) {
  plane.validate();
  if (!is_finite(hint_x)) throw DomainError("plane_frame: non-finite hint");
  const Eigen::Vector3d n = to_eigen(plane.normal).normalized();
  const Eigen::Vector3d hint = to_eigen(hint_x);
  const Eigen::Vector3d in_plane = hint - hint.dot(n) * n;
  if (in_plane.norm() < 1e-9) {
    throw GeometryError("plane_frame: hint_x is collinear with the plane normal");
  }
  const Eigen::Vector3d ex = in_plane.normalized();
  const Eigen::Vector3d ez = ex.cross(n);  // right-handed with ey = normal

  RigidTransform frame;
  frame.rot = {ex.x(), ex.y(), ex.z(), n.x(), n.y(), n.z(), ez.x(), ez.y(), ez.z()};
  const State3 rotated = frame.apply(plane.point);  // translation is still zero here
  frame.translation = {-rotated.x, -rotated.y, -rotated.z};
  return frame;
}

std::pair<PointSet2, ShapeTransform> normalize_shape(const PointSet2& points) {
  if (points.size() < 3) throw DomainError("normalize_shape: need at least 3 points");
  if (!all_finite(points)) throw DomainError("normalize_shape: non-finite point");

  Vec2 centroid{0.0, 0.0};
  for (const Vec2& p : points) centroid = centroid + p;
  centroid = (1.0 / static_cast<double>(points.size())) * centroid;

  double mean_radius = 0.0;
  for (const Vec2& p : points) mean_radius += norm(p - centroid);
  mean_radius /= static_cast<double>(points.size());
  if (mean_radius < 1e-12) {
    throw GeometryError("normalize_shape: degenerate shape (zero mean radius)");
  }

  ShapeTransform transform{centroid, mean_radius};
  PointSet2 normalized;
  normalized.reserve(points.size());
  for (const Vec2& p : points) normalized.push_back(transform.normalize(p));
  return {std::move(normalized), transform};
}

CameraModel default_studio_camera() {
  CameraModel cam;
  cam.fx = 500.0;
  cam.fy = 500.0;
  cam.cx = 320.0;
  cam.cy = 320.0;
  cam.position = {0.0, 1.5, 0.0};
  // 90-degree rotation about x: the camera's +z (viewing axis) maps to world
  // -y, +x stays +x, so image right/down land on world +x/+z.
  const double half_sqrt2 = std::sqrt(0.5);
  cam.orientation = {half_sqrt2, half_sqrt2, 0.0, 0.0};
  return cam;
}

PlaneSpec default_studio_plane() {
  PlaneSpec spec;
  spec.plane.point = {0.0, 0.0, 0.0};
  spec.plane.normal = {0.0, 1.0, 0.0};
  spec.hint_x = {1.0, 0.0, 0.0};
  return spec;
}

ProjectionResult project_sketch(const CameraModel& camera, std::span<const SketchPoint> sketch,
                                const SurfacePlane& plane, const State3& hint_x) {
  if (sketch.size() < 3) throw DomainError("project_sketch: need at least 3 points");
  const RigidTransform frame = plane_frame(plane, hint_x);

  PointSet2 in_plane;
  in_plane.reserve(sketch.size());
  for (const SketchPoint& sp : sketch) {
    const State3 world =
        sp.depth ? trace_with_depth(camera, sp) : trace_to_plane(camera, sp.u, sp.v, plane);
    const State3 canonical = frame.apply(world);
    in_plane.push_back({canonical.x, canonical.z});
  }

  auto [normalized, transform] = normalize_shape(in_plane);
  return {std::move(normalized), transform};
}

}  // namespace cyclemorph
