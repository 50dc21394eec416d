#pragma once

#include <array>
#include <optional>
#include <span>

#include "cyclemorph/geometry.hpp"

namespace cyclemorph {

// Unit quaternion (w, x, y, z) rotating camera-frame vectors into the world
// frame. The camera looks along its local +z axis.
struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Pinhole intrinsics in pixels plus the camera pose in world coordinates.
struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  State3 position;
  Quat orientation;

  void validate() const;
};

// One digitized stroke sample. depth, when present, is the distance along the
// viewing ray in world units.
struct SketchPoint {
  double u = 0.0;
  double v = 0.0;
  std::optional<double> depth;
};

// The plane the drawn curve lives on, in world coordinates. normal need not
// be unit length (it is normalized where used) but must be nonzero.
struct SurfacePlane {
  State3 point;
  State3 normal;

  void validate() const;
};

struct Ray {
  State3 origin;
  State3 direction;  // unit length
};

// p_out = rot * p_in + translation, rot row-major.
struct RigidTransform {
  std::array<double, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};
  State3 translation;

  State3 apply(const State3& p) const;
};

// Viewing ray of pixel (u, v): direction
// normalize(R * [(u - cx)/fx, (v - cy)/fy, 1]) from the camera position.
Ray pixel_ray(const CameraModel& camera, double u, double v);

// Point at the given depth along the pixel's viewing ray. The sketch point
// must carry a depth, finite and > 0.
State3 trace_with_depth(const CameraModel& camera, const SketchPoint& point);

// Intersection of the pixel's viewing ray with the plane. Rays parallel to
// the plane or hitting it behind the camera raise GeometryError.
State3 trace_to_plane(const CameraModel& camera, double u, double v, const SurfacePlane& plane);

// Rigid transform into the canonical frame: plane.point maps to the origin,
// the plane normal to +y, and hint_x (projected onto the plane) to +x. The
// third axis completes a right-handed frame, so points on the plane land in
// y = 0. hint_x must not be collinear with the normal.
RigidTransform plane_frame(const SurfacePlane& plane, const State3& hint_x);

// Centroid to the origin, mean radius to 1. Returns the normalized points
// and the similarity mapping them back to the input coordinates. A shape
// whose mean radius vanishes (all points coincident) raises GeometryError.
std::pair<PointSet2, ShapeTransform> normalize_shape(const PointSet2& points);

// Plane plus the in-plane direction that becomes the +x axis of the
// canonical frame.
struct PlaneSpec {
  SurfacePlane plane;
  State3 hint_x{1.0, 0.0, 0.0};
};

// Synthetic fronto-parallel setup used when a sketch arrives without scene
// calibration: a 640x640 camera 1.5 units above the origin looking straight
// down at the y = 0 plane, with image axes aligned to world x and z.
CameraModel default_studio_camera();
PlaneSpec default_studio_plane();

struct ProjectionResult {
  PointSet2 points;  // normalized planar target shape
  ShapeTransform transform;
};

// The full sketch-to-target pipeline: trace each sample to 3D (by depth when
// present, to the plane otherwise), align the plane to y = 0, drop the
// off-plane component, and normalize. Needs at least 3 points.
ProjectionResult project_sketch(const CameraModel& camera, std::span<const SketchPoint> sketch,
                                const SurfacePlane& plane, const State3& hint_x);

}  // namespace cyclemorph
