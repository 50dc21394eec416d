#pragma once

#include "cyclemorph/geometry.hpp"

namespace cyclemorph {

// Parameters of the canonical 3D system whose limit cycle is the circle of
// the given radius in the y=0 plane:
//
//   dr = mu * (1 - r^2/radius^2) * r      (planar radial contraction)
//   dw = 1                                (unit angular speed)
//   dy = -alpha_y * y                     (exponential decay onto the plane)
//
// mu sets how fast orbits attract to the circle, alpha_y how fast they fall
// onto the plane. All three must be strictly positive and finite; violations
// are rejected at construction.
struct BaseParams {
  double mu = 1.0;
  double alpha_y = 1.0;
  double radius = 1.0;

  BaseParams() = default;
  BaseParams(double mu_in, double alpha_y_in, double radius_in);

  void validate() const;
};

struct PolarRates {
  double dr = 0.0;
  double domega = 0.0;
  double dy = 0.0;
};

// Cylindrical-coordinate form. r may be any non-negative value (r = 0 is the
// unstable equilibrium on the axis); omega only feeds through to domega = 1.
PolarRates base_dynamics_polar(double r, double omega, double y, const BaseParams& params);

// Cartesian form of the same field, defined on all of R^3 (no coordinate
// singularity at the axis):
//   dx = -z + mu (1 - (x^2+z^2)/radius^2) x
//   dy = -alpha_y y
//   dz =  x + mu (1 - (x^2+z^2)/radius^2) z
// Rotation runs counterclockwise in the (x, z) plane.
Velocity3 base_dynamics_cartesian(const State3& state, const BaseParams& params);

// k points equally spaced on the limit cycle, starting at angle 0:
// (radius*cos(2*pi*i/k), radius*sin(2*pi*i/k)) for i = 0..k-1. Requires k >= 3.
PointSet2 sample_base_cycle(int k, const BaseParams& params);

}  // namespace cyclemorph
