#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cyclemorph/base_system.hpp"
#include "cyclemorph/coupling_map.hpp"
#include "cyclemorph/errors.hpp"
#include "cyclemorph/geometry.hpp"

namespace cyclemorph {

struct Trajectory {
  std::vector<double> times;
  std::vector<State3> states;
};

enum class IntegrationMethod {
  kEuler,
  kRk4,
};

struct IntegratorConfig {
  IntegrationMethod method = IntegrationMethod::kRk4;
  double step = 1e-3;
  double duration = 50.0;

  void validate() const;
};

// |y| below this counts as touching the surface plane.
inline constexpr double kContactThreshold = 1e-4;

// A trajectory has settled once its distance to the cycle stays below this.
inline constexpr double kSettleThreshold = 1e-2;

// Velocity of the learned system at x: the base field evaluated at the
// preimage u = F^{-1}(x), pushed forward by the map's Jacobian at u. Because
// F is a diffeomorphism, this transport preserves the base system's orbits
// and their stability; the limit cycle becomes F(circle).
Velocity3 learned_dynamics(const State3& x, const DiffeoParams& params, const BaseParams& base);

// Fixed-step explicit integration of an arbitrary velocity field
// f(const State3&) -> Velocity3. Produces floor(duration/step) steps plus the
// initial state; times are i*step. Throws NumericalError if the state leaves
// the finite range.
template <class Field>
Trajectory integrate_field(const State3& x0, Field&& field, const IntegratorConfig& config) {
  config.validate();
  if (!is_finite(x0)) throw DomainError("integrate_field: non-finite initial state");

  // +1e-9 relative slack so duration = n*step yields exactly n steps despite
  // the division rounding either way.
  const auto steps = static_cast<std::size_t>(config.duration / config.step * (1.0 + 1e-9));
  const double h = config.step;

  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  State3 s = x0;
  traj.times.push_back(0.0);
  traj.states.push_back(s);

  auto axpy = [](const State3& a, double c, const Velocity3& v) -> State3 {
    return {a.x + c * v.dx, a.y + c * v.dy, a.z + c * v.dz};
  };

  for (std::size_t i = 1; i <= steps; ++i) {
    if (config.method == IntegrationMethod::kEuler) {
      s = axpy(s, h, field(s));
    } else {
      const Velocity3 k1 = field(s);
      const Velocity3 k2 = field(axpy(s, 0.5 * h, k1));
      const Velocity3 k3 = field(axpy(s, 0.5 * h, k2));
      const Velocity3 k4 = field(axpy(s, h, k3));
      s = {s.x + h / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
           s.y + h / 6.0 * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy),
           s.z + h / 6.0 * (k1.dz + 2.0 * k2.dz + 2.0 * k3.dz + k4.dz)};
    }
    if (!is_finite(s)) {
      throw NumericalError("integrate_field: state diverged at step " + std::to_string(i));
    }
    traj.times.push_back(static_cast<double>(i) * h);
    traj.states.push_back(s);
  }
  return traj;
}

// Rollout of the learned system.
Trajectory integrate(const State3& x0, const DiffeoParams& params, const BaseParams& base,
                     const IntegratorConfig& config);

// Rollout of the base system itself (used by conjugacy checks).
Trajectory integrate_base(const State3& y0, const BaseParams& base, const IntegratorConfig& config);

// 3D distance from x to the nearest cycle sample (the cycle lies in the y=0
// plane, so the sample (cx, cz) is the space point (cx, 0, cz)).
double distance_to_cycle(const State3& x, const PointSet2& cycle);

// Planar positions of the trajectory states whose |y| is below the threshold.
PointSet2 contact_points(const Trajectory& traj, double threshold = kContactThreshold);

struct TrackingReport {
  // Hausdorff distance between the plane contacts and the target; empty when
  // the trajectory never touched the plane (no convergence, as opposed to a
  // large but measured distance).
  std::optional<double> hausdorff;
  double contact_fraction = 0.0;
  // Earliest sampled time from which the distance to eval_cycle stays below
  // kSettleThreshold; empty if it never does.
  std::optional<double> settle_time;

  bool converged() const { return hausdorff.has_value() && settle_time.has_value(); }
};

// Scores how well a rollout reproduces the target curve. eval_cycle is the
// dense reference for the settle scan (the learned cycle, mapped at higher
// resolution than the target sampling). The settle scan subsamples long
// trajectories to roughly 2000 probe states.
TrackingReport evaluate_tracking(const Trajectory& traj, const PointSet2& target,
                                 const PointSet2& eval_cycle);

struct FieldSample {
  double x = 0.0;
  double z = 0.0;
  double vx = 0.0;
  double vz = 0.0;
};

inline constexpr int kDefaultFieldResolution = 20;

// Region used when the caller gives none: the learned cycle's bounding box
// grown by half, the same rule the training probes default to. Shared by the
// CLI and the HTTP service so both show the same picture.
Box2 default_field_region(const DiffeoParams& params, const BaseParams& base);

// Planar slice (y = 0) of the learned field on a resolution^2 grid over the
// region, z-major (x varies fastest).
std::vector<FieldSample> vector_field_grid(const DiffeoParams& params, const BaseParams& base,
                                           const Box2& region, int resolution);

}  // namespace cyclemorph
