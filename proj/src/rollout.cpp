#include "cyclemorph/rollout.hpp"

#include <cmath>
#include <limits>

#include "cyclemorph/trainer.hpp"

namespace cyclemorph {

void IntegratorConfig::validate() const {
  if (!std::isfinite(step) || step <= 0.0) {
    throw DomainError("IntegratorConfig: step must be finite and > 0");
  }
  if (!std::isfinite(duration) || duration < 0.0) {
    throw DomainError("IntegratorConfig: duration must be finite and >= 0");
  }
  if (duration / step > 5e8) {
    throw DomainError("IntegratorConfig: more than 5e8 steps requested");
  }
}

Velocity3 learned_dynamics(const State3& x, const DiffeoParams& params, const BaseParams& base) {
  if (!is_finite(x)) throw DomainError("learned_dynamics: non-finite state");
  const Vec2 u = inn_inverse({x.x, x.z}, params);
  const Velocity3 g = base_dynamics_cartesian({u.x, x.y, u.z}, base);
  const PlanarJacobian j = inn_jacobian(u, params);
  return {j.dx_dx * g.dx + j.dx_dz * g.dz, g.dy, j.dz_dx * g.dx + j.dz_dz * g.dz};
}

Trajectory integrate(const State3& x0, const DiffeoParams& params, const BaseParams& base,
                     const IntegratorConfig& config) {
  return integrate_field(
      x0, [&](const State3& s) { return learned_dynamics(s, params, base); }, config);
}

Trajectory integrate_base(const State3& y0, const BaseParams& base,
                          const IntegratorConfig& config) {
  return integrate_field(
      y0, [&](const State3& s) { return base_dynamics_cartesian(s, base); }, config);
}

double distance_to_cycle(const State3& x, const PointSet2& cycle) {
  if (!is_finite(x)) throw DomainError("distance_to_cycle: non-finite state");
  if (cycle.empty()) throw DomainError("distance_to_cycle: empty cycle");
  double best = std::numeric_limits<double>::infinity();
  for (const Vec2& c : cycle) {
    const double dx = x.x - c.x;
    const double dz = x.z - c.z;
    const double d2 = dx * dx + x.y * x.y + dz * dz;
    if (d2 < best) best = d2;
  }
  return std::sqrt(best);
}

PointSet2 contact_points(const Trajectory& traj, double threshold) {
  if (!(threshold > 0.0)) throw DomainError("contact_points: threshold must be > 0");
  PointSet2 points;
  for (const State3& s : traj.states) {
    if (std::abs(s.y) < threshold) points.push_back({s.x, s.z});
  }
  return points;
}

TrackingReport evaluate_tracking(const Trajectory& traj, const PointSet2& target,
                                 const PointSet2& eval_cycle) {
  if (traj.states.empty()) throw DomainError("evaluate_tracking: empty trajectory");
  if (target.empty()) throw DomainError("evaluate_tracking: empty target");
  if (eval_cycle.empty()) throw DomainError("evaluate_tracking: empty evaluation cycle");

  TrackingReport report;
  const PointSet2 contacts = contact_points(traj);
  report.contact_fraction =
      static_cast<double>(contacts.size()) / static_cast<double>(traj.states.size());
  if (!contacts.empty()) report.hausdorff = hausdorff(contacts, target);

  // Settle scan on a subsampled grid; the final state is always probed so a
  // trajectory that drifts away right at the end cannot count as settled.
  const std::size_t n = traj.states.size();
  const std::size_t stride = n > 2000 ? n / 2000 : 1;
  std::optional<double> settle;
  for (std::size_t i = n; i-- > 0;) {
    if (i % stride != 0 && i != n - 1) continue;
    if (distance_to_cycle(traj.states[i], eval_cycle) < kSettleThreshold) {
      settle = traj.times[i];
    } else {
      break;
    }
  }
  report.settle_time = settle;
  return report;
}

std::vector<FieldSample> vector_field_grid(const DiffeoParams& params, const BaseParams& base,
                                           const Box2& region, int resolution) {
  if (resolution < 1) throw DomainError("vector_field_grid: resolution must be >= 1");
  const bool finite_box = std::isfinite(region.lo.x) && std::isfinite(region.lo.z) &&
                          std::isfinite(region.hi.x) && std::isfinite(region.hi.z);
  if (!finite_box || region.lo.x > region.hi.x || region.lo.z > region.hi.z) {
    throw DomainError("vector_field_grid: region must be a finite box with lo <= hi");
  }

  auto coord = [resolution](double lo, double hi, int i) {
    if (resolution == 1) return lo;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
  };

  std::vector<FieldSample> samples;
  samples.reserve(static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution));
  for (int iz = 0; iz < resolution; ++iz) {
    const double z = coord(region.lo.z, region.hi.z, iz);
    for (int ix = 0; ix < resolution; ++ix) {
      const double x = coord(region.lo.x, region.hi.x, ix);
      const Velocity3 v = learned_dynamics({x, 0.0, z}, params, base);
      samples.push_back({x, z, v.dx, v.dz});
    }
  }
  return samples;
}

Box2 default_field_region(const DiffeoParams& params, const BaseParams& base) {
  return inflate(bounding_box(mapped_cycle(params, base, 256)), 1.5);
}

}  // namespace cyclemorph
