#include "cyclemorph/base_system.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cyclemorph/errors.hpp"

namespace cyclemorph {

BaseParams::BaseParams(double mu_in, double alpha_y_in, double radius_in)
    : mu(mu_in), alpha_y(alpha_y_in), radius(radius_in) {
  validate();
}

void BaseParams::validate() const {
  auto positive_finite = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive_finite(mu) || !positive_finite(alpha_y) || !positive_finite(radius)) {
    throw DomainError("BaseParams: mu, alpha_y and radius must be finite and > 0 (got mu=" +
                      std::to_string(mu) + ", alpha_y=" + std::to_string(alpha_y) +
                      ", radius=" + std::to_string(radius) + ")");
  }
}

PolarRates base_dynamics_polar(double r, double omega, double y, const BaseParams& params) {
  params.validate();
  if (!std::isfinite(r) || !std::isfinite(omega) || !std::isfinite(y)) {
    throw DomainError("base_dynamics_polar: non-finite state");
  }
  if (r < 0.0) throw DomainError("base_dynamics_polar: r must be non-negative");
  PolarRates rates;
  rates.dr = params.mu * (1.0 - (r * r) / (params.radius * params.radius)) * r;
  rates.domega = 1.0;
  rates.dy = -params.alpha_y * y;
  return rates;
}

Velocity3 base_dynamics_cartesian(const State3& state, const BaseParams& params) {
  params.validate();
  if (!is_finite(state)) throw DomainError("base_dynamics_cartesian: non-finite state");
  const double r2 = state.x * state.x + state.z * state.z;
  const double shrink = params.mu * (1.0 - r2 / (params.radius * params.radius));
  return {-state.z + shrink * state.x, -params.alpha_y * state.y, state.x + shrink * state.z};
}

PointSet2 sample_base_cycle(int k, const BaseParams& params) {
  params.validate();
  if (k < 3) throw DomainError("sample_base_cycle: need at least 3 samples");
  PointSet2 points;
  points.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    points.push_back({params.radius * std::cos(theta), params.radius * std::sin(theta)});
  }
  return points;
}

}  // namespace cyclemorph
