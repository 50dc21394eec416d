#include "cyclemorph/trainer.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cyclemorph/detail/tape_coupling.hpp"
#include "cyclemorph/rng.hpp"

namespace cyclemorph {
namespace {

// Directed Hausdorff term max_{a in A} min_{b in B} |a - b|.
double directed_hausdorff(const PointSet2& a, const PointSet2& b) {
  double worst = 0.0;
  for (const Vec2& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& q : b) {
      const double dx = p.x - q.x;
      const double dz = p.z - q.z;
      const double d = std::sqrt(dx * dx + dz * dz);
      if (d < best) best = d;
    }
    if (best > worst) worst = best;
  }
  return worst;
}

void require_point_set(const PointSet2& s, const char* what) {
  if (s.empty()) throw DomainError(std::string(what) + ": empty point set");
  if (!all_finite(s)) throw DomainError(std::string(what) + ": non-finite point");
}

}  // namespace

double hausdorff(const PointSet2& a, const PointSet2& b) {
  require_point_set(a, "hausdorff");
  require_point_set(b, "hausdorff");
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

PointSet2 mapped_cycle(const DiffeoParams& params, const BaseParams& base, int k) {
  PointSet2 cycle = sample_base_cycle(k, base);
  for (Vec2& p : cycle) p = inn_forward(p, params);
  return cycle;
}

double identity_regularizer(const DiffeoParams& params, std::span<const Vec2> probes) {
  if (probes.empty()) return 0.0;
  double acc = 0.0;
  for (const Vec2& p : probes) {
    const Vec2 d = p - inn_inverse(p, params);
    acc += dot(d, d);
  }
  return acc / static_cast<double>(probes.size());
}

void AdamConfig::validate() const {
  const bool ok = std::isfinite(learning_rate) && learning_rate > 0.0 && std::isfinite(beta1) &&
                  beta1 >= 0.0 && beta1 < 1.0 && std::isfinite(beta2) && beta2 >= 0.0 &&
                  beta2 < 1.0 && std::isfinite(epsilon) && epsilon > 0.0;
  if (!ok) throw DomainError("AdamConfig: learning_rate/epsilon > 0 and betas in [0, 1) required");
}

AdamState AdamState::zeros(std::size_t n) {
  AdamState state;
  state.m.assign(n, 0.0);
  state.v.assign(n, 0.0);
  return state;
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const AdamConfig& config) {
  config.validate();
  if (params.size() != grad.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw DomainError("adam_step: parameter, gradient and state lengths must match");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

void TrainConfig::validate() const {
  if (cycle_samples < 3) throw DomainError("TrainConfig: cycle_samples must be >= 3");
  if (reg_samples < 1) throw DomainError("TrainConfig: reg_samples must be >= 1");
  if (!std::isfinite(reg_weight) || reg_weight < 0.0) {
    throw DomainError("TrainConfig: reg_weight must be finite and >= 0");
  }
  if (epochs < 1) throw DomainError("TrainConfig: epochs must be >= 1");
  if (reg_region) {
    const Box2& r = *reg_region;
    const bool ok = std::isfinite(r.lo.x) && std::isfinite(r.lo.z) && std::isfinite(r.hi.x) &&
                    std::isfinite(r.hi.z) && r.lo.x <= r.hi.x && r.lo.z <= r.hi.z;
    if (!ok) throw DomainError("TrainConfig: reg_region must be a finite box with lo <= hi");
  }
  adam.validate();
}

TrainingAbort::TrainingAbort(const std::string& message, int epoch,
                             std::vector<double> last_finite_params)
    : NumericalError("training aborted at epoch " + std::to_string(epoch) + ": " + message),
      epoch_(epoch),
      last_finite_params_(std::move(last_finite_params)) {}

LossVars record_total_loss(Tape& tape, const DiffeoParams& params, const PointSet2& target,
                           const PointSet2& base_cycle, std::span<const Vec2> probes,
                           double reg_weight) {
  require_point_set(target, "record_total_loss(target)");
  require_point_set(base_cycle, "record_total_loss(base_cycle)");

  // Forward batch: push every cycle sample through the map at once.
  std::vector<double> lane(base_cycle.size());
  for (std::size_t i = 0; i < base_cycle.size(); ++i) lane[i] = base_cycle[i].x;
  const Var cycle_x = tape.constant(lane);
  for (std::size_t i = 0; i < base_cycle.size(); ++i) lane[i] = base_cycle[i].z;
  const Var cycle_z = tape.constant(lane);
  const auto [mapped_x, mapped_z] = detail::record_inn_forward(tape, params, cycle_x, cycle_z);
  const Var h = tape.hausdorff_to_fixed(mapped_x, mapped_z, target);

  // Inverse batch: how far the inverse map strays from identity on the probes.
  Var reg;
  if (!probes.empty()) {
    lane.resize(probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) lane[i] = probes[i].x;
    const Var probe_x = tape.constant(lane);
    for (std::size_t i = 0; i < probes.size(); ++i) lane[i] = probes[i].z;
    const Var probe_z = tape.constant(lane);
    const auto [inv_x, inv_z] = detail::record_inn_inverse(tape, params, probe_x, probe_z);
    const Var dev = tape.add(tape.squared_norm(tape.sub(probe_x, inv_x)),
                             tape.squared_norm(tape.sub(probe_z, inv_z)));
    reg = tape.scale(dev, 1.0 / static_cast<double>(probes.size()));
  } else {
    reg = tape.constant1(0.0);
  }

  const Var total = tape.add(h, tape.scale(reg, reg_weight));
  return {total, h, reg};
}

double total_loss(const DiffeoParams& params, const PointSet2& target, const BaseParams& base,
                  int cycle_samples, std::span<const Vec2> probes, double reg_weight) {
  const double h = hausdorff(mapped_cycle(params, base, cycle_samples), target);
  return h + reg_weight * identity_regularizer(params, probes);
}

TrainReport train(const PointSet2& target, const BaseParams& base, const TrainConfig& config,
                  const std::optional<DiffeoParams>& init, const ProgressFn& progress) {
  config.validate();
  base.validate();
  if (target.size() < 3) throw DomainError("train: target needs at least 3 points");
  if (!all_finite(target)) throw DomainError("train: non-finite target point");

  DiffeoParams params = [&] {
    if (init) {
      init->validate();
      return *init;
    }
    Rng init_stream = named_stream(config.seed, "init");
    return DiffeoParams::identity_initialized(kDefaultBlockCount, SubnetSpec{}, kDefaultScaleClamp,
                                              init_stream);
  }();

  const PointSet2 base_cycle = sample_base_cycle(config.cycle_samples, base);
  const Box2 region = config.reg_region.value_or(inflate(bounding_box(target), 1.5));
  Rng reg_stream = named_stream(config.seed, "reg");

  AdamState adam = AdamState::zeros(params.parameter_count());
  Tape tape;
  std::vector<double> grad(params.parameter_count());
  std::vector<Vec2> probes(static_cast<std::size_t>(config.reg_samples));
  std::vector<double> last_finite(params.flat().begin(), params.flat().end());
  std::vector<double> best(last_finite);

  TrainReport report;
  report.history.reserve(static_cast<std::size_t>(config.epochs));
  report.best_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (Vec2& p : probes) {
      p.x = reg_stream.uniform(region.lo.x, region.hi.x);
      p.z = reg_stream.uniform(region.lo.z, region.hi.z);
    }

    EpochLoss loss;
    try {
      tape.reset(params.flat());
      const LossVars vars =
          record_total_loss(tape, params, target, base_cycle, probes, config.reg_weight);
      loss.total = tape.value(vars.total);
      loss.hausdorff = tape.value(vars.hausdorff);
      loss.regularizer = tape.value(vars.regularizer);
      tape.backward(vars.total, grad);
    } catch (const NumericalError& e) {
      throw TrainingAbort(e.what(), epoch, std::move(last_finite));
    }

    last_finite.assign(params.flat().begin(), params.flat().end());
    report.history.push_back(loss);
    if (loss.total < report.best_loss) {
      report.best_loss = loss.total;
      report.best_epoch = epoch;
      best.assign(params.flat().begin(), params.flat().end());
    }
    if (progress) progress(epoch, loss);

    adam_step(params.flat(), grad, adam, config.adam);
  }

  params.assign_flat(best);
  report.params = std::move(params);
  return report;
}

}  // namespace cyclemorph
