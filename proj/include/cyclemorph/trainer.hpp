#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cyclemorph/base_system.hpp"
#include "cyclemorph/coupling_map.hpp"
#include "cyclemorph/errors.hpp"
#include "cyclemorph/geometry.hpp"
#include "cyclemorph/tape.hpp"

namespace cyclemorph {

// Symmetric Hausdorff distance between two finite point sets,
//   H(A, B) = max( max_{a} min_{b} |a-b|, max_{b} min_{a} |a-b| ).
// Both sets must be non-empty and finite.
double hausdorff(const PointSet2& a, const PointSet2& b);

// k equally spaced limit-cycle samples pushed through the planar map: the
// shape the trained system actually traces.
PointSet2 mapped_cycle(const DiffeoParams& params, const BaseParams& base, int k);

// Mean squared deviation of the inverse map from the identity over the given
// probe points: (1/m) * sum |p - inn_inverse(p)|^2. Zero for the identity
// map; keeps the warp from drifting where nothing constrains it.
double identity_regularizer(const DiffeoParams& params, std::span<const Vec2> probes);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// First/second-moment accumulators; step counts completed updates.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  static AdamState zeros(std::size_t n);
};

// One bias-corrected update, in place. grad and params must match the state's
// length.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  int cycle_samples = 256;  // limit-cycle samples per loss evaluation
  int reg_samples = 128;    // probe points redrawn each epoch
  double reg_weight = 1e-3;
  // Region the probes are drawn from; defaults to the target's bounding box
  // inflated by 50%.
  std::optional<Box2> reg_region;
  int epochs = 3000;
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLoss {
  double total = 0.0;
  double hausdorff = 0.0;
  double regularizer = 0.0;  // unweighted; total = hausdorff + reg_weight * regularizer
};

struct TrainReport {
  DiffeoParams params;  // parameters of the best epoch, not the last one
  std::vector<EpochLoss> history;
  int best_epoch = -1;
  double best_loss = 0.0;
};

// Raised when a loss or gradient turns non-finite mid-run. Carries the epoch
// index and the most recent parameters whose loss evaluated finite.
class TrainingAbort : public NumericalError {
 public:
  TrainingAbort(const std::string& message, int epoch, std::vector<double> last_finite_params);

  int epoch() const { return epoch_; }
  const std::vector<double>& last_finite_params() const { return last_finite_params_; }

 private:
  int epoch_;
  std::vector<double> last_finite_params_;
};

// Records the full training loss on the tape:
//   total = H(F(base_cycle), target) + reg_weight * regularizer(probes).
// base_cycle enters as the forward batch, probes as the inverse batch. The
// tape must already be reset with params.flat().
struct LossVars {
  Var total;
  Var hausdorff;
  Var regularizer;
};
LossVars record_total_loss(Tape& tape, const DiffeoParams& params, const PointSet2& target,
                           const PointSet2& base_cycle, std::span<const Vec2> probes,
                           double reg_weight);

// The same loss on the plain evaluation path (no tape); used for spot checks
// and evaluation.
double total_loss(const DiffeoParams& params, const PointSet2& target, const BaseParams& base,
                  int cycle_samples, std::span<const Vec2> probes, double reg_weight);

using ProgressFn = std::function<void(int epoch, const EpochLoss&)>;

// Full-batch gradient descent on the combined loss. Starts from `init` when
// given (architecture and values), otherwise from an identity-initialized
// default architecture drawn from the "init" stream of config.seed. Probe
// points are redrawn each epoch from the "reg" stream. Runs are bit-identical
// for equal inputs and seed.
TrainReport train(const PointSet2& target, const BaseParams& base, const TrainConfig& config,
                  const std::optional<DiffeoParams>& init = std::nullopt,
                  const ProgressFn& progress = {});

}  // namespace cyclemorph
