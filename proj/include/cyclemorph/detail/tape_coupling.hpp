#pragma once

#include <utility>

#include "cyclemorph/detail/coupling_algebra.hpp"
#include "cyclemorph/tape.hpp"

namespace cyclemorph::detail {

// Tape backend of the coupling algebra. A Value is a recorded node holding a
// whole batch of lane values, so one recorded pass through the map covers
// every sample point at once. The tape must be reset with the same flat
// vector the DiffeoParams argument wraps, otherwise the recorded dense nodes
// would read one set of weights while the layout describes another.
struct TapeCouplingCtx {
  using Value = Var;
  Tape* tape = nullptr;

  Var dense(const LayerView& l, Var x) { return tape->dense(l, x); }
  Var activation(const SubnetSpec& spec, Var x) {
    return spec.activation == Activation::kTanh ? tape->tanh(x)
                                                : tape->leaky_relu(x, spec.leaky_slope);
  }
  Var tanh(Var x) { return tape->tanh(x); }
  Var exp(Var x) { return tape->exp(x); }
  Var scale(Var x, double c) { return tape->scale(x, c); }
  Var negate(Var x) { return tape->negate(x); }
  Var add(Var a, Var b) { return tape->add(a, b); }
  Var sub(Var a, Var b) { return tape->sub(a, b); }
  Var mul(Var a, Var b) { return tape->mul(a, b); }

  // Non-finite values surface at the tape's own dense/exp/reduction checks.
  void check_block_output(int, Var, Var) {}
};

inline std::pair<Var, Var> record_inn_forward(Tape& tape, const DiffeoParams& params, Var x_lane,
                                              Var z_lane) {
  TapeCouplingCtx ctx{&tape};
  return inn_forward_alg(ctx, params, x_lane, z_lane);
}

inline std::pair<Var, Var> record_inn_inverse(Tape& tape, const DiffeoParams& params, Var x_lane,
                                              Var z_lane) {
  TapeCouplingCtx ctx{&tape};
  return inn_inverse_alg(ctx, params, x_lane, z_lane);
}

}  // namespace cyclemorph::detail
