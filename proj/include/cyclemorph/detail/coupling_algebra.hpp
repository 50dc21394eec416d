#pragma once

#include <span>
#include <tuple>
#include <utility>

#include "cyclemorph/coupling_map.hpp"

namespace cyclemorph::detail {

// The coupling math is written once, generically, and instantiated with
// three contexts: plain doubles (evaluation), dual numbers carrying two
// tangents (analytic Jacobians), and the gradient tape (training). Whatever
// backend runs, it executes this exact sequence of primitives, so the map
// that is trained, the map that is rolled out, and the Jacobian used for the
// velocity pushforward can never disagree about what the network computes.
//
// A context provides:
//   using Value = ...;                       // handle to a small vector
//   Value dense(const LayerView&, Value);    // W x + b from the bound params
//   Value activation(const SubnetSpec&, Value);
//   Value tanh(Value);  Value exp(Value);
//   Value scale(Value, double);  Value negate(Value);
//   Value add(Value, Value);  Value sub(Value, Value);  Value mul(Value, Value);
//   void check_block_output(int block, Value x, Value z);  // may be a no-op

template <class Ctx>
using value_t = typename Ctx::Value;

template <class Ctx>
value_t<Ctx> subnet_apply(Ctx& ctx, std::span<const LayerView> layers, const SubnetSpec& spec,
                          value_t<Ctx> x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = ctx.dense(layers[i], x);
    if (i + 1 < layers.size()) x = ctx.activation(spec, x);
  }
  return x;
}

// s(t) = c * tanh(t / c): the clamped log-scale keeping each stretch factor
// within [exp(-c), exp(c)].
template <class Ctx>
value_t<Ctx> clamped_log_scale(Ctx& ctx, double clamp, value_t<Ctx> t) {
  return ctx.scale(ctx.tanh(ctx.scale(t, 1.0 / clamp)), clamp);
}

// Subnet layer stacks of one block, in canonical order.
struct BlockRef {
  std::span<const LayerView> p1, p2, q1, q2;
  const SubnetSpec* spec = nullptr;
  double scale_clamp = kDefaultScaleClamp;
};

inline BlockRef block_ref(const DiffeoParams& params, int block) {
  return {params.subnet_layers(block, 0), params.subnet_layers(block, 1),
          params.subnet_layers(block, 2), params.subnet_layers(block, 3), &params.subnet(),
          params.scale_clamp()};
}

template <class Ctx>
std::pair<value_t<Ctx>, value_t<Ctx>> coupling_forward_alg(Ctx& ctx, const BlockRef& b,
                                                           value_t<Ctx> u1, value_t<Ctx> u2) {
  auto s2 = clamped_log_scale(ctx, b.scale_clamp, subnet_apply(ctx, b.p2, *b.spec, u2));
  auto v1 = ctx.add(ctx.mul(u1, ctx.exp(s2)), subnet_apply(ctx, b.q2, *b.spec, u2));
  auto s1 = clamped_log_scale(ctx, b.scale_clamp, subnet_apply(ctx, b.p1, *b.spec, v1));
  auto v2 = ctx.add(ctx.mul(u2, ctx.exp(s1)), subnet_apply(ctx, b.q1, *b.spec, v1));
  return {v1, v2};
}

template <class Ctx>
std::pair<value_t<Ctx>, value_t<Ctx>> coupling_inverse_alg(Ctx& ctx, const BlockRef& b,
                                                           value_t<Ctx> v1, value_t<Ctx> v2) {
  auto s1 = clamped_log_scale(ctx, b.scale_clamp, subnet_apply(ctx, b.p1, *b.spec, v1));
  auto u2 = ctx.mul(ctx.sub(v2, subnet_apply(ctx, b.q1, *b.spec, v1)), ctx.exp(ctx.negate(s1)));
  auto s2 = clamped_log_scale(ctx, b.scale_clamp, subnet_apply(ctx, b.p2, *b.spec, u2));
  auto u1 = ctx.mul(ctx.sub(v1, subnet_apply(ctx, b.q2, *b.spec, u2)), ctx.exp(ctx.negate(s2)));
  return {u1, u2};
}

// Full stack. Odd-indexed blocks act on swapped lanes (swap in, couple, swap
// back) so both coordinates are transformed while zero parameters still give
// the identity for any block count.
template <class Ctx>
std::pair<value_t<Ctx>, value_t<Ctx>> inn_forward_alg(Ctx& ctx, const DiffeoParams& params,
                                                      value_t<Ctx> x, value_t<Ctx> z) {
  for (int i = 0; i < params.block_count(); ++i) {
    const bool alternate = (i % 2 == 1);
    if (alternate) std::swap(x, z);
    std::tie(x, z) = coupling_forward_alg(ctx, block_ref(params, i), x, z);
    if (alternate) std::swap(x, z);
    ctx.check_block_output(i, x, z);
  }
  return {x, z};
}

template <class Ctx>
std::pair<value_t<Ctx>, value_t<Ctx>> inn_inverse_alg(Ctx& ctx, const DiffeoParams& params,
                                                      value_t<Ctx> x, value_t<Ctx> z) {
  for (int i = params.block_count() - 1; i >= 0; --i) {
    const bool alternate = (i % 2 == 1);
    if (alternate) std::swap(x, z);
    std::tie(x, z) = coupling_inverse_alg(ctx, block_ref(params, i), x, z);
    if (alternate) std::swap(x, z);
    ctx.check_block_output(i, x, z);
  }
  return {x, z};
}

}  // namespace cyclemorph::detail
