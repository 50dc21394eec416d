#include "cyclemorph/coupling_map.hpp"

#include <cmath>
#include <cstdint>
#include <string>

#include "cyclemorph/detail/coupling_algebra.hpp"
#include "cyclemorph/detail/kernels.hpp"
#include "cyclemorph/errors.hpp"

namespace cyclemorph {
namespace {

// Plain-double backend of the coupling algebra. Values live in a flat arena
// (offsets, not pointers: the arena may grow mid-expression). A thread_local
// instance is reused across calls so point evaluation never allocates once
// the arena has warmed up.
class EvalCtx {
 public:
  struct Value {
    std::uint32_t off = 0;
    std::uint32_t len = 0;
  };

  void bind(std::span<const double> params) {
    params_ = params;
    arena_.clear();
  }

  Value scalar(double v) {
    Value out = alloc(1);
    arena_[out.off] = v;
    return out;
  }

  double scalar_value(Value v) const { return arena_[v.off]; }

  Value dense(const LayerView& l, Value x) {
    Value out = alloc(static_cast<std::uint32_t>(l.rows));
    const double* w = params_.data() + l.w_offset;
    const double* b = params_.data() + l.b_offset;
    const double* in = arena_.data() + x.off;
    double* o = arena_.data() + out.off;
    for (int r = 0; r < l.rows; ++r) {
      o[r] = b[r] + detail::dot_n(w + static_cast<std::size_t>(r) * static_cast<std::size_t>(l.cols),
                                  in, static_cast<std::size_t>(l.cols));
    }
    return out;
  }

  Value activation(const SubnetSpec& spec, Value x) {
    if (spec.activation == Activation::kTanh) return tanh(x);
    const double slope = spec.leaky_slope;
    return map(x, [slope](double v) { return v > 0.0 ? v : slope * v; });
  }

  Value tanh(Value x) {
    return map(x, [](double v) { return std::tanh(v); });
  }
  Value exp(Value x) {
    return map(x, [](double v) { return std::exp(v); });
  }
  Value scale(Value x, double c) {
    return map(x, [c](double v) { return c * v; });
  }
  Value negate(Value x) { return scale(x, -1.0); }

  Value add(Value a, Value b) { return zip(a, b, [](double p, double q) { return p + q; }); }
  Value sub(Value a, Value b) { return zip(a, b, [](double p, double q) { return p - q; }); }
  Value mul(Value a, Value b) { return zip(a, b, [](double p, double q) { return p * q; }); }

  void check_block_output(int block, Value x, Value z) const {
    if (!std::isfinite(arena_[x.off]) || !std::isfinite(arena_[z.off])) {
      throw NumericalError("coupling block " + std::to_string(block) +
                           " produced a non-finite output");
    }
  }

 private:
  Value alloc(std::uint32_t n) {
    const auto off = static_cast<std::uint32_t>(arena_.size());
    arena_.resize(arena_.size() + n);
    return {off, n};
  }

  template <class F>
  Value map(Value x, F&& f) {
    Value out = alloc(x.len);
    const double* in = arena_.data() + x.off;
    double* o = arena_.data() + out.off;
    for (std::uint32_t i = 0; i < x.len; ++i) o[i] = f(in[i]);
    return out;
  }

  template <class F>
  Value zip(Value a, Value b, F&& f) {
    Value out = alloc(a.len);
    const double* pa = arena_.data() + a.off;
    const double* pb = arena_.data() + b.off;
    double* o = arena_.data() + out.off;
    for (std::uint32_t i = 0; i < a.len; ++i) o[i] = f(pa[i], pb[i]);
    return out;
  }

  std::span<const double> params_;
  std::vector<double> arena_;
};

// Forward-mode backend carrying the value plus two directional derivatives,
// seeded with the unit tangents of x and z. Runs the identical primitive
// sequence as EvalCtx, so the Jacobian is the exact derivative of the map as
// computed, not of an independent re-derivation.
class DualCtx {
 public:
  struct Entry {
    double v = 0.0;
    double t1 = 0.0;
    double t2 = 0.0;
  };
  struct Value {
    std::uint32_t off = 0;
    std::uint32_t len = 0;
  };

  void bind(std::span<const double> params) {
    params_ = params;
    arena_.clear();
  }

  Value seed(double v, double t1, double t2) {
    Value out = alloc(1);
    arena_[out.off] = {v, t1, t2};
    return out;
  }

  Entry entry(Value v) const { return arena_[v.off]; }

  Value dense(const LayerView& l, Value x) {
    Value out = alloc(static_cast<std::uint32_t>(l.rows));
    const double* w = params_.data() + l.w_offset;
    const double* b = params_.data() + l.b_offset;
    const Entry* in = arena_.data() + x.off;
    Entry* o = arena_.data() + out.off;
    for (int r = 0; r < l.rows; ++r) {
      const double* wr = w + static_cast<std::size_t>(r) * static_cast<std::size_t>(l.cols);
      double sv = b[r], s1 = 0.0, s2 = 0.0;
      for (int c = 0; c < l.cols; ++c) {
        sv += wr[c] * in[c].v;
        s1 += wr[c] * in[c].t1;
        s2 += wr[c] * in[c].t2;
      }
      o[r] = {sv, s1, s2};
    }
    return out;
  }

  Value activation(const SubnetSpec& spec, Value x) {
    if (spec.activation == Activation::kTanh) return tanh(x);
    const double slope = spec.leaky_slope;
    // Derivative at exactly 0 takes the slope branch; the tape backward uses
    // the same convention, so the two engines agree pointwise.
    return map(x, [slope](Entry e) -> Entry {
      const double d = e.v > 0.0 ? 1.0 : slope;
      return {e.v > 0.0 ? e.v : slope * e.v, d * e.t1, d * e.t2};
    });
  }

  Value tanh(Value x) {
    return map(x, [](Entry e) -> Entry {
      const double y = std::tanh(e.v);
      const double d = 1.0 - y * y;
      return {y, d * e.t1, d * e.t2};
    });
  }

  Value exp(Value x) {
    return map(x, [](Entry e) -> Entry {
      const double y = std::exp(e.v);
      return {y, y * e.t1, y * e.t2};
    });
  }

  Value scale(Value x, double c) {
    return map(x, [c](Entry e) -> Entry { return {c * e.v, c * e.t1, c * e.t2}; });
  }
  Value negate(Value x) { return scale(x, -1.0); }

  Value add(Value a, Value b) {
    return zip(a, b, [](Entry p, Entry q) -> Entry { return {p.v + q.v, p.t1 + q.t1, p.t2 + q.t2}; });
  }
  Value sub(Value a, Value b) {
    return zip(a, b, [](Entry p, Entry q) -> Entry { return {p.v - q.v, p.t1 - q.t1, p.t2 - q.t2}; });
  }
  Value mul(Value a, Value b) {
    return zip(a, b, [](Entry p, Entry q) -> Entry {
      return {p.v * q.v, p.v * q.t1 + q.v * p.t1, p.v * q.t2 + q.v * p.t2};
    });
  }

  void check_block_output(int block, Value x, Value z) const {
    const Entry& ex = arena_[x.off];
    const Entry& ez = arena_[z.off];
    const bool ok = std::isfinite(ex.v) && std::isfinite(ex.t1) && std::isfinite(ex.t2) &&
                    std::isfinite(ez.v) && std::isfinite(ez.t1) && std::isfinite(ez.t2);
    if (!ok) {
      throw NumericalError("coupling block " + std::to_string(block) +
                           " produced a non-finite value or derivative");
    }
  }

 private:
  Value alloc(std::uint32_t n) {
    const auto off = static_cast<std::uint32_t>(arena_.size());
    arena_.resize(arena_.size() + n);
    return {off, n};
  }

  template <class F>
  Value map(Value x, F&& f) {
    Value out = alloc(x.len);
    const Entry* in = arena_.data() + x.off;
    Entry* o = arena_.data() + out.off;
    for (std::uint32_t i = 0; i < x.len; ++i) o[i] = f(in[i]);
    return out;
  }

  template <class F>
  Value zip(Value a, Value b, F&& f) {
    Value out = alloc(a.len);
    const Entry* pa = arena_.data() + a.off;
    const Entry* pb = arena_.data() + b.off;
    Entry* o = arena_.data() + out.off;
    for (std::uint32_t i = 0; i < a.len; ++i) o[i] = f(pa[i], pb[i]);
    return out;
  }

  std::span<const double> params_;
  std::vector<Entry> arena_;
};

void require_finite_input(Vec2 u, const char* op) {
  if (!std::isfinite(u.x) || !std::isfinite(u.z)) {
    throw DomainError(std::string(op) + ": non-finite input");
  }
}

void require_block_index(const DiffeoParams& params, int block, const char* op) {
  if (block < 0 || block >= params.block_count()) {
    throw DomainError(std::string(op) + ": block index " + std::to_string(block) +
                      " out of range [0, " + std::to_string(params.block_count()) + ")");
  }
}

}  // namespace

void SubnetSpec::validate() const {
  for (int h : hidden_layers) {
    if (h < 1) throw DomainError("SubnetSpec: hidden layer sizes must be >= 1");
  }
  if (!std::isfinite(leaky_slope) || leaky_slope < 0.0 || leaky_slope >= 1.0) {
    throw DomainError("SubnetSpec: leaky_slope must be finite and in [0, 1)");
  }
}

std::size_t SubnetSpec::parameter_count() const {
  std::size_t total = 0;
  int cols = 1;
  for (std::size_t l = 0; l <= hidden_layers.size(); ++l) {
    const int rows = l < hidden_layers.size() ? hidden_layers[l] : 1;
    total += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) +
             static_cast<std::size_t>(rows);
    cols = rows;
  }
  return total;
}

DiffeoParams::DiffeoParams(int block_count, SubnetSpec spec, double scale_clamp)
    : block_count_(block_count), spec_(std::move(spec)), scale_clamp_(scale_clamp) {
  if (block_count_ < 1) throw DomainError("DiffeoParams: need at least one coupling block");
  if (!std::isfinite(scale_clamp_) || scale_clamp_ <= 0.0) {
    throw DomainError("DiffeoParams: scale_clamp must be finite and > 0");
  }
  spec_.validate();
  layers_per_subnet_ = static_cast<int>(spec_.hidden_layers.size()) + 1;

  std::size_t cursor = 0;
  table_.reserve(static_cast<std::size_t>(block_count_) * 4 *
                 static_cast<std::size_t>(layers_per_subnet_));
  for (int b = 0; b < block_count_; ++b) {
    for (int s = 0; s < 4; ++s) {
      int cols = 1;
      for (int l = 0; l < layers_per_subnet_; ++l) {
        const int rows = l < layers_per_subnet_ - 1 ? spec_.hidden_layers[static_cast<std::size_t>(l)] : 1;
        LayerView view;
        view.w_offset = cursor;
        view.b_offset = cursor + static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
        view.rows = rows;
        view.cols = cols;
        table_.push_back(view);
        cursor = view.b_offset + static_cast<std::size_t>(rows);
        cols = rows;
      }
    }
  }
  flat_.assign(cursor, 0.0);
}

DiffeoParams DiffeoParams::identity_initialized(int block_count, SubnetSpec spec,
                                                double scale_clamp, Rng& stream) {
  DiffeoParams params(block_count, std::move(spec), scale_clamp);
  // Draw order is the canonical flat order (block, subnet, layer, row-major
  // weights) so the result depends only on the stream state, never on how
  // the layout is traversed internally.
  for (int b = 0; b < params.block_count_; ++b) {
    for (int s = 0; s < 4; ++s) {
      const auto layers = params.subnet_layers(b, s);
      for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        const LayerView& view = layers[l];
        const double bound = std::sqrt(6.0 / static_cast<double>(view.cols));
        double* w = params.flat_.data() + view.w_offset;
        const std::size_t n = static_cast<std::size_t>(view.rows) * static_cast<std::size_t>(view.cols);
        for (std::size_t i = 0; i < n; ++i) w[i] = stream.uniform(-bound, bound);
        // biases stay zero
      }
      // final layer stays zero: the freshly initialized map is the identity
    }
  }
  return params;
}

DiffeoParams DiffeoParams::random(int block_count, SubnetSpec spec, double scale_clamp,
                                  Rng& stream, double output_scale) {
  if (!std::isfinite(output_scale) || output_scale < 0.0) {
    throw DomainError("DiffeoParams::random: output_scale must be finite and >= 0");
  }
  DiffeoParams params = identity_initialized(block_count, std::move(spec), scale_clamp, stream);
  for (int b = 0; b < params.block_count_; ++b) {
    for (int s = 0; s < 4; ++s) {
      const auto layers = params.subnet_layers(b, s);
      const LayerView& last = layers.back();
      double* w = params.flat_.data() + last.w_offset;
      const std::size_t n = static_cast<std::size_t>(last.rows) * static_cast<std::size_t>(last.cols);
      for (std::size_t i = 0; i < n; ++i) w[i] = stream.uniform(-output_scale, output_scale);
      double* bias = params.flat_.data() + last.b_offset;
      for (int i = 0; i < last.rows; ++i) bias[i] = stream.uniform(-output_scale, output_scale);
    }
  }
  return params;
}

void DiffeoParams::assign_flat(std::span<const double> values) {
  if (values.size() != flat_.size()) {
    throw DomainError("DiffeoParams::assign_flat: expected " + std::to_string(flat_.size()) +
                      " values, got " + std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), flat_.begin());
}

void DiffeoParams::validate() const {
  for (std::size_t i = 0; i < flat_.size(); ++i) {
    if (!std::isfinite(flat_[i])) {
      throw DomainError("DiffeoParams: non-finite parameter at index " + std::to_string(i));
    }
  }
}

std::span<const LayerView> DiffeoParams::subnet_layers(int block, int subnet) const {
  const auto lps = static_cast<std::size_t>(layers_per_subnet_);
  const std::size_t base = (static_cast<std::size_t>(block) * 4 + static_cast<std::size_t>(subnet)) * lps;
  return {table_.data() + base, lps};
}

Vec2 coupling_forward(Vec2 u, const DiffeoParams& params, int block) {
  require_finite_input(u, "coupling_forward");
  require_block_index(params, block, "coupling_forward");
  thread_local EvalCtx ctx;
  ctx.bind(params.flat());
  auto [v1, v2] =
      detail::coupling_forward_alg(ctx, detail::block_ref(params, block), ctx.scalar(u.x), ctx.scalar(u.z));
  ctx.check_block_output(block, v1, v2);
  return {ctx.scalar_value(v1), ctx.scalar_value(v2)};
}

Vec2 coupling_inverse(Vec2 v, const DiffeoParams& params, int block) {
  require_finite_input(v, "coupling_inverse");
  require_block_index(params, block, "coupling_inverse");
  thread_local EvalCtx ctx;
  ctx.bind(params.flat());
  auto [u1, u2] =
      detail::coupling_inverse_alg(ctx, detail::block_ref(params, block), ctx.scalar(v.x), ctx.scalar(v.z));
  ctx.check_block_output(block, u1, u2);
  return {ctx.scalar_value(u1), ctx.scalar_value(u2)};
}

Vec2 inn_forward(Vec2 u, const DiffeoParams& params) {
  require_finite_input(u, "inn_forward");
  thread_local EvalCtx ctx;
  ctx.bind(params.flat());
  auto [x, z] = detail::inn_forward_alg(ctx, params, ctx.scalar(u.x), ctx.scalar(u.z));
  return {ctx.scalar_value(x), ctx.scalar_value(z)};
}

Vec2 inn_inverse(Vec2 v, const DiffeoParams& params) {
  require_finite_input(v, "inn_inverse");
  thread_local EvalCtx ctx;
  ctx.bind(params.flat());
  auto [x, z] = detail::inn_inverse_alg(ctx, params, ctx.scalar(v.x), ctx.scalar(v.z));
  return {ctx.scalar_value(x), ctx.scalar_value(z)};
}

State3 full_map_F(const State3& s, const DiffeoParams& params) {
  if (!is_finite(s)) throw DomainError("full_map_F: non-finite input");
  const Vec2 mapped = inn_forward({s.x, s.z}, params);
  return {mapped.x, s.y, mapped.z};
}

State3 full_map_F_inverse(const State3& s, const DiffeoParams& params) {
  if (!is_finite(s)) throw DomainError("full_map_F_inverse: non-finite input");
  const Vec2 mapped = inn_inverse({s.x, s.z}, params);
  return {mapped.x, s.y, mapped.z};
}

PlanarJacobian inn_jacobian(Vec2 u, const DiffeoParams& params) {
  require_finite_input(u, "inn_jacobian");
  thread_local DualCtx ctx;
  ctx.bind(params.flat());
  auto [x, z] =
      detail::inn_forward_alg(ctx, params, ctx.seed(u.x, 1.0, 0.0), ctx.seed(u.z, 0.0, 1.0));
  const DualCtx::Entry ex = ctx.entry(x);
  const DualCtx::Entry ez = ctx.entry(z);
  return {ex.t1, ex.t2, ez.t1, ez.t2};
}

Jacobian3 jacobian_F(const State3& s, const DiffeoParams& params) {
  if (!is_finite(s)) throw DomainError("jacobian_F: non-finite input");
  const PlanarJacobian planar = inn_jacobian({s.x, s.z}, params);
  Jacobian3 j = Jacobian3::identity();
  j.at(0, 0) = planar.dx_dx;
  j.at(0, 2) = planar.dx_dz;
  j.at(2, 0) = planar.dz_dx;
  j.at(2, 2) = planar.dz_dz;
  return j;
}

}  // namespace cyclemorph
