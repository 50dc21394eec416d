#include "cyclemorph/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cyclemorph/detail/kernels.hpp"
#include "cyclemorph/errors.hpp"

namespace cyclemorph {

void Tape::reset(std::span<const double> params) {
  params_ = params;
  nodes_.clear();
  values_.clear();
  pool_.clear();
  touched_.clear();
  swept_ = false;
}

Var Tape::push(Kind kind, std::size_t len, std::uint32_t a, std::uint32_t b) {
  if (swept_) throw DomainError("Tape: recording after backward(); reset() first");
  if (len == 0) throw DomainError("Tape: zero-length node");
  Node n;
  n.kind = kind;
  n.a = a;
  n.b = b;
  n.len = len;
  n.val = values_.size();
  values_.resize(values_.size() + len);
  nodes_.push_back(n);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node_of(Var v) const {
  if (v.id >= nodes_.size()) throw DomainError("Tape: dangling Var handle");
  return nodes_[v.id];
}

void Tape::require_same_len(Var a, Var b, const char* op) const {
  if (node_of(a).len != node_of(b).len) {
    throw DomainError(std::string("Tape::") + op + ": operand lengths differ (" +
                      std::to_string(node_of(a).len) + " vs " + std::to_string(node_of(b).len) + ")");
  }
}

void Tape::check_finite(const Node& n) const {
  const double* v = values_.data() + n.val;
  for (std::size_t i = 0; i < n.len; ++i) {
    if (!std::isfinite(v[i])) {
      const char* label = "?";
      switch (n.kind) {
        case Kind::kConstant: label = "constant"; break;
        case Kind::kDense: label = "dense"; break;
        case Kind::kLeakyRelu: label = "leaky_relu"; break;
        case Kind::kTanh: label = "tanh"; break;
        case Kind::kExp: label = "exp"; break;
        case Kind::kScale: label = "scale"; break;
        case Kind::kAdd: label = "add"; break;
        case Kind::kSub: label = "sub"; break;
        case Kind::kMul: label = "mul"; break;
        case Kind::kSum: label = "sum"; break;
        case Kind::kSquaredNorm: label = "squared_norm"; break;
        case Kind::kNorm: label = "norm"; break;
        case Kind::kMin: label = "min"; break;
        case Kind::kMax: label = "max"; break;
        case Kind::kHausdorff: label = "hausdorff"; break;
      }
      throw NumericalError("Tape: non-finite value in node #" +
                           std::to_string(&n - nodes_.data()) + " (" + label + "), element " +
                           std::to_string(i));
    }
  }
}

Var Tape::constant(std::span<const double> values) {
  Var v = push(Kind::kConstant, values.size(), kNone, kNone);
  std::copy(values.begin(), values.end(), val_ptr(nodes_.back()));
  check_finite(nodes_.back());
  return v;
}

Var Tape::constant1(double value) { return constant({&value, 1}); }

Var Tape::dense(const LayerView& layer, Var x) {
  const Node& xn = node_of(x);
  const auto cols = static_cast<std::size_t>(layer.cols);
  const auto rows = static_cast<std::size_t>(layer.rows);
  if (cols == 0 || rows == 0 || xn.len % cols != 0) {
    throw DomainError("Tape::dense: input length " + std::to_string(xn.len) +
                      " does not match layer with " + std::to_string(layer.cols) + " columns");
  }
  const std::size_t m = xn.len / cols;
  Var out = push(Kind::kDense, rows * m, x.id, kNone);
  Node& n = nodes_.back();
  n.layer = layer;
  const double* in = values_.data() + nodes_[x.id].val;
  const double* w = params_.data() + layer.w_offset;
  const double* b = params_.data() + layer.b_offset;
  double* o = val_ptr(n);
  for (std::size_t r = 0; r < rows; ++r) {
    double* o_row = o + r * m;
    std::fill(o_row, o_row + m, b[r]);
    const double* w_row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      detail::axpy_n(o_row, w_row[c], in + c * m, m);
    }
  }
  check_finite(n);
  return out;
}

Var Tape::leaky_relu(Var x, double negative_slope) {
  const Node& xn = node_of(x);
  Var out = push(Kind::kLeakyRelu, xn.len, x.id, kNone);
  Node& n = nodes_.back();
  n.c = negative_slope;
  const double* in = values_.data() + nodes_[x.id].val;
  double* o = val_ptr(n);
  for (std::size_t i = 0; i < n.len; ++i) o[i] = in[i] > 0.0 ? in[i] : negative_slope * in[i];
  return out;
}

Var Tape::tanh(Var x) {
  const Node& xn = node_of(x);
  Var out = push(Kind::kTanh, xn.len, x.id, kNone);
  Node& n = nodes_.back();
  const double* in = values_.data() + nodes_[x.id].val;
  double* o = val_ptr(n);
  for (std::size_t i = 0; i < n.len; ++i) o[i] = std::tanh(in[i]);
  return out;
}

Var Tape::exp(Var x) {
  const Node& xn = node_of(x);
  Var out = push(Kind::kExp, xn.len, x.id, kNone);
  Node& n = nodes_.back();
  const double* in = values_.data() + nodes_[x.id].val;
  double* o = val_ptr(n);
  for (std::size_t i = 0; i < n.len; ++i) o[i] = std::exp(in[i]);
  check_finite(n);
  return out;
}

Var Tape::scale(Var x, double factor) {
  const Node& xn = node_of(x);
  Var out = push(Kind::kScale, xn.len, x.id, kNone);
  Node& n = nodes_.back();
  n.c = factor;
  const double* in = values_.data() + nodes_[x.id].val;
  double* o = val_ptr(n);
  for (std::size_t i = 0; i < n.len; ++i) o[i] = factor * in[i];
  return out;
}

Var Tape::add(Var a, Var b) {
  require_same_len(a, b, "add");
  Var out = push(Kind::kAdd, node_of(a).len, a.id, b.id);
  Node& n = nodes_.back();
  const double* pa = values_.data() + nodes_[a.id].val;
  const double* pb = values_.data() + nodes_[b.id].val;
  double* o = val_ptr(n);
  for (std::size_t i = 0; i < n.len; ++i) o[i] = pa[i] + pb[i];
  return out;
}

Var Tape::sub(Var a, Var b) {
  require_same_len(a, b, "sub");
  Var out = push(Kind::kSub, node_of(a).len, a.id, b.id);
  Node& n = nodes_.back();
  const double* pa = values_.data() + nodes_[a.id].val;
  const double* pb = values_.data() + nodes_[b.id].val;
  double* o = val_ptr(n);
  for (std::size_t i = 0; i < n.len; ++i) o[i] = pa[i] - pb[i];
  return out;
}

Var Tape::mul(Var a, Var b) {
  require_same_len(a, b, "mul");
  Var out = push(Kind::kMul, node_of(a).len, a.id, b.id);
  Node& n = nodes_.back();
  const double* pa = values_.data() + nodes_[a.id].val;
  const double* pb = values_.data() + nodes_[b.id].val;
  double* o = val_ptr(n);
  for (std::size_t i = 0; i < n.len; ++i) o[i] = pa[i] * pb[i];
  return out;
}

Var Tape::sum(Var x) {
  Var out = push(Kind::kSum, 1, x.id, kNone);
  Node& n = nodes_.back();
  const Node& xn = nodes_[x.id];
  *val_ptr(n) = [&] {
    const double* v = values_.data() + xn.val;
    double acc = 0.0;
    for (std::size_t i = 0; i < xn.len; ++i) acc += v[i];
    return acc;
  }();
  check_finite(n);
  return out;
}

Var Tape::squared_norm(Var x) {
  Var out = push(Kind::kSquaredNorm, 1, x.id, kNone);
  Node& n = nodes_.back();
  const Node& xn = nodes_[x.id];
  const double* v = values_.data() + xn.val;
  *val_ptr(n) = detail::dot_n(v, v, xn.len);
  check_finite(n);
  return out;
}

Var Tape::norm(Var x) {
  Var out = push(Kind::kNorm, 1, x.id, kNone);
  Node& n = nodes_.back();
  const Node& xn = nodes_[x.id];
  const double* v = values_.data() + xn.val;
  *val_ptr(n) = std::sqrt(detail::dot_n(v, v, xn.len));
  check_finite(n);
  return out;
}

Var Tape::min(Var x) {
  Var out = push(Kind::kMin, 1, x.id, kNone);
  Node& n = nodes_.back();
  const Node& xn = nodes_[x.id];
  const double* v = values_.data() + xn.val;
  // Strict comparison: ties keep the earliest element, and a NaN could never
  // win a strict test, so inputs are checked explicitly instead.
  std::size_t arg = 0;
  double best = v[0];
  for (std::size_t i = 0; i < xn.len; ++i) {
    if (!std::isfinite(v[i])) check_finite(xn);
    if (v[i] < best) {
      best = v[i];
      arg = i;
    }
  }
  n.arg = arg;
  *val_ptr(n) = best;
  return out;
}

Var Tape::max(Var x) {
  Var out = push(Kind::kMax, 1, x.id, kNone);
  Node& n = nodes_.back();
  const Node& xn = nodes_[x.id];
  const double* v = values_.data() + xn.val;
  std::size_t arg = 0;
  double best = v[0];
  for (std::size_t i = 0; i < xn.len; ++i) {
    if (!std::isfinite(v[i])) check_finite(xn);
    if (v[i] > best) {
      best = v[i];
      arg = i;
    }
  }
  n.arg = arg;
  *val_ptr(n) = best;
  return out;
}

Var Tape::hausdorff_to_fixed(Var xs, Var zs, const PointSet2& target) {
  require_same_len(xs, zs, "hausdorff_to_fixed");
  if (target.empty()) throw DomainError("Tape::hausdorff_to_fixed: empty target set");
  if (!all_finite(target)) throw DomainError("Tape::hausdorff_to_fixed: non-finite target point");

  const std::size_t pool_off = pool_.size();
  for (const Vec2& p : target) {
    pool_.push_back(p.x);
    pool_.push_back(p.z);
  }

  Var out = push(Kind::kHausdorff, 1, xs.id, zs.id);
  Node& n = nodes_.back();
  n.pool_off = pool_off;
  n.pool_n = target.size();

  const Node& xn = nodes_[xs.id];
  const Node& zn = nodes_[zs.id];
  const std::size_t m = xn.len;
  const double* px = values_.data() + xn.val;
  const double* pz = values_.data() + zn.val;
  check_finite(xn);
  check_finite(zn);
  const double* t = pool_.data() + pool_off;

  // One pass over the distance matrix maintains, per target point, the
  // nearest mapped point (row minima) and, per mapped point, the nearest
  // target (column minima). All selections use strict comparisons, so the
  // lowest index wins every tie.
  std::vector<double> col_best(m, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> col_arg(m, 0);
  double h_fwd = -1.0;
  std::size_t fwd_i = 0, fwd_j = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double tx = t[2 * i];
    const double tz = t[2 * i + 1];
    double row_best = std::numeric_limits<double>::infinity();
    std::size_t row_arg = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double dx = px[j] - tx;
      const double dz = pz[j] - tz;
      const double d = std::sqrt(dx * dx + dz * dz);
      if (d < row_best) {
        row_best = d;
        row_arg = j;
      }
      if (d < col_best[j]) {
        col_best[j] = d;
        col_arg[j] = i;
      }
    }
    if (row_best > h_fwd) {
      h_fwd = row_best;
      fwd_i = i;
      fwd_j = row_arg;
    }
  }
  double h_rev = -1.0;
  std::size_t rev_i = 0, rev_j = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (col_best[j] > h_rev) {
      h_rev = col_best[j];
      rev_i = col_arg[j];
      rev_j = j;
    }
  }

  // Ties between the two directions resolve to the target-to-mapped term
  // (the lower index in a max over [forward, reverse]).
  if (h_rev > h_fwd) {
    n.h_dir = 1;
    n.h_target = rev_i;
    n.h_mapped = rev_j;
    *val_ptr(n) = h_rev;
  } else {
    n.h_dir = 0;
    n.h_target = fwd_i;
    n.h_mapped = fwd_j;
    *val_ptr(n) = h_fwd;
  }
  check_finite(n);
  return out;
}

double Tape::value(Var v) const {
  const Node& n = node_of(v);
  if (n.len != 1) throw DomainError("Tape::value: node is not scalar");
  return values_[n.val];
}

std::span<const double> Tape::values(Var v) const {
  const Node& n = node_of(v);
  return {values_.data() + n.val, n.len};
}

std::size_t Tape::length(Var v) const { return node_of(v).len; }

void Tape::backward(Var loss, std::span<double> grad_out) {
  const Node& loss_node = node_of(loss);
  if (loss_node.len != 1) throw DomainError("Tape::backward: loss must be scalar");
  if (swept_) throw DomainError("Tape::backward: tape already swept; reset() first");
  if (grad_out.size() != params_.size()) {
    throw DomainError("Tape::backward: gradient buffer has " + std::to_string(grad_out.size()) +
                      " entries, parameters have " + std::to_string(params_.size()));
  }
  if (!std::isfinite(values_[loss_node.val])) {
    throw NumericalError("Tape::backward: loss value is non-finite");
  }
  swept_ = true;

  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  adjoints_.assign(values_.size(), 0.0);
  touched_.assign(nodes_.size(), 0);
  adjoints_[loss_node.val] = 1.0;
  touched_[loss.id] = 1;

  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    if (!touched_[id]) continue;
    const Node& n = nodes_[id];
    const double* adj = adjoints_.data() + n.val;
    switch (n.kind) {
      case Kind::kConstant:
        break;
      case Kind::kDense: {
        touched_[n.a] = 1;
        const Node& xn = nodes_[n.a];
        const auto rows = static_cast<std::size_t>(n.layer.rows);
        const auto cols = static_cast<std::size_t>(n.layer.cols);
        const std::size_t m = n.len / rows;
        const double* in = values_.data() + xn.val;
        double* adj_in = adjoints_.data() + xn.val;
        const double* w = params_.data() + n.layer.w_offset;
        double* gw = grad_out.data() + n.layer.w_offset;
        double* gb = grad_out.data() + n.layer.b_offset;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* adj_row = adj + r * m;
          const double* w_row = w + r * cols;
          double* gw_row = gw + r * cols;
          double bias_sum = 0.0;
          for (std::size_t k = 0; k < m; ++k) bias_sum += adj_row[k];
          gb[r] += bias_sum;
          for (std::size_t c = 0; c < cols; ++c) {
            gw_row[c] += detail::dot_n(adj_row, in + c * m, m);
            detail::axpy_n(adj_in + c * m, w_row[c], adj_row, m);
          }
        }
        break;
      }
      case Kind::kLeakyRelu: {
        touched_[n.a] = 1;
        const Node& xn = nodes_[n.a];
        const double* in = values_.data() + xn.val;
        double* adj_in = adjoints_.data() + xn.val;
        for (std::size_t i = 0; i < n.len; ++i) {
          adj_in[i] += adj[i] * (in[i] > 0.0 ? 1.0 : n.c);
        }
        break;
      }
      case Kind::kTanh: {
        touched_[n.a] = 1;
        double* adj_in = adjoints_.data() + nodes_[n.a].val;
        const double* y = values_.data() + n.val;
        for (std::size_t i = 0; i < n.len; ++i) adj_in[i] += adj[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Kind::kExp: {
        touched_[n.a] = 1;
        double* adj_in = adjoints_.data() + nodes_[n.a].val;
        const double* y = values_.data() + n.val;
        for (std::size_t i = 0; i < n.len; ++i) adj_in[i] += adj[i] * y[i];
        break;
      }
      case Kind::kScale: {
        touched_[n.a] = 1;
        double* adj_in = adjoints_.data() + nodes_[n.a].val;
        detail::axpy_n(adj_in, n.c, adj, n.len);
        break;
      }
      case Kind::kAdd: {
        touched_[n.a] = 1;
        touched_[n.b] = 1;
        detail::axpy_n(adjoints_.data() + nodes_[n.a].val, 1.0, adj, n.len);
        detail::axpy_n(adjoints_.data() + nodes_[n.b].val, 1.0, adj, n.len);
        break;
      }
      case Kind::kSub: {
        touched_[n.a] = 1;
        touched_[n.b] = 1;
        detail::axpy_n(adjoints_.data() + nodes_[n.a].val, 1.0, adj, n.len);
        detail::axpy_n(adjoints_.data() + nodes_[n.b].val, -1.0, adj, n.len);
        break;
      }
      case Kind::kMul: {
        touched_[n.a] = 1;
        touched_[n.b] = 1;
        const double* va = values_.data() + nodes_[n.a].val;
        const double* vb = values_.data() + nodes_[n.b].val;
        double* adj_a = adjoints_.data() + nodes_[n.a].val;
        double* adj_b = adjoints_.data() + nodes_[n.b].val;
        for (std::size_t i = 0; i < n.len; ++i) {
          adj_a[i] += adj[i] * vb[i];
          adj_b[i] += adj[i] * va[i];
        }
        break;
      }
      case Kind::kSum: {
        touched_[n.a] = 1;
        const Node& xn = nodes_[n.a];
        double* adj_in = adjoints_.data() + xn.val;
        for (std::size_t i = 0; i < xn.len; ++i) adj_in[i] += adj[0];
        break;
      }
      case Kind::kSquaredNorm: {
        touched_[n.a] = 1;
        const Node& xn = nodes_[n.a];
        const double* v = values_.data() + xn.val;
        double* adj_in = adjoints_.data() + xn.val;
        detail::axpy_n(adj_in, 2.0 * adj[0], v, xn.len);
        break;
      }
      case Kind::kNorm: {
        touched_[n.a] = 1;
        const double y = values_[n.val];
        if (y > 0.0) {
          const Node& xn = nodes_[n.a];
          detail::axpy_n(adjoints_.data() + xn.val, adj[0] / y, values_.data() + xn.val, xn.len);
        }
        // subgradient at the origin: 0
        break;
      }
      case Kind::kMin:
      case Kind::kMax: {
        touched_[n.a] = 1;
        adjoints_[nodes_[n.a].val + n.arg] += adj[0];
        break;
      }
      case Kind::kHausdorff: {
        touched_[n.a] = 1;
        touched_[n.b] = 1;
        const double h = values_[n.val];
        if (h > 0.0) {
          const Node& xn = nodes_[n.a];
          const Node& zn = nodes_[n.b];
          const double tx = pool_[n.pool_off + 2 * n.h_target];
          const double tz = pool_[n.pool_off + 2 * n.h_target + 1];
          const double vx = values_[xn.val + n.h_mapped];
          const double vz = values_[zn.val + n.h_mapped];
          adjoints_[xn.val + n.h_mapped] += adj[0] * (vx - tx) / h;
          adjoints_[zn.val + n.h_mapped] += adj[0] * (vz - tz) / h;
        }
        // coincident winning pair: zero subgradient
        break;
      }
    }
  }

  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    if (!std::isfinite(grad_out[i])) {
      throw NumericalError("Tape::backward: non-finite gradient at parameter " + std::to_string(i));
    }
  }
}

GradientResult gradient(const std::function<Var(Tape&)>& record_loss,
                        std::span<const double> params) {
  Tape tape;
  tape.reset(params);
  const Var loss = record_loss(tape);
  GradientResult result;
  result.loss = tape.value(loss);
  result.grad.resize(params.size());
  tape.backward(loss, result.grad);
  return result;
}

}  // namespace cyclemorph
