#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cyclemorph/coupling_map.hpp"
#include "cyclemorph/geometry.hpp"

namespace cyclemorph {

// Handle to a value recorded on the tape.
struct Var {
  std::uint32_t id = 0;
};

// Reverse-mode differentiation over a dynamically recorded computation.
//
// Nodes are vector-valued: one dense node is a whole W*X+b over a batch of
// lane values, so a full training step records a few hundred nodes rather
// than one per scalar multiply. Values live in a flat arena that is reused
// across epochs (reset() keeps capacity), and the backward sweep skips nodes
// the loss never touched.
//
// Gradients are taken with respect to the bound parameter vector only; batch
// inputs enter as constants. Non-finite values are detected while recording
// (at dense, exp and reduction nodes, where any upstream non-finite value
// necessarily surfaces) and raise NumericalError naming the node.
class Tape {
 public:
  Tape() = default;

  // Drops all recorded nodes and binds the parameter vector the subsequent
  // dense nodes read. The span must stay valid and unmodified until after
  // backward().
  void reset(std::span<const double> params);

  std::span<const double> params() const { return params_; }

  // --- leaves ---
  Var constant(std::span<const double> values);
  Var constant1(double value);

  // --- elementwise / dense ---
  // W x + b: x holds a (cols x n) batch column-major per batch element
  // (x.len must be a multiple of layer.cols); result is (rows x n).
  Var dense(const LayerView& layer, Var x);
  Var leaky_relu(Var x, double negative_slope);
  Var tanh(Var x);
  Var exp(Var x);
  Var scale(Var x, double factor);
  Var negate(Var x) { return scale(x, -1.0); }
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // Hadamard

  // --- reductions (to a length-1 node) ---
  Var sum(Var x);
  Var squared_norm(Var x);
  // Euclidean norm of the whole vector. Subgradient at 0 is taken as 0.
  Var norm(Var x);
  // Hard min/max over the elements of x. Ties pick the lowest index; the
  // backward pass routes the full adjoint to that single element.
  Var min(Var x);
  Var max(Var x);

  // Symmetric Hausdorff distance between the recorded planar set
  // {(xs[i], zs[i])} and the fixed target set, fused into one node:
  //   H = max( max_t min_m d(t, m), max_m min_t d(m, t) )
  // with the same lowest-index tie rule as min/max. Backward moves the
  // winning mapped point along (mapped - target)/distance; a coincident pair
  // (distance 0) gets a zero subgradient.
  Var hausdorff_to_fixed(Var xs, Var zs, const PointSet2& target);

  double value(Var v) const;                  // length-1 nodes
  std::span<const double> values(Var v) const;
  std::size_t length(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Reverse sweep seeded with d(loss)/d(loss) = 1. loss must be length 1.
  // grad_out must have params().size() entries; it is overwritten. Call at
  // most once per reset(): a second sweep would double-count.
  void backward(Var loss, std::span<double> grad_out);

 private:
  enum class Kind : std::uint8_t {
    kConstant,
    kDense,
    kLeakyRelu,
    kTanh,
    kExp,
    kScale,
    kAdd,
    kSub,
    kMul,
    kSum,
    kSquaredNorm,
    kNorm,
    kMin,
    kMax,
    kHausdorff,
  };

  static constexpr std::uint32_t kNone = 0xffffffffu;

  struct Node {
    Kind kind = Kind::kConstant;
    std::uint32_t a = kNone;
    std::uint32_t b = kNone;
    std::size_t val = 0;  // offset into the value/adjoint arenas
    std::size_t len = 0;
    double c = 0.0;  // scale factor / leaky slope
    LayerView layer{};
    std::size_t arg = 0;  // winning element (min/max)
    // Hausdorff bookkeeping: 0 = target-to-mapped direction won, 1 = reverse.
    std::uint32_t h_dir = 0;
    std::size_t h_target = 0;  // winning target index
    std::size_t h_mapped = 0;  // winning mapped index
    std::size_t pool_off = 0;  // target coordinates in pool_
    std::size_t pool_n = 0;
  };

  Var push(Kind kind, std::size_t len, std::uint32_t a, std::uint32_t b);
  double* val_ptr(const Node& n) { return values_.data() + n.val; }
  const double* val_ptr(const Node& n) const { return values_.data() + n.val; }
  const Node& node_of(Var v) const;
  void require_same_len(Var a, Var b, const char* op) const;
  void check_finite(const Node& n) const;

  std::span<const double> params_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<double> pool_;
  std::vector<std::uint8_t> touched_;
  bool swept_ = false;
};

struct GradientResult {
  double loss = 0.0;
  std::vector<double> grad;
};

// Records the loss with a fresh tape bound to `params` and runs one backward
// sweep. The recorder sees the tape after reset(params) and returns the
// length-1 loss node.
GradientResult gradient(const std::function<Var(Tape&)>& record_loss,
                        std::span<const double> params);

}  // namespace cyclemorph
