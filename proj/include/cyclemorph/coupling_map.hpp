#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cyclemorph/geometry.hpp"
#include "cyclemorph/rng.hpp"

namespace cyclemorph {

enum class Activation {
  kLeakyRelu,
  kTanh,
};

// Shape of the scalar-to-scalar MLPs inside each coupling block (the lanes of
// the planar split are one-dimensional, so every subnet maps R -> R).
struct SubnetSpec {
  std::vector<int> hidden_layers = {64, 64};
  Activation activation = Activation::kLeakyRelu;
  double leaky_slope = 0.01;

  void validate() const;

  // Weights plus biases for the layer stack [1, hidden..., 1].
  std::size_t parameter_count() const;
};

// Where one dense layer's row-major weight matrix and bias vector sit inside
// the flat parameter vector.
struct LayerView {
  std::size_t w_offset = 0;
  std::size_t b_offset = 0;
  int rows = 0;
  int cols = 0;
};

inline constexpr int kDefaultBlockCount = 6;
inline constexpr double kDefaultScaleClamp = 2.0;

// Parameters of the planar diffeomorphism: a stack of affine coupling blocks
// acting on (x, z), extended to 3D by the identity on y.
//
// One block maps (u1, u2) to (v1, v2):
//   v1 = u1 * exp(s2(u2)) + q2(u2)
//   v2 = u2 * exp(s1(v1)) + q1(v1)
// where each log-scale is clamped, s_i(t) = c * tanh(p_i(t) / c) with
// c = scale_clamp, keeping every stretch factor inside [exp(-c), exp(c)].
// Odd-indexed blocks swap the two lanes on the way in and back on the way
// out, so both coordinates get transformed across the stack while all-zero
// parameters still compose to the exact identity.
//
// All subnet weights live in one flat vector. Canonical order:
// block -> subnet (p1, p2, q1, q2) -> layer -> row-major weights, then biases.
class DiffeoParams {
 public:
  // Zero-filled parameters (the identity map).
  DiffeoParams(int block_count, SubnetSpec spec, double scale_clamp = kDefaultScaleClamp);

  DiffeoParams() : DiffeoParams(kDefaultBlockCount, SubnetSpec{}) {}

  // Training start: hidden layers fan-in uniform in +-sqrt(6/fan_in) from the
  // stream, final layer of every subnet zero, so the initial map is exactly
  // the identity while hidden features are already diverse.
  static DiffeoParams identity_initialized(int block_count, SubnetSpec spec, double scale_clamp,
                                           Rng& stream);

  // Fully random parameters (hidden as above, final layers uniform in
  // +-output_scale). Produces a generic non-identity diffeomorphism; used by
  // invertibility and conjugacy checks.
  static DiffeoParams random(int block_count, SubnetSpec spec, double scale_clamp, Rng& stream,
                             double output_scale = 0.5);

  int block_count() const { return block_count_; }
  const SubnetSpec& subnet() const { return spec_; }
  double scale_clamp() const { return scale_clamp_; }
  std::size_t parameter_count() const { return flat_.size(); }

  std::span<double> flat() { return flat_; }
  std::span<const double> flat() const { return flat_; }

  // Length-checked copy into the flat vector.
  void assign_flat(std::span<const double> values);

  // Throws if any parameter is non-finite.
  void validate() const;

  // Layer table access. Subnet index: 0 = p1, 1 = p2, 2 = q1, 3 = q2.
  std::span<const LayerView> subnet_layers(int block, int subnet) const;
  int layers_per_subnet() const { return layers_per_subnet_; }

 private:
  int block_count_ = 0;
  SubnetSpec spec_;
  double scale_clamp_ = kDefaultScaleClamp;
  int layers_per_subnet_ = 0;
  std::vector<LayerView> table_;
  std::vector<double> flat_;
};

// One coupling block applied to a lane pair (no lane alternation; that is
// inn_forward's job). block must be in [0, block_count).
Vec2 coupling_forward(Vec2 u, const DiffeoParams& params, int block);
Vec2 coupling_inverse(Vec2 v, const DiffeoParams& params, int block);

// The full planar map and its exact inverse.
Vec2 inn_forward(Vec2 u, const DiffeoParams& params);
Vec2 inn_inverse(Vec2 v, const DiffeoParams& params);

// 3D extension F(x, y, z) = (inn_x(x, z), y, inn_z(x, z)) and its inverse.
State3 full_map_F(const State3& s, const DiffeoParams& params);
State3 full_map_F_inverse(const State3& s, const DiffeoParams& params);

struct PlanarJacobian {
  double dx_dx = 1.0;
  double dx_dz = 0.0;
  double dz_dx = 0.0;
  double dz_dz = 1.0;

  double det() const { return dx_dx * dz_dz - dx_dz * dz_dx; }
};

// Analytic Jacobian of inn_forward at u (forward-mode through the same
// computation as the map itself, so map and Jacobian cannot drift apart).
// det is a product of exp terms and is therefore strictly positive.
PlanarJacobian inn_jacobian(Vec2 u, const DiffeoParams& params);

// Analytic Jacobian of full_map_F: the planar block embedded in rows/columns
// x and z, with dF_y/dy = 1 and zero coupling between y and the plane.
Jacobian3 jacobian_F(const State3& s, const DiffeoParams& params);

}  // namespace cyclemorph
