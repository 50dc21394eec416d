#pragma once

#include <cstddef>

namespace cyclemorph::detail {

// Dot product with four independent accumulators combined in a fixed order,
// (a0 + a1) + (a2 + a3). The point is speed without -ffast-math: the four
// chains vectorize, yet the summation order is frozen so results stay
// bit-identical across builds and optimization levels.
inline double dot_n(const double* a, const double* b, std::size_t n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += a[i] * b[i];
    a1 += a[i + 1] * b[i + 1];
    a2 += a[i + 2] * b[i + 2];
    a3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) a0 += a[i] * b[i];
  return (a0 + a1) + (a2 + a3);
}

// y += c * x
inline void axpy_n(double* y, double c, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += c * x[i];
}

}  // namespace cyclemorph::detail
