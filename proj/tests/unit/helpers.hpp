#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "san/rng.hpp"
#include "san/tensor.hpp"

namespace san::test {

template <class T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  Rng rng(seed);
  for (auto& x : t.vec()) x = T(rng.uniform(lo, hi));
  return t;
}

/// [1, H, W] map where each pixel is valid with probability `density`.
template <class T = double>
Tensor<T> random_depth(int h, int w, double density, std::uint64_t seed) {
  Tensor<T> d({1, h, w});
  Rng rng(seed);
  for (auto& x : d.vec()) {
    const double keep = rng.uniform();
    const double value = rng.uniform(0.5, 50.0);
    x = keep < density ? T(value) : T(0);
  }
  return d;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace san::test
