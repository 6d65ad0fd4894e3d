#pragma once

#include <cstddef>
#include <vector>

#include "hifdta/rng.hpp"
#include "hifdta/tensor.hpp"

namespace hifdta::testing {

inline Tensor random_tensor(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// sum(t * w) for a fixed random w, so every output coordinate gets a distinct adjoint.
inline Tensor weighted_sum(const Tensor& t, std::uint64_t seed = 99) {
  CounterRng rng(seed, 7);
  std::vector<double> w(t.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return sum(mul(t, Tensor::from(t.shape(), std::move(w))));
}

}  // namespace hifdta::testing
