#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hifdta/tensor.hpp"

namespace hifdta {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  double step = 1e-6;
  // 0 checks every coordinate; otherwise at most this many evenly strided
  // coordinates per tensor.
  std::size_t max_coords_per_tensor = 0;
};

// max over coordinates of |analytic - central difference| / max(1, |central difference|).
// `loss` must be deterministic and return a scalar built from `params`.
GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                  GradCheckOptions options = {});

}  // namespace hifdta
