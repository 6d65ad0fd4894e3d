#include "hifdta/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hifdta {

GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                  GradCheckOptions options) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  backward(loss());

  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    const std::size_t n = p.numel();
    std::vector<double> analytic(n, 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::size_t stride = 1;
    if (options.max_coords_per_tensor > 0 && n > options.max_coords_per_tensor)
      stride = (n + options.max_coords_per_tensor - 1) / options.max_coords_per_tensor;
    auto theta = p.mutable_data();
    NoGradGuard guard;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = theta[i];
      theta[i] = saved + options.step;
      const double up = loss().item();
      theta[i] = saved - options.step;
      const double down = loss().item();
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coordinates;
      if (err > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = std::max(err, result.max_rel_error);
        if (err >= result.max_rel_error) {
          result.worst_tensor = t;
          result.worst_index = i;
          result.worst_analytic = analytic[i];
          result.worst_numeric = numeric;
        }
      }
    }
  }
  for (auto& p : params) p.zero_grad();
  return result;
}

}  // namespace hifdta
