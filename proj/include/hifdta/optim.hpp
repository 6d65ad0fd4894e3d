#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hifdta/params.hpp"

namespace hifdta {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Leave parameters without a gradient untouched instead of failing.
  bool skip_missing = false;
};

// Adam with bias-corrected moments over the trainable entries of a store.
class Adam {
 public:
  Adam(const ParamStore& store, AdamConfig config = {});

  // Throws UsageError if a parameter has no gradient (unless skip_missing).
  void step();

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  std::uint64_t steps() const { return step_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

}  // namespace hifdta
