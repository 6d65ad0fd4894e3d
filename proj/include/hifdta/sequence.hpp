#pragma once

// Fused recurrent scans with hand-written adjoints. Sequences are processed
// independently, so the batch loop is the parallel axis.

#include <cstddef>
#include <vector>

#include "hifdta/kernels.hpp"
#include "hifdta/tensor.hpp"

namespace hifdta {

// LSTM recurrence over precomputed input projections.
//   gates_x: [B, T, 4H], gate blocks ordered (input, forget, cell, output)
//   w_hh:    [H, 4H] recurrent weights
// Sequence b occupies steps [0, lengths[b]); outputs past the end are zero.
// With `reverse` the recurrence runs from the last valid step down to 0.
Tensor lstm_scan(const Tensor& gates_x, const Tensor& w_hh, const std::vector<std::size_t>& lengths,
                 bool reverse, kernels::Exec exec = kernels::Exec::Parallel);

// Selective state-space scan with zero-order-hold style discretisation:
//   h_t = exp(delta_t * A) . h_{t-1} + delta_t * B_t * x_t     (per channel c, state s)
//   y_t = <C_t, h_t> + D . x_t
// Shapes: x, delta [B, T, d]; b_in, c_out [B, T, n]; a [d, n]; d_skip [d].
// Masked steps (mask[b*T + t] == 0) carry the state unchanged and output 0.
Tensor ssm_scan(const Tensor& x, const Tensor& delta, const Tensor& b_in, const Tensor& c_out,
                const Tensor& a, const Tensor& d_skip, const Mask& mask,
                kernels::Exec exec = kernels::Exec::Parallel);

}  // namespace hifdta
