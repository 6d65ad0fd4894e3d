#pragma once

// Dense f64 tensors with reverse-mode differentiation.
//
// Every op allocates a fresh output node. When gradient recording is enabled
// and any input requires a gradient, the output keeps its inputs alive and a
// closure that maps the output adjoint onto input adjoints. backward() orders
// the recorded graph topologically and visits each node exactly once.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hifdta/kernels.hpp"
#include "hifdta/rng.hpp"

namespace hifdta {

using Shape = std::vector<std::size_t>;
using Index = std::vector<std::int64_t>;  // row indices; -1 selects a zero row
using Mask = std::vector<std::uint8_t>;   // 1 = valid

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until an adjoint reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Reads this node's grad and value; accumulates into the inputs' grads.
  std::function<void(TensorNode& self)> backward;

  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  // Direct write access, for parameters, optimizers and finite differences.
  std::span<double> mutable_data() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  double item() const;
  double operator[](std::size_t flat) const { return node_->value[flat]; }

  // Copy of the value with no history.
  Tensor detach() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Gradient recording is on by default; NoGradGuard disables it on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Populates .grad() of every requires_grad leaf reachable from `root` with
// d root / d leaf. Gradients accumulate across calls until zero_grad().
void backward(const Tensor& root);

// Gradient buffer of input `i` of `self`, or nullptr if it needs no gradient.
std::vector<double>* input_grad(TensorNode& self, std::size_t i);

// Builds an op output. Throws NumericError if `value` holds NaN/Inf. The
// backward closure is only attached when recording and an input needs grads.
Tensor make_op_result(const char* op, Shape shape, std::vector<double> value,
                      std::initializer_list<Tensor> inputs,
                      std::function<void(TensorNode&)> backward_fn);
Tensor make_op_result(const char* op, Shape shape, std::vector<double> value,
                      const std::vector<Tensor>& inputs,
                      std::function<void(TensorNode&)> backward_fn);

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
// [B,m,k] x [B,k,n] with optional per-operand transposition of the last two axes.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor transpose(const Tensor& a);  // 2-D
// Constant sparse matrix times dense [cols, width] tensor.
struct SparseOperator {
  kernels::Csr forward;
  kernels::Csr adjoint;
  static std::shared_ptr<const SparseOperator> make(kernels::Csr csr);
};
Tensor spmm(const std::shared_ptr<const SparseOperator>& s, const Tensor& x);

// --- elementwise ----------------------------------------------------------

// Binary ops broadcast with right-aligned numpy semantics.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// num / den, with 0 (and zero gradient) wherever den == 0.
Tensor ratio_or_zero(const Tensor& num, const Tensor& den);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
// sqrt(max(x, 0)); the derivative is taken as 0 where the result is 0.
Tensor sqrt(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// --- reductions and normalisation ----------------------------------------

Tensor sum(const Tensor& a);  // scalar
Tensor mean(const Tensor& a);  // scalar
Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor mean_axis(const Tensor& a, std::size_t axis, bool keepdim = false);

// Softmax along `axis`. With a mask (same shape as `a`), invalid positions
// output exactly 0 and valid positions along each slice sum to 1; a slice with
// no valid position is all zeros.
Tensor softmax(const Tensor& a, std::size_t axis, const Mask* mask = nullptr);

inline constexpr double kLayerNormEps = 1e-5;
// Normalises over the last axis: (x - mean) / sqrt(var + 1e-5) * gain + bias.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias);

// Inverted dropout. Eval mode (train == false) or p == 0 returns `a` itself.
Tensor dropout(const Tensor& a, double p, bool train, StreamKey key);

// --- segment ops: rows of `values` grouped by ids in [0, segments) --------

Tensor segment_sum(const Tensor& values, const Index& ids, std::size_t segments);
Tensor segment_mean(const Tensor& values, const Index& ids, std::size_t segments);
Tensor segment_max(const Tensor& values, const Index& ids, std::size_t segments);
Tensor segment_min(const Tensor& values, const Index& ids, std::size_t segments);
// Population standard deviation; empty and zero-variance segments give 0.
Tensor segment_std(const Tensor& values, const Index& ids, std::size_t segments);
// Column-wise softmax within each segment of rows.
Tensor segment_softmax(const Tensor& values, const Index& ids, std::size_t segments);

// --- structural -----------------------------------------------------------

// Rows of `a` (first axis) selected by `index`; -1 yields a zero row.
Tensor gather_rows(const Tensor& a, const Index& index);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& a, Shape shape);

// x W + b for x of any rank, contracting the last axis. W is [in, out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b);

}  // namespace hifdta
