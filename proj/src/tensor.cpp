#include "hifdta/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "hifdta/errors.hpp"

namespace hifdta {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void dim_error(const char* op, const std::string& detail) {
  throw DimensionError(std::string(op) + ": " + detail);
}

[[noreturn]] void dim_error(const char* op, const Shape& a, const Shape& b) {
  dim_error(op, "incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream oss;
      oss << op << ": non-finite output at flat index " << i;
      throw NumericError(oss.str());
    }
  }
}

std::shared_ptr<TensorNode> new_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

// outer x n x inner view of a tensor around `axis`.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

std::size_t row_width(const Shape& shape) {
  std::size_t w = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) w *= shape[i];
  return w;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double>& TensorNode::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    dim_error("from", "shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                          " values, got " + std::to_string(values.size()));
  return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_leaf({}, {value}, requires_grad));
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return Tensor(new_leaf(node_->shape, node_->value, false)); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::vector<double>* input_grad(TensorNode& self, std::size_t i) {
  TensorNode* in = self.inputs[i].get();
  return in->requires_grad ? &in->grad_buffer() : nullptr;
}

Tensor make_op_result(const char* op, Shape shape, std::vector<double> value,
                      const std::vector<Tensor>& inputs, std::function<void(TensorNode&)> backward_fn) {
  check_finite(op, value);
  auto node = new_leaf(std::move(shape), std::move(value), false);
  node->op = op;
  if (g_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& t : inputs) node->inputs.push_back(t.node_ptr());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

Tensor make_op_result(const char* op, Shape shape, std::vector<double> value,
                      std::initializer_list<Tensor> inputs, std::function<void(TensorNode&)> backward_fn) {
  return make_op_result(op, std::move(shape), std::move(value), std::vector<Tensor>(inputs),
                        std::move(backward_fn));
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1)
    throw UsageError("backward: root must be a scalar, got shape " +
                     (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode* child = node->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(*node);
    // Interior adjoints are no longer needed once propagated.
    std::vector<double>().swap(node->grad);
  }
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) dim_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm(a.data().data(), b.data().data(), out.data(), m, k, n, false, false, false);
  return make_op_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
    const double* g = self.grad.data();
    const double* av = self.inputs[0]->value.data();
    const double* bv = self.inputs[1]->value.data();
    if (auto* ga = input_grad(self, 0)) kernels::gemm(g, bv, ga->data(), m, n, k, false, true, true);
    if (auto* gb = input_grad(self, 1)) kernels::gemm(av, g, gb->data(), k, m, n, true, false, true);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) dim_error("bmm", a.shape(), b.shape());
  const std::size_t batch = a.dim(0);
  const std::size_t m = ta ? a.dim(2) : a.dim(1);
  const std::size_t k = ta ? a.dim(1) : a.dim(2);
  const std::size_t kb = tb ? b.dim(2) : b.dim(1);
  const std::size_t n = tb ? b.dim(1) : b.dim(2);
  if (k != kb) dim_error("bmm", a.shape(), b.shape());
  std::vector<double> out(batch * m * n);
  kernels::bgemm(a.data().data(), b.data().data(), out.data(), batch, m, k, n, ta, tb, false);
  return make_op_result("bmm", {batch, m, n}, std::move(out), {a, b}, [=](TensorNode& self) {
    const double* g = self.grad.data();
    const double* av = self.inputs[0]->value.data();
    const double* bv = self.inputs[1]->value.data();
    if (auto* ga = input_grad(self, 0)) {
      if (!ta)
        kernels::bgemm(g, bv, ga->data(), batch, m, n, k, false, !tb, true);
      else
        kernels::bgemm(bv, g, ga->data(), batch, k, n, m, tb, true, true);
    }
    if (auto* gb = input_grad(self, 1)) {
      if (!tb)
        kernels::bgemm(av, g, gb->data(), batch, k, m, n, !ta, false, true);
      else
        kernels::bgemm(g, av, gb->data(), batch, n, m, k, true, ta, true);
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) dim_error("transpose", "expected 2-D, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const auto& v = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return make_op_result("transpose", {c, r}, std::move(out), {a}, [r, c](TensorNode& self) {
    if (auto* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += self.grad[j * r + i];
  });
}

std::shared_ptr<const SparseOperator> SparseOperator::make(kernels::Csr csr) {
  auto op = std::make_shared<SparseOperator>();
  op->adjoint = csr.transposed();
  op->forward = std::move(csr);
  return op;
}

Tensor spmm(const std::shared_ptr<const SparseOperator>& s, const Tensor& x) {
  if (x.rank() < 1 || x.dim(0) != s->forward.cols)
    dim_error("spmm", "operator has " + std::to_string(s->forward.cols) + " columns, input " +
                          shape_str(x.shape()));
  const std::size_t width = row_width(x.shape());
  Shape shape = x.shape();
  shape[0] = s->forward.rows;
  std::vector<double> out(s->forward.rows * width);
  kernels::spmm(s->forward, x.data().data(), out.data(), width, false);
  return make_op_result("spmm", std::move(shape), std::move(out), {x}, [s, width](TensorNode& self) {
    if (auto* gx = input_grad(self, 0)) kernels::spmm(s->adjoint, self.grad.data(), gx->data(), width, true);
  });
}

// ---------------------------------------------------------------------------
// broadcasting binary ops

namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa, sb;  // strides aligned to `out`, 0 on broadcast axes
};

std::vector<std::size_t> aligned_strides(const Shape& in, std::size_t rank) {
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t j = in.size(); j-- > 0;) {
    const std::size_t k = rank - in.size() + j;
    strides[k] = in[j] == 1 ? 0 : stride;
    stride *= in[j];
  }
  return strides;
}

Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast bc;
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k + a.size() >= rank ? a[k + a.size() - rank] : 1;
    const std::size_t db = k + b.size() >= rank ? b[k + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) dim_error(op, a, b);
    bc.out[k] = std::max(da, db);
    if (da == 0 || db == 0) bc.out[k] = 0;
  }
  bc.sa = aligned_strides(a, rank);
  bc.sb = aligned_strides(b, rank);
  return bc;
}

template <class F>
void broadcast_loop(const Broadcast& bc, F&& f) {
  const std::size_t rank = bc.out.size();
  const std::size_t n = shape_numel(bc.out);
  if (n == 0) return;
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t inner = bc.out[rank - 1];
  const std::size_t sai = bc.sa[rank - 1], sbi = bc.sb[rank - 1];
  for (std::size_t i = 0; i < n;) {
    for (std::size_t j = 0; j < inner; ++j, ++i) f(i, ia + j * sai, ib + j * sbi);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      ia += bc.sa[d];
      ib += bc.sb[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.sa[d] * bc.out[d];
      ib -= bc.sb[d] * bc.out[d];
      idx[d] = 0;
    }
  }
}

// fwd(x, y) -> value; da(g, x, y) / db(g, x, y) -> input adjoint contributions.
template <class Fwd, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  if (a.shape() == b.shape()) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
    return make_op_result(op, a.shape(), std::move(out), {a, b}, [n, da, db](TensorNode& self) {
      const auto& x = self.inputs[0]->value;
      const auto& y = self.inputs[1]->value;
      const auto& g = self.grad;
      if (auto* ga = input_grad(self, 0))
        for (std::size_t i = 0; i < n; ++i) (*ga)[i] += da(g[i], x[i], y[i]);
      if (auto* gb = input_grad(self, 1))
        for (std::size_t i = 0; i < n; ++i) (*gb)[i] += db(g[i], x[i], y[i]);
    });
  }
  Broadcast bc = broadcast(op, a.shape(), b.shape());
  std::vector<double> out(shape_numel(bc.out));
  const auto& av = a.values();
  const auto& bv = b.values();
  broadcast_loop(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(av[ia], bv[ib]); });
  Shape shape = bc.out;
  return make_op_result(op, std::move(shape), std::move(out), {a, b},
                        [bc = std::move(bc), da, db](TensorNode& self) {
                          const auto& x = self.inputs[0]->value;
                          const auto& y = self.inputs[1]->value;
                          const auto& g = self.grad;
                          auto* ga = input_grad(self, 0);
                          auto* gb = input_grad(self, 1);
                          broadcast_loop(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                            if (ga) (*ga)[ia] += da(g[i], x[ia], y[ib]);
                            if (gb) (*gb)[ib] += db(g[i], x[ia], y[ib]);
                          });
                        });
}

template <class F, class D>
Tensor unary(const char* op, const Tensor& a, F f, D d) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i]);
  return make_op_result(op, a.shape(), std::move(out), {a}, [n, d](TensorNode& self) {
    if (auto* ga = input_grad(self, 0)) {
      const auto& x = self.inputs[0]->value;
      for (std::size_t i = 0; i < n; ++i) (*ga)[i] += self.grad[i] * d(x[i], self.value[i]);
    }
  });
}

double softplus_value(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; }, [](double g, double x, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Tensor ratio_or_zero(const Tensor& num, const Tensor& den) {
  if (num.shape() != den.shape()) dim_error("ratio_or_zero", num.shape(), den.shape());
  return binary(
      "ratio_or_zero", num, den, [](double x, double y) { return y == 0.0 ? 0.0 : x / y; },
      [](double g, double, double y) { return y == 0.0 ? 0.0 : g / y; },
      [](double g, double x, double y) { return y == 0.0 ? 0.0 : -g * x / (y * y); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      "softplus", a, softplus_value,
      [](double x, double) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_op_result("sum", {}, {s}, {a}, [](TensorNode& self) {
    if (auto* ga = input_grad(self, 0))
      for (double& g : *ga) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw UsageError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  if (axis >= a.rank()) dim_error("sum_axis", "axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
  const AxisView v = axis_view(a.shape(), axis);
  std::vector<double> out(v.outer * v.inner, 0.0);
  const auto& x = a.values();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t k = 0; k < v.n; ++k)
      for (std::size_t i = 0; i < v.inner; ++i) out[o * v.inner + i] += x[(o * v.n + k) * v.inner + i];
  Shape shape = a.shape();
  if (keepdim)
    shape[axis] = 1;
  else
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return make_op_result("sum_axis", std::move(shape), std::move(out), {a}, [v](TensorNode& self) {
    if (auto* ga = input_grad(self, 0))
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t k = 0; k < v.n; ++k)
          for (std::size_t i = 0; i < v.inner; ++i)
            (*ga)[(o * v.n + k) * v.inner + i] += self.grad[o * v.inner + i];
  });
}

Tensor mean_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  if (axis >= a.rank() || a.dim(axis) == 0) dim_error("mean_axis", "empty or missing axis in " + shape_str(a.shape()));
  return scale(sum_axis(a, axis, keepdim), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor softmax(const Tensor& a, std::size_t axis, const Mask* mask) {
  if (axis >= a.rank()) dim_error("softmax", "axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
  if (mask && mask->size() != a.numel())
    dim_error("softmax", "mask of " + std::to_string(mask->size()) + " entries for " + shape_str(a.shape()));
  const AxisView v = axis_view(a.shape(), axis);
  const auto& x = a.values();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * v.n + k) * v.inner + i; };
      double mx = -INFINITY;
      for (std::size_t k = 0; k < v.n; ++k)
        if (!mask || (*mask)[at(k)]) mx = std::max(mx, x[at(k)]);
      if (mx == -INFINITY) continue;
      double z = 0.0;
      for (std::size_t k = 0; k < v.n; ++k) {
        if (mask && !(*mask)[at(k)]) continue;
        out[at(k)] = std::exp(x[at(k)] - mx);
        z += out[at(k)];
      }
      for (std::size_t k = 0; k < v.n; ++k) out[at(k)] /= z;
    }
  }
  return make_op_result("softmax", a.shape(), std::move(out), {a}, [v](TensorNode& self) {
    auto* ga = input_grad(self, 0);
    if (!ga) return;
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        auto at = [&](std::size_t k) { return (o * v.n + k) * v.inner + i; };
        double dot = 0.0;
        for (std::size_t k = 0; k < v.n; ++k) dot += g[at(k)] * y[at(k)];
        for (std::size_t k = 0; k < v.n; ++k) (*ga)[at(k)] += y[at(k)] * (g[at(k)] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias) {
  if (a.rank() < 1) dim_error("layer_norm", "scalar input");
  const std::size_t n = a.shape().back();
  if (gain.numel() != n || bias.numel() != n) dim_error("layer_norm", a.shape(), gain.shape());
  const std::size_t rows = n == 0 ? 0 : a.numel() / n;
  const auto& x = a.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (xr[j] - mu) * inv_std[r];
      out[r * n + j] = xhat[r * n + j] * gv[j] + bv[j];
    }
  }
  return make_op_result(
      "layer_norm", a.shape(), std::move(out), {a, gain, bias},
      [n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& self) {
        const auto& g = self.grad;
        const auto& gv = self.inputs[1]->value;
        auto* gx = input_grad(self, 0);
        auto* gg = input_grad(self, 1);
        auto* gb = input_grad(self, 2);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double gj = g[r * n + j];
            if (gg) (*gg)[j] += gj * xhat[r * n + j];
            if (gb) (*gb)[j] += gj;
            dxhat[j] = gj * gv[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * xhat[r * n + j];
          }
          if (!gx) continue;
          const double scale_r = inv_std[r] / static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j)
            (*gx)[r * n + j] +=
                scale_r * (static_cast<double>(n) * dxhat[j] - s1 - xhat[r * n + j] * s2);
        }
      });
}

Tensor dropout(const Tensor& a, double p, bool train, StreamKey key) {
  if (p < 0.0 || p >= 1.0) throw UsageError("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) return a;
  const std::size_t n = a.numel();
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factor(n);
  for (std::size_t i = 0; i < n; ++i)
    factor[i] = to_unit(counter_hash(key.seed, key.stream, i)) >= p ? keep_scale : 0.0;
  std::vector<double> out(n);
  const auto& x = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * factor[i];
  return make_op_result("dropout", a.shape(), std::move(out), {a}, [factor = std::move(factor)](TensorNode& self) {
    if (auto* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < factor.size(); ++i) (*ga)[i] += self.grad[i] * factor[i];
  });
}

// ---------------------------------------------------------------------------
// segment ops

namespace {

std::size_t check_segments(const char* op, const Tensor& values, const Index& ids, std::size_t segments) {
  if (values.rank() < 1 || values.dim(0) != ids.size())
    dim_error(op, "values " + shape_str(values.shape()) + " with " + std::to_string(ids.size()) + " ids");
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= segments)
      dim_error(op, "segment id " + std::to_string(id) + " outside [0," + std::to_string(segments) + ")");
  return row_width(values.shape());
}

Shape segment_shape(const Tensor& values, std::size_t segments) {
  Shape s = values.shape();
  s[0] = segments;
  return s;
}

Tensor segment_extreme(const char* op, const Tensor& values, const Index& ids, std::size_t segments,
                       bool take_max) {
  const std::size_t w = check_segments(op, values, ids, segments);
  const auto& x = values.values();
  std::vector<double> out(segments * w, 0.0);
  std::vector<std::int64_t> arg(segments * w, -1);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t s = static_cast<std::size_t>(ids[r]);
    for (std::size_t j = 0; j < w; ++j) {
      const double v = x[r * w + j];
      auto& a = arg[s * w + j];
      if (a < 0 || (take_max ? v > out[s * w + j] : v < out[s * w + j])) {
        out[s * w + j] = v;
        a = static_cast<std::int64_t>(r);
      }
    }
  }
  return make_op_result(op, segment_shape(values, segments), std::move(out), {values},
                        [w, arg = std::move(arg)](TensorNode& self) {
                          if (auto* gx = input_grad(self, 0))
                            for (std::size_t k = 0; k < arg.size(); ++k)
                              if (arg[k] >= 0) (*gx)[static_cast<std::size_t>(arg[k]) * w + k % w] += self.grad[k];
                        });
}

}  // namespace

Tensor segment_sum(const Tensor& values, const Index& ids, std::size_t segments) {
  const std::size_t w = check_segments("segment_sum", values, ids, segments);
  const auto& x = values.values();
  std::vector<double> out(segments * w, 0.0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t s = static_cast<std::size_t>(ids[r]);
    for (std::size_t j = 0; j < w; ++j) out[s * w + j] += x[r * w + j];
  }
  return make_op_result("segment_sum", segment_shape(values, segments), std::move(out), {values},
                        [w, ids](TensorNode& self) {
                          if (auto* gx = input_grad(self, 0))
                            for (std::size_t r = 0; r < ids.size(); ++r) {
                              const std::size_t s = static_cast<std::size_t>(ids[r]);
                              for (std::size_t j = 0; j < w; ++j) (*gx)[r * w + j] += self.grad[s * w + j];
                            }
                        });
}

Tensor segment_mean(const Tensor& values, const Index& ids, std::size_t segments) {
  const std::size_t w = check_segments("segment_mean", values, ids, segments);
  std::vector<double> count(segments, 0.0);
  for (auto id : ids) count[static_cast<std::size_t>(id)] += 1.0;
  std::vector<double> inv(segments * w);
  for (std::size_t s = 0; s < segments; ++s)
    for (std::size_t j = 0; j < w; ++j) inv[s * w + j] = count[s] > 0 ? 1.0 / count[s] : 0.0;
  return mul(segment_sum(values, ids, segments), Tensor::from(segment_shape(values, segments), std::move(inv)));
}

Tensor segment_max(const Tensor& values, const Index& ids, std::size_t segments) {
  return segment_extreme("segment_max", values, ids, segments, true);
}

Tensor segment_min(const Tensor& values, const Index& ids, std::size_t segments) {
  return segment_extreme("segment_min", values, ids, segments, false);
}

Tensor segment_std(const Tensor& values, const Index& ids, std::size_t segments) {
  const std::size_t w = check_segments("segment_std", values, ids, segments);
  const auto& x = values.values();
  std::vector<double> count(segments, 0.0);
  for (auto id : ids) count[static_cast<std::size_t>(id)] += 1.0;
  std::vector<double> mu(segments * w, 0.0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t s = static_cast<std::size_t>(ids[r]);
    for (std::size_t j = 0; j < w; ++j) mu[s * w + j] += x[r * w + j];
  }
  for (std::size_t s = 0; s < segments; ++s)
    for (std::size_t j = 0; j < w; ++j)
      if (count[s] > 0) mu[s * w + j] /= count[s];
  std::vector<double> var(segments * w, 0.0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t s = static_cast<std::size_t>(ids[r]);
    for (std::size_t j = 0; j < w; ++j) {
      const double d = x[r * w + j] - mu[s * w + j];
      var[s * w + j] += d * d;
    }
  }
  std::vector<double> out(segments * w, 0.0);
  for (std::size_t s = 0; s < segments; ++s)
    for (std::size_t j = 0; j < w; ++j)
      if (count[s] > 0) out[s * w + j] = std::sqrt(std::max(var[s * w + j] / count[s], 0.0));
  return make_op_result("segment_std", segment_shape(values, segments), std::move(out), {values},
                        [w, ids, count = std::move(count), mu = std::move(mu)](TensorNode& self) {
                          auto* gx = input_grad(self, 0);
                          if (!gx) return;
                          const auto& x = self.inputs[0]->value;
                          for (std::size_t r = 0; r < ids.size(); ++r) {
                            const std::size_t s = static_cast<std::size_t>(ids[r]);
                            for (std::size_t j = 0; j < w; ++j) {
                              const double sd = self.value[s * w + j];
                              if (sd <= 0.0) continue;
                              (*gx)[r * w + j] +=
                                  self.grad[s * w + j] * (x[r * w + j] - mu[s * w + j]) / (count[s] * sd);
                            }
                          }
                        });
}

Tensor segment_softmax(const Tensor& values, const Index& ids, std::size_t segments) {
  const std::size_t w = check_segments("segment_softmax", values, ids, segments);
  const auto& x = values.values();
  std::vector<double> mx(segments * w, -INFINITY);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t s = static_cast<std::size_t>(ids[r]);
    for (std::size_t j = 0; j < w; ++j) mx[s * w + j] = std::max(mx[s * w + j], x[r * w + j]);
  }
  std::vector<double> out(x.size());
  std::vector<double> z(segments * w, 0.0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t s = static_cast<std::size_t>(ids[r]);
    for (std::size_t j = 0; j < w; ++j) {
      out[r * w + j] = std::exp(x[r * w + j] - mx[s * w + j]);
      z[s * w + j] += out[r * w + j];
    }
  }
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t s = static_cast<std::size_t>(ids[r]);
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] /= z[s * w + j];
  }
  return make_op_result("segment_softmax", values.shape(), std::move(out), {values},
                        [w, ids, segments](TensorNode& self) {
                          auto* gx = input_grad(self, 0);
                          if (!gx) return;
                          const auto& y = self.value;
                          const auto& g = self.grad;
                          std::vector<double> dot(segments * w, 0.0);
                          for (std::size_t r = 0; r < ids.size(); ++r) {
                            const std::size_t s = static_cast<std::size_t>(ids[r]);
                            for (std::size_t j = 0; j < w; ++j) dot[s * w + j] += g[r * w + j] * y[r * w + j];
                          }
                          for (std::size_t r = 0; r < ids.size(); ++r) {
                            const std::size_t s = static_cast<std::size_t>(ids[r]);
                            for (std::size_t j = 0; j < w; ++j)
                              (*gx)[r * w + j] += y[r * w + j] * (g[r * w + j] - dot[s * w + j]);
                          }
                        });
}

// ---------------------------------------------------------------------------
// structural

Tensor gather_rows(const Tensor& a, const Index& index) {
  if (a.rank() < 1) dim_error("gather_rows", "scalar input");
  const std::size_t rows = a.dim(0);
  const std::size_t w = row_width(a.shape());
  for (auto i : index)
    if (i >= static_cast<std::int64_t>(rows))
      dim_error("gather_rows", "row " + std::to_string(i) + " of " + shape_str(a.shape()));
  std::vector<double> out(index.size() * w, 0.0);
  const auto& x = a.values();
  for (std::size_t r = 0; r < index.size(); ++r)
    if (index[r] >= 0)
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(index[r]) * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(r * w));
  Shape shape = a.shape();
  shape[0] = index.size();
  return make_op_result("gather_rows", std::move(shape), std::move(out), {a}, [w, index](TensorNode& self) {
    if (auto* ga = input_grad(self, 0))
      for (std::size_t r = 0; r < index.size(); ++r)
        if (index[r] >= 0) {
          const std::size_t src = static_cast<std::size_t>(index[r]) * w;
          for (std::size_t j = 0; j < w; ++j) (*ga)[src + j] += self.grad[r * w + j];
        }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) dim_error("concat", "no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) dim_error("concat", "axis " + std::to_string(axis) + " of " + shape_str(ref));
  Shape shape = ref;
  shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) dim_error("concat", ref, p.shape());
    for (std::size_t k = 0; k < ref.size(); ++k)
      if (k != axis && p.dim(k) != ref[k]) dim_error("concat", ref, p.shape());
    shape[axis] += p.dim(axis);
  }
  const AxisView v = axis_view(shape, axis);
  std::vector<std::size_t> chunk(parts.size()), offset(parts.size());
  std::size_t acc = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    chunk[p] = parts[p].dim(axis) * v.inner;
    offset[p] = acc;
    acc += chunk[p];
  }
  std::vector<double> out(shape_numel(shape));
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& x = parts[p].values();
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * chunk[p]), chunk[p],
                  out.begin() + static_cast<std::ptrdiff_t>(o * acc + offset[p]));
  }
  return make_op_result("concat", std::move(shape), std::move(out), parts,
                        [v, acc, chunk, offset](TensorNode& self) {
                          for (std::size_t p = 0; p < chunk.size(); ++p) {
                            auto* gp = input_grad(self, p);
                            if (!gp) continue;
                            for (std::size_t o = 0; o < v.outer; ++o)
                              for (std::size_t j = 0; j < chunk[p]; ++j)
                                (*gp)[o * chunk[p] + j] += self.grad[o * acc + offset[p] + j];
                          }
                        });
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank() || start + length > a.dim(axis))
    dim_error("narrow", "range [" + std::to_string(start) + "," + std::to_string(start + length) + ") on axis " +
                            std::to_string(axis) + " of " + shape_str(a.shape()));
  const AxisView v = axis_view(a.shape(), axis);
  Shape shape = a.shape();
  shape[axis] = length;
  const std::size_t chunk = length * v.inner;
  const std::size_t full = v.n * v.inner;
  const std::size_t off = start * v.inner;
  std::vector<double> out(v.outer * chunk);
  const auto& x = a.values();
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * full + off), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  return make_op_result("narrow", std::move(shape), std::move(out), {a}, [v, chunk, full, off](TensorNode& self) {
    if (auto* ga = input_grad(self, 0))
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t j = 0; j < chunk; ++j) (*ga)[o * full + off + j] += self.grad[o * chunk + j];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) dim_error("reshape", a.shape(), shape);
  std::vector<double> out = a.values();
  return make_op_result("reshape", std::move(shape), std::move(out), {a}, [](TensorNode& self) {
    if (auto* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) dim_error("linear", x.shape(), w.shape());
  const std::size_t in = w.dim(0), outw = w.dim(1);
  if (b && b->numel() != outw) dim_error("linear", w.shape(), b->shape());
  const std::size_t rows = in == 0 ? 0 : x.numel() / in;
  std::vector<double> out(rows * outw);
  kernels::gemm(x.data().data(), w.data().data(), out.data(), rows, in, outw, false, false, false);
  if (b) {
    const auto& bv = b->values();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < outw; ++j) out[r * outw + j] += bv[j];
  }
  Shape shape = x.shape();
  shape.back() = outw;
  std::vector<Tensor> inputs{x, w};
  if (b) inputs.push_back(*b);
  return make_op_result("linear", std::move(shape), std::move(out), inputs, [rows, in, outw](TensorNode& self) {
    const double* g = self.grad.data();
    if (auto* gx = input_grad(self, 0))
      kernels::gemm(g, self.inputs[1]->value.data(), gx->data(), rows, outw, in, false, true, true);
    if (auto* gw = input_grad(self, 1))
      kernels::gemm(self.inputs[0]->value.data(), g, gw->data(), in, rows, outw, true, false, true);
    if (self.inputs.size() > 2)
      if (auto* gb = input_grad(self, 2))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < outw; ++j) (*gb)[j] += g[r * outw + j];
  });
}

}  // namespace hifdta
