#include <cmath>

#include "doctest.h"
#include "hifdta/gradcheck.hpp"
#include "hifdta/kernels.hpp"
#include "hifdta/sequence.hpp"
#include "support/random_tensors.hpp"

using namespace hifdta;
using hifdta::testing::random_tensor;
using hifdta::testing::weighted_sum;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Step-by-step LSTM with plain loops.
std::vector<double> lstm_oracle(const Tensor& gx, const Tensor& w, const std::vector<std::size_t>& lengths,
                                bool reverse) {
  const std::size_t B = gx.dim(0), T = gx.dim(1), H = w.dim(0);
  std::vector<double> out(B * T * H, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> h(H, 0.0), c(H, 0.0);
    for (std::size_t s = 0; s < lengths[b]; ++s) {
      const std::size_t t = reverse ? lengths[b] - 1 - s : s;
      std::vector<double> g(4 * H);
      for (std::size_t j = 0; j < 4 * H; ++j) {
        double acc = gx[(b * T + t) * 4 * H + j];
        for (std::size_t k = 0; k < H; ++k) acc += h[k] * w[k * 4 * H + j];
        g[j] = acc;
      }
      for (std::size_t k = 0; k < H; ++k) {
        const double i = sig(g[k]), f = sig(g[H + k]), gg = std::tanh(g[2 * H + k]), o = sig(g[3 * H + k]);
        c[k] = f * c[k] + i * gg;
        h[k] = o * std::tanh(c[k]);
        out[(b * T + t) * H + k] = h[k];
      }
    }
  }
  return out;
}

std::vector<double> ssm_oracle(const Tensor& x, const Tensor& delta, const Tensor& bi, const Tensor& co,
                               const Tensor& a, const Tensor& dskip, const Mask& mask) {
  const std::size_t B = x.dim(0), T = x.dim(1), D = x.dim(2), N = a.dim(1);
  std::vector<double> out(B * T * D, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> h(D * N, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      if (!mask[b * T + t]) continue;
      for (std::size_t c = 0; c < D; ++c) {
        const double dt = delta[(b * T + t) * D + c], xv = x[(b * T + t) * D + c];
        double y = dskip[c] * xv;
        for (std::size_t s = 0; s < N; ++s) {
          double& hs = h[c * N + s];
          hs = std::exp(dt * a[c * N + s]) * hs + dt * bi[(b * T + t) * N + s] * xv;
          y += co[(b * T + t) * N + s] * hs;
        }
        out[(b * T + t) * D + c] = y;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("lstm_scan matches a step-by-step oracle in both directions") {
  CounterRng rng(3, 0);
  const std::size_t B = 3, T = 5, H = 4;
  auto gx = random_tensor({B, T, 4 * H}, rng);
  auto w = random_tensor({H, 4 * H}, rng, -0.5, 0.5);
  std::vector<std::size_t> lengths{5, 2, 0};
  for (bool reverse : {false, true}) {
    auto expected = lstm_oracle(gx, w, lengths, reverse);
    for (auto exec : {kernels::Exec::Serial, kernels::Exec::Parallel}) {
      auto y = lstm_scan(gx, w, lengths, reverse, exec);
      REQUIRE(y.shape() == Shape{B, T, H});
      for (std::size_t i = 0; i < expected.size(); ++i) CHECK(y[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
    auto res = finite_diff_check([&] { return weighted_sum(lstm_scan(gx, w, lengths, reverse)); }, {gx, w});
    CHECK(res.max_rel_error < 1e-5);
  }
}

TEST_CASE("ssm_scan matches a loop oracle and finite differences") {
  CounterRng rng(4, 0);
  const std::size_t B = 2, T = 6, D = 3, N = 4;
  auto x = random_tensor({B, T, D}, rng);
  auto delta = random_tensor({B, T, D}, rng, 0.05, 1.0);
  auto bi = random_tensor({B, T, N}, rng);
  auto co = random_tensor({B, T, N}, rng);
  auto a = random_tensor({D, N}, rng, -2.0, -0.1);
  auto dskip = random_tensor({D}, rng);
  Mask mask{1, 1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 0};
  auto expected = ssm_oracle(x, delta, bi, co, a, dskip, mask);
  for (auto exec : {kernels::Exec::Serial, kernels::Exec::Parallel}) {
    auto y = ssm_scan(x, delta, bi, co, a, dskip, mask, exec);
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(y[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
  auto res = finite_diff_check(
      [&] { return weighted_sum(ssm_scan(x, delta, bi, co, a, dskip, mask)); }, {x, delta, bi, co, a, dskip});
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("parallel kernels agree with the serial reference") {
  CounterRng rng(5, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + rng.below(40), k = 1 + rng.below(40), n = 1 + rng.below(40);
    const bool ta = rng.below(2), tb = rng.below(2), acc = rng.below(2);
    std::vector<double> a(m * k), b(k * n), c1(m * n), c2;
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    for (auto& v : c1) v = rng.uniform(-1, 1);
    c2 = c1;
    kernels::serial::gemm(a.data(), b.data(), c1.data(), m, k, n, ta, tb, acc);
    kernels::gemm(a.data(), b.data(), c2.data(), m, k, n, ta, tb, acc, kernels::Exec::Parallel);
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng.below(30), cols = 1 + rng.below(30), width = 1 + rng.below(8);
    std::vector<std::size_t> r, c;
    std::vector<double> v;
    for (std::size_t e = 0; e < rows * 2; ++e) {
      r.push_back(rng.below(rows));
      c.push_back(rng.below(cols));
      v.push_back(rng.uniform(-1, 1));
    }
    auto csr = kernels::Csr::from_triplets(rows, cols, r, c, v);
    std::vector<double> x(cols * width), y1(rows * width), y2(rows * width), dense(rows * width, 0.0);
    for (auto& e : x) e = rng.uniform(-1, 1);
    for (std::size_t e = 0; e < r.size(); ++e)
      for (std::size_t w = 0; w < width; ++w) dense[r[e] * width + w] += v[e] * x[c[e] * width + w];
    kernels::serial::spmm(csr, x.data(), y1.data(), width, false);
    kernels::spmm(csr, x.data(), y2.data(), width, false, kernels::Exec::Parallel);
    for (std::size_t i = 0; i < dense.size(); ++i) {
      CHECK(y1[i] == doctest::Approx(dense[i]).epsilon(1e-12));
      CHECK(y2[i] == doctest::Approx(dense[i]).epsilon(1e-12));
    }
    auto tt = csr.transposed().transposed();
    CHECK(tt.row_ptr == csr.row_ptr);
    CHECK(tt.col_idx == csr.col_idx);
  }
}
