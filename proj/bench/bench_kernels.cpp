// Serial reference vs OpenMP path for the hot kernels. Run with
// OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <vector>

#include "hifdta/kernels.hpp"
#include "hifdta/rng.hpp"
#include "hifdta/sequence.hpp"

using namespace hifdta;
using kernels::Exec;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t stream) {
  CounterRng rng(1, stream);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

Tensor random_tensor(Shape shape, std::uint64_t stream) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), random_values(n, stream));
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::Parallel : Exec::Serial; }

void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(1));
  auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    kernels::gemm(a.data(), b.data(), c.data(), n, n, n, false, false, false, exec_of(state));
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

void BM_Spmm(benchmark::State& state) {
  // Banded contact-like matrix: ~8 neighbours per row.
  const auto rows = static_cast<std::size_t>(state.range(1));
  const std::size_t width = 64;
  std::vector<std::size_t> r, c;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t off = 1; off <= 4; ++off) {
      if (i + off < rows) {
        r.push_back(i), c.push_back(i + off);
        r.push_back(i + off), c.push_back(i);
      }
    }
  std::vector<double> v(r.size(), 0.5);
  auto s = kernels::Csr::from_triplets(rows, rows, r, c, v);
  auto x = random_values(rows * width, 3);
  std::vector<double> y(rows * width);
  for (auto _ : state) {
    kernels::spmm(s, x.data(), y.data(), width, false, exec_of(state));
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_SsmScan(benchmark::State& state) {
  const std::size_t B = 8, T = static_cast<std::size_t>(state.range(1)), d = 64, n = 16;
  Tensor x = random_tensor({B, T, d}, 4), delta = random_tensor({B, T, d}, 5);
  for (auto& v : delta.mutable_data()) v = 0.1 + 0.05 * v;
  Tensor b_in = random_tensor({B, T, n}, 6), c_out = random_tensor({B, T, n}, 7);
  Tensor a = random_tensor({d, n}, 8);
  for (auto& v : a.mutable_data()) v = -1.0 - v * v;
  Tensor skip = random_tensor({d}, 9);
  Mask mask(B * T, 1);
  for (auto _ : state) benchmark::DoNotOptimize(ssm_scan(x, delta, b_in, c_out, a, skip, mask, exec_of(state)));
}

void BM_LstmScan(benchmark::State& state) {
  const std::size_t B = 16, T = static_cast<std::size_t>(state.range(1)), H = 32;
  Tensor gates = random_tensor({B, T, 4 * H}, 10), w_hh = random_tensor({H, 4 * H}, 11);
  for (auto& v : w_hh.mutable_data()) v *= 0.1;
  std::vector<std::size_t> lengths(B, T);
  for (auto _ : state) benchmark::DoNotOptimize(lstm_scan(gates, w_hh, lengths, false, exec_of(state)));
}

void exec_args(benchmark::internal::Benchmark* b, std::initializer_list<std::int64_t> sizes) {
  b->ArgNames({"parallel", "n"});
  for (auto n : sizes)
    for (std::int64_t par : {0, 1}) b->Args({par, n});
}

}  // namespace

BENCHMARK(BM_Gemm)->Apply([](auto* b) { exec_args(b, {64, 200, 400}); });
BENCHMARK(BM_Spmm)->Apply([](auto* b) { exec_args(b, {1000, 10000}); });
BENCHMARK(BM_SsmScan)->Apply([](auto* b) { exec_args(b, {100, 1000}); });
BENCHMARK(BM_LstmScan)->Apply([](auto* b) { exec_args(b, {30, 100}); });

BENCHMARK_MAIN();
