#pragma once

// Dense and sparse numeric kernels. Every kernel has an OpenMP path and a
// serial path; the serial path is the plain textbook loop and is kept as the
// reference the parallel path is tested and benchmarked against. Parallel
// loops partition output rows, so results do not depend on the thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hifdta::kernels {

enum class Exec { Serial, Parallel };

// C[M,N] (+)= op(A) * op(B), op(A) is M x K, op(B) is K x N.
// A is stored M x K (or K x M when trans_a), B is stored K x N (or N x K when trans_b).
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate, Exec exec = Exec::Parallel);

// Batched gemm over `batch` contiguous matrices.
void bgemm(const double* a, const double* b, double* c, std::size_t batch, std::size_t m, std::size_t k,
           std::size_t n, bool trans_a, bool trans_b, bool accumulate, Exec exec = Exec::Parallel);

// Compressed sparse rows.
struct Csr {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return col_idx.size(); }
  Csr transposed() const;

  // Builds from unsorted (row, col, value) triplets; duplicates are summed.
  static Csr from_triplets(std::size_t rows, std::size_t cols, std::span<const std::size_t> r,
                           std::span<const std::size_t> c, std::span<const double> v);
};

// Y[rows, width] (+)= S * X[cols, width]
void spmm(const Csr& s, const double* x, double* y, std::size_t width, bool accumulate,
          Exec exec = Exec::Parallel);

namespace serial {

inline void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                 bool trans_a, bool trans_b, bool accumulate) {
  kernels::gemm(a, b, c, m, k, n, trans_a, trans_b, accumulate, Exec::Serial);
}

inline void spmm(const Csr& s, const double* x, double* y, std::size_t width, bool accumulate) {
  kernels::spmm(s, x, y, width, accumulate, Exec::Serial);
}

}  // namespace serial

}  // namespace hifdta::kernels
