#include "hifdta/kernels.hpp"

#include <algorithm>
#include <numeric>

namespace hifdta::kernels {

namespace {

constexpr std::size_t kRowBlock = 16;

// Straight triple loop; the reference every other path is checked against.
void gemm_reference(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        sum += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 4;
constexpr std::size_t kDepthBlock = 256;

// C += op(A) B for B in K x N layout. Each row block of A is packed per
// depth block into a p-major panel, then 4 x 4 accumulator tiles sweep it;
// edge tiles fall back to a scalar loop. Row blocks are owned by one thread
// and every C entry sums in a fixed order, so results do not depend on the
// thread count.
void gemm_tiled(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                bool trans_a, bool parallel) {
  const std::size_t row_blocks = (m + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static) if (parallel && row_blocks > 1)
  for (std::size_t blk = 0; blk < row_blocks; ++blk) {
    const std::size_t i_begin = blk * kRowBlock, i_end = std::min(m, i_begin + kRowBlock);
    const std::size_t height = i_end - i_begin;
    double panel[kDepthBlock * kRowBlock];
    for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
      const std::size_t depth = std::min(k, p0 + kDepthBlock) - p0;
      for (std::size_t p = 0; p < depth; ++p)
        for (std::size_t r = 0; r < height; ++r)
          panel[p * kRowBlock + r] = trans_a ? a[(p0 + p) * m + i_begin + r] : a[(i_begin + r) * k + p0 + p];
      const double* bblock = b + p0 * n;
      for (std::size_t r0 = 0; r0 < height; r0 += kTileRows) {
        const std::size_t rows = std::min(kTileRows, height - r0);
        std::size_t j0 = 0;
        if (rows == kTileRows) {
          for (; j0 + kTileCols <= n; j0 += kTileCols) {
            double acc[kTileRows][kTileCols] = {};
            for (std::size_t p = 0; p < depth; ++p) {
              const double* av = panel + p * kRowBlock + r0;
              const double* bv = bblock + p * n + j0;
              for (std::size_t r = 0; r < kTileRows; ++r)
                for (std::size_t q = 0; q < kTileCols; ++q) acc[r][q] += av[r] * bv[q];
            }
            for (std::size_t r = 0; r < kTileRows; ++r)
              for (std::size_t q = 0; q < kTileCols; ++q) c[(i_begin + r0 + r) * n + j0 + q] += acc[r][q];
          }
        }
        for (std::size_t r = r0; r < r0 + rows; ++r) {
          double* crow = c + (i_begin + r) * n;
          for (std::size_t j = j0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t p = 0; p < depth; ++p) sum += panel[p * kRowBlock + r] * bblock[p * n + j];
            crow[j] += sum;
          }
        }
      }
    }
  }
}

}  // namespace

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate, Exec exec) {
  if (exec == Exec::Serial) {
    gemm_reference(a, b, c, m, k, n, trans_a, trans_b, accumulate);
    return;
  }
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  if (m == 0 || n == 0 || k == 0) return;
  if (trans_b) {
    std::vector<double> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_tiled(a, bt.data(), c, m, k, n, trans_a, true);
  } else {
    gemm_tiled(a, b, c, m, k, n, trans_a, true);
  }
}

void bgemm(const double* a, const double* b, double* c, std::size_t batch, std::size_t m, std::size_t k,
           std::size_t n, bool trans_a, bool trans_b, bool accumulate, Exec exec) {
  const std::size_t sa = m * k;
  const std::size_t sb = k * n;
  const std::size_t sc = m * n;
  if (exec == Exec::Serial) {
    for (std::size_t t = 0; t < batch; ++t)
      gemm_reference(a + t * sa, b + t * sb, c + t * sc, m, k, n, trans_a, trans_b, accumulate);
    return;
  }
#pragma omp parallel for schedule(static) if (batch > 1)
  for (std::size_t t = 0; t < batch; ++t) {
    double* ct = c + t * sc;
    if (!accumulate) std::fill(ct, ct + sc, 0.0);
    if (trans_b) {
      std::vector<double> bt(k * n);
      const double* bs = b + t * sb;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = bs[j * k + p];
      gemm_tiled(a + t * sa, bt.data(), ct, m, k, n, trans_a, false);
    } else {
      gemm_tiled(a + t * sa, b + t * sb, ct, m, k, n, trans_a, false);
    }
  }
}

Csr Csr::from_triplets(std::size_t rows, std::size_t cols, std::span<const std::size_t> r,
                       std::span<const std::size_t> c, std::span<const double> v) {
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return r[x] != r[y] ? r[x] < r[y] : c[x] < c[y];
  });
  Csr out;
  out.rows = rows;
  out.cols = cols;
  out.row_ptr.assign(rows + 1, 0);
  bool have_last = false;
  std::size_t last_r = 0, last_c = 0;
  for (std::size_t idx : order) {
    if (have_last && r[idx] == last_r && c[idx] == last_c) {
      out.values.back() += v[idx];
      continue;
    }
    out.col_idx.push_back(c[idx]);
    out.values.push_back(v[idx]);
    ++out.row_ptr[r[idx] + 1];
    have_last = true;
    last_r = r[idx];
    last_c = c[idx];
  }
  for (std::size_t i = 0; i < rows; ++i) out.row_ptr[i + 1] += out.row_ptr[i];
  return out;
}

Csr Csr::transposed() const {
  std::vector<std::size_t> rr, cc;
  rr.reserve(nnz());
  cc.reserve(nnz());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
      rr.push_back(col_idx[p]);
      cc.push_back(i);
    }
  return from_triplets(cols, rows, rr, cc, values);
}

void spmm(const Csr& s, const double* x, double* y, std::size_t width, bool accumulate, Exec exec) {
  const bool parallel = exec == Exec::Parallel;
#pragma omp parallel for schedule(static) if (parallel && s.rows > 64)
  for (std::size_t i = 0; i < s.rows; ++i) {
    double* yrow = y + i * width;
    if (!accumulate) std::fill(yrow, yrow + width, 0.0);
    for (std::size_t p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p) {
      const double w = s.values[p];
      const double* xrow = x + s.col_idx[p] * width;
      for (std::size_t j = 0; j < width; ++j) yrow[j] += w * xrow[j];
    }
  }
}

}  // namespace hifdta::kernels
