#pragma once

// Internal dense kernels. Row-major, explicit leading dimensions.
//
// Every output element is accumulated in plain index order
// (c + a0*b0 + a1*b1 + ...), exactly like the textbook triple loop, so the
// blocking below changes speed but never the bits of the result.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace zsl::kernels {

namespace detail {

inline constexpr std::size_t kMr = 8;
inline constexpr std::size_t kNr = 16;

// Unaligned, alias-safe 8-lane view for the register tile.
typedef double v8d __attribute__((vector_size(64), aligned(8), may_alias));

// Full kMr x kNr tile; accumulators stay in registers across the k loop.
inline void tile_full(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc, bool accumulate) {
  static_assert(kNr == 16);
  v8d acc[kMr][2];
  for (std::size_t r = 0; r < kMr; ++r) {
    if (accumulate) {
      acc[r][0] = *reinterpret_cast<const v8d*>(c + r * ldc);
      acc[r][1] = *reinterpret_cast<const v8d*>(c + r * ldc + 8);
    } else {
      acc[r][0] = v8d{};
      acc[r][1] = v8d{};
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const v8d b0 = *reinterpret_cast<const v8d*>(b + p * ldb);
    const v8d b1 = *reinterpret_cast<const v8d*>(b + p * ldb + 8);
    for (std::size_t r = 0; r < kMr; ++r) {
      const double ar = a[r * lda + p];
      acc[r][0] += ar * b0;
      acc[r][1] += ar * b1;
    }
  }
  for (std::size_t r = 0; r < kMr; ++r) {
    *reinterpret_cast<v8d*>(c + r * ldc) = acc[r][0];
    *reinterpret_cast<v8d*>(c + r * ldc + 8) = acc[r][1];
  }
}

inline void tile_edge(std::size_t mr, std::size_t nr, std::size_t k, const double* a, std::size_t lda,
                      const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  double acc[kMr][kNr];
  for (std::size_t r = 0; r < mr; ++r)
    for (std::size_t j = 0; j < nr; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    for (std::size_t r = 0; r < mr; ++r) {
      const double ar = a[r * lda + p];
      for (std::size_t j = 0; j < nr; ++j) acc[r][j] += ar * bp[j];
    }
  }
  for (std::size_t r = 0; r < mr; ++r)
    for (std::size_t j = 0; j < nr; ++j) c[r * ldc + j] = acc[r][j];
}

}  // namespace detail

// C[m x n] (+)= A[m x k] * B[k x n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  using detail::kMr;
  using detail::kNr;
  for (std::size_t i = 0; i < m; i += kMr) {
    const std::size_t mr = std::min(kMr, m - i);
    for (std::size_t j = 0; j < n; j += kNr) {
      const std::size_t nr = std::min(kNr, n - j);
      if (mr == kMr && nr == kNr) {
        detail::tile_full(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, accumulate);
      } else {
        detail::tile_edge(mr, nr, k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, accumulate);
      }
    }
  }
}

// out[cols x rows] = in[rows x cols]^T
inline void transpose(std::size_t rows, std::size_t cols, const double* in, std::size_t ldi, double* out) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * ldi + j];
}

// C[m x n] (+)= A[m x k] * B[n x k]^T, via a transposed copy of B.
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate,
                    std::vector<double>& scratch) {
  scratch.resize(k * n);
  transpose(n, k, b, ldb, scratch.data());
  gemm_nn(m, n, k, a, lda, scratch.data(), n, c, ldc, accumulate);
}

// C[k x n] += A[m x k]^T * B[m x n], via a transposed copy of A.
inline void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                        const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::vector<double> at(k * m);
  transpose(m, k, a, lda, at.data());
  gemm_nn(k, n, m, at.data(), m, b, ldb, c, ldc, true);
}

}  // namespace zsl::kernels
