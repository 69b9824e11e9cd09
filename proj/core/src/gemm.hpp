#pragma once

// Small row-major GEMM kernels. Every output row is computed independently
// with a fixed accumulation order, so results for an example never depend on
// which other examples share the batch.

#include <cstddef>
#include <cstring>
#include <vector>

namespace archsim::detail {

/// C[m,n] (+)= A[m,k] * B[k,n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
                    bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  std::size_t i = 0;
  // Four rows share each load of B; each row still sums over p in order.
  for (; i + 4 <= m; i += 4) {
    float* __restrict c0 = c + i * n;
    float* __restrict c1 = c0 + n;
    float* __restrict c2 = c1 + n;
    float* __restrict c3 = c2 + n;
    const float* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const float* __restrict bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const float bv = bp[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    float* ci = c + i * n;
    const float* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = ai[p];
      const float* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

/// C[k,n] += A[m,k]^T * B[m,n]
inline void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* ai = a + i * k;
    const float* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = ai[p];
      if (av == 0.0f) continue;
      float* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

/// Transpose of a row-major [rows, cols] matrix.
inline std::vector<float> transpose(const float* a, std::size_t rows, std::size_t cols) {
  std::vector<float> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

/// C[m,n] (+)= A[m,k] * B[n,k]^T
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
                    bool accumulate) {
  const auto bt = transpose(b, n, k);
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

}  // namespace archsim::detail
