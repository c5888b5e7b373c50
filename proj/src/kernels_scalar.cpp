#include <cmath>

#include "dragfield/kernels.hpp"

namespace dragfield::simd {
namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt_scalar(const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c,
                    std::size_t ldc, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* ai = a + i * lda;
    float* ci = c + i * ldc;
    for (std::size_t j = 0; j < n; ++j) ci[j] = dot_scalar(ai, b + j * ldb, k);
  }
}

void inverse_distances_scalar(const double* px, const double* py, std::size_t n, double hx,
                              double hy, double* out) {
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = px[j] - hx;
    const double dy = py[j] - hy;
    const double d2 = dx * dx + dy * dy;
    out[j] = 1.0 / std::sqrt(d2);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Backend::Scalar, dot_scalar, axpy_scalar, gemm_nt_scalar,
                                 inverse_distances_scalar};
  return table;
}

}  // namespace dragfield::simd
