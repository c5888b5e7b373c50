#pragma once

// Data-parallel inner loops. Each kernel has a scalar reference
// implementation and, on x86-64, an AVX2 variant. The active table is picked
// once at startup from CPUID and can be overridden with DRAGFIELD_SIMD=scalar
// or set_backend().

#include <cstddef>
#include <string_view>

namespace dragfield::simd {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  Backend backend;

  float (*dot)(const float* a, const float* b, std::size_t n);

  // y += alpha * x
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);

  // c[i*ldc + j] = sum_k a[i*lda + k] * b[j*ldb + k], for i < m, j < n.
  void (*gemm_nt)(const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c,
                  std::size_t ldc, std::size_t m, std::size_t n, std::size_t k);

  // out[j] = 1 / sqrt((px[j]-hx)^2 + (py[j]-hy)^2), IEEE-exact in every
  // backend (no FMA, correctly rounded sqrt and divide). Zero distance gives +inf.
  void (*inverse_distances)(const double* px, const double* py, std::size_t n, double hx, double hy,
                            double* out);
};

const KernelTable& scalar_kernels();

/// nullptr when the backend was not compiled in.
const KernelTable* avx2_kernels();

bool backend_available(Backend backend);

/// Kernels currently in use.
const KernelTable& active();

/// Throws std::invalid_argument for an unavailable backend.
void set_backend(Backend backend);

std::string_view backend_name(Backend backend);

}  // namespace dragfield::simd
