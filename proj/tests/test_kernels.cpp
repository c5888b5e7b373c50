#include <doctest.h>

#include <array>
#include <cmath>
#include <stdexcept>
#include <random>
#include <vector>

#include "dragfield/kernels.hpp"

using namespace dragfield::simd;

namespace {

std::vector<float> random_floats(std::mt19937& rng, std::size_t n) {
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("scalar table is always available") {
  CHECK(backend_available(Backend::Scalar));
  CHECK(scalar_kernels().backend == Backend::Scalar);
  CHECK(backend_name(Backend::Avx2) == "avx2");
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  const KernelTable* avx = avx2_kernels();
  if (!avx || !backend_available(Backend::Avx2)) {
    MESSAGE("AVX2 not available on this host; skipping equivalence");
    return;
  }
  const KernelTable& ref = scalar_kernels();
  std::mt19937 rng(11);

  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 64u, 257u}) {
    const auto a = random_floats(rng, n), b = random_floats(rng, n);
    const float r = ref.dot(a.data(), b.data(), n);
    const float v = avx->dot(a.data(), b.data(), n);
    double mag = 0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(double(a[i]) * b[i]);
    CHECK(std::abs(double(r) - v) <= 1e-5 * (1.0 + mag));

    auto y1 = random_floats(rng, n);
    auto y2 = y1;
    ref.axpy(0.37f, a.data(), y1.data(), n);
    avx->axpy(0.37f, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-6f * (1 + std::abs(y1[i])));
  }

  const std::array<std::array<std::size_t, 3>, 5> shapes{{{1, 1, 1}, {3, 5, 7}, {8, 9, 16}, {33, 17, 64}, {5, 4, 3}}};
  for (const auto& [m, n, k] : shapes) {
    const auto a = random_floats(rng, m * k), b = random_floats(rng, n * k);
    std::vector<float> c1(m * n), c2(c1.size());
    ref.gemm_nt(a.data(), k, b.data(), k, c1.data(), n, m, n, k);
    avx->gemm_nt(a.data(), k, b.data(), k, c2.data(), n, m, n, k);
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::abs(c1[i] - c2[i]) <= 1e-4f);
  }

  std::uniform_real_distribution<double> coord(-50, 50);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 100u}) {
    std::vector<double> px(n), py(n), o1(n), o2(n);
    for (std::size_t i = 0; i < n; ++i) px[i] = std::round(coord(rng)), py[i] = std::round(coord(rng));
    if (n > 2) px[2] = 1.0, py[2] = 2.0;  // zero distance
    ref.inverse_distances(px.data(), py.data(), n, 1.0, 2.0, o1.data());
    avx->inverse_distances(px.data(), py.data(), n, 1.0, 2.0, o2.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);  // bitwise
    if (n > 2) CHECK(std::isinf(o1[2]));
  }
}

TEST_CASE("backend can be forced to scalar and back") {
  const Backend before = active().backend;
  set_backend(Backend::Scalar);
  CHECK(active().backend == Backend::Scalar);
  if (backend_available(Backend::Avx2)) {
    set_backend(Backend::Avx2);
    CHECK(active().backend == Backend::Avx2);
  } else {
    CHECK_THROWS_AS(set_backend(Backend::Avx2), std::invalid_argument);
  }
  set_backend(before);
}
