#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "dragfield/kernels.hpp"

namespace dragfield::simd {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const char* forced = std::getenv("DRAGFIELD_SIMD");
  if (forced != nullptr && std::string(forced) == "scalar") return &scalar_kernels();
  if (backend_available(Backend::Avx2)) return avx2_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
      return avx2_kernels() != nullptr && cpu_has_avx2();
  }
  return false;
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_backend(Backend backend) {
  if (!backend_available(backend)) {
    throw std::invalid_argument("SIMD backend not available: " + std::string(backend_name(backend)));
  }
  slot().store(backend == Backend::Avx2 ? avx2_kernels() : &scalar_kernels(),
               std::memory_order_release);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

}  // namespace dragfield::simd
