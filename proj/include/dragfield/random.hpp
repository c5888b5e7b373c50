#pragma once

#include <cstdint>
#include <string_view>

namespace dragfield {

/// splitmix64 finalizer; a bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t x);

/// Hash of a key tuple. Order matters.
std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// FNV-1a over bytes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Uniform in the open interval (0, 1), keyed by (seed, counter).
double counter_uniform(std::uint64_t seed, std::uint64_t counter);

/// Standard normal keyed by (seed, counter). Stateless, so draws do not
/// depend on evaluation order.
double counter_normal(std::uint64_t seed, std::uint64_t counter);

}  // namespace dragfield
