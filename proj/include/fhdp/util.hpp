#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fhdp {

inline constexpr std::string_view kToolVersion = "fhdp 0.1.0";

/// FNV-1a 64-bit over a byte string; used to fingerprint config files.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string to_hex(std::uint64_t value);

/// Shortest decimal string that round-trips the double exactly; the one
/// float format used in every emitted file, so reruns are byte-identical.
std::string format_double(double value);

/// splitmix64 finalizer; decorrelates derived seeds from the master seed.
inline std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Named sub-stream of a master seed. Streams with distinct labels are
/// independent for all practical purposes and stable across runs.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
  return mix_seed(master ^ fnv1a64(stream));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view stream) {
  return std::mt19937_64(derive_seed(master, stream));
}

/// Thrown when the exhaustive oracle is asked for an instance beyond its
/// enumeration limits.
class oracle_limit_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when DQN training diverges or produces non-finite values.
class training_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fhdp
