#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nargen {

// Error taxonomy shared across the library. The CLI maps these onto its
// stable exit codes (see tools/).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed and a list of words
// (tag, step, row, ...). Every random decision in the library is keyed this
// way, so outputs never depend on evaluation order or thread count.
template <class... Words>
std::uint64_t stream_seed(std::uint64_t base, Words... words) noexcept {
  std::uint64_t state = base;
  ((state = splitmix64(state) ^ static_cast<std::uint64_t>(words)), ...);
  return splitmix64(state);
}

// Stream tags keeping unrelated random decisions on disjoint streams.
namespace tag {
inline constexpr std::uint64_t init = 0xA1;
inline constexpr std::uint64_t corrupt_rate = 0xA2;
inline constexpr std::uint64_t corrupt_pos = 0xA3;
inline constexpr std::uint64_t unroll_sample = 0xA4;
inline constexpr std::uint64_t decode = 0xA5;
inline constexpr std::uint64_t batch = 0xA6;
inline constexpr std::uint64_t row = 0xA7;
inline constexpr std::uint64_t step = 0xA8;
inline constexpr std::uint64_t dropout = 0xA9;
inline constexpr std::uint64_t window = 0xAA;
inline constexpr std::uint64_t split = 0xAB;
inline constexpr std::uint64_t span = 0xAC;
}  // namespace tag

// Deterministic generator used everywhere instead of <random> distributions,
// whose output is not pinned down by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept { return splitmix64(state_); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n). Multiply-shift; the bias is < n * 2^-64.
  std::int64_t uniform_int(std::int64_t n) {
    if (n <= 0) throw ContractError("Rng::uniform_int: n must be positive");
    const auto wide = static_cast<unsigned __int128>(next_u64());
    return static_cast<std::int64_t>((wide * static_cast<unsigned __int128>(n)) >> 64);
  }

  // Standard normal via Box-Muller, one value per call.
  double normal() noexcept {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692 * u2);
  }

  // Poisson via inversion; fine for the small means used here.
  std::int64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double u = uniform();
    double p = std::exp(-mean);
    double cum = p;
    std::int64_t k = 0;
    while (u >= cum && k < 10'000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cum += p;
    }
    return k;
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used for checkpoint checksums and name-keyed init streams.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ull) noexcept {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) noexcept {
  return fnv1a64(s.data(), s.size());
}

}  // namespace nargen
