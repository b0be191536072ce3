#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace esmask {

// Counter-free splittable RNG. Every consumer derives an independent stream
// from a tuple of 64-bit identifiers (master seed, generation, sample index,
// purpose tag, ...), so a value is reproducible from its identifiers alone,
// on any thread, in any execution order.

constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t a) { return mix64(a); }

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t a, Rest... rest) {
  return mix64(a ^ derive_seed(static_cast<std::uint64_t>(rest)...));
}

// Purpose tags keep unrelated streams decorrelated even for equal seeds.
namespace stream_tag {
inline constexpr std::uint64_t kParamNoise = 0x70617261;
inline constexpr std::uint64_t kDataBatch = 0x64617461;
inline constexpr std::uint64_t kMaskSample = 0x6d61736b;
inline constexpr std::uint64_t kInit = 0x696e6974;
}  // namespace stream_tag

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection keeps the distribution exact.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; the spare value is cached so a vector of
  // d normals consumes ceil(d/2) uniform pairs deterministically.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace esmask
