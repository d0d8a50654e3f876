#pragma once

#include <cmath>
#include <cstdint>

namespace trgame {

// Deterministic splitmix64 stream with hierarchical substream derivation.
//
// A stream is identified by its seed; child(tag) derives the seed of an
// independent substream as a pure function of (seed, tag), so any worker can
// reconstruct the stream for (role, index) without coordination.  Results are
// therefore independent of thread count and scheduling.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (cosine branch only; stateless per draw).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    // avoid log(0)
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t bounded(std::uint64_t n) {
    // multiply-shift; bias is negligible for the desk-scale n used here
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Derive an independent substream. Pure function of (seed, tag); does not
  /// depend on how far this stream has advanced.
  RngStream child(std::uint64_t tag) const {
    std::uint64_t z = seed_ ^ (0x9e3779b97f4a7c15ull * (tag + 0x632be59bd9b4e019ull));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return RngStream(z ^ (z >> 31));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

// Fixed role tags for substream derivation. Keeping them in one place ensures
// distinct components never share a stream by accident.
namespace rng_role {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kPgd = 4;
inline constexpr std::uint64_t kGamma = 5;
inline constexpr std::uint64_t kExample = 6;
inline constexpr std::uint64_t kTrial = 7;
inline constexpr std::uint64_t kEpoch = 8;
inline constexpr std::uint64_t kTest = 9;
}  // namespace rng_role

}  // namespace trgame
