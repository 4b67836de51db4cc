// Counter-based random stream: every draw is a pure function of
// (seed, stream id, counter), so runs replay bit-identically and
// distinct stream ids can never collide on counter space.
#pragma once

#include <cmath>
#include <cstdint>

namespace intradist {

inline constexpr double kPi = 3.14159265358979323846;

// SplitMix64 finalizer (Steele, Lea, Flood). Used as a mixing function.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : key_(splitmix64(splitmix64(seed) ^ (stream_id + 0x9e3779b97f4a7c15ull))),
        seed_(seed),
        stream_id_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  // Uniform in [0, 1), 53 mantissa bits. Pure integer arithmetic up to the
  // final scale, so the value is identical on any IEEE-754 platform.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Lemire multiply-shift; bias is O(n / 2^64).
  std::uint64_t next_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Always consumes exactly two draws.
  double next_gaussian() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Unit-rate exponential draw, used for Dirichlet sampling in tests.
  double next_exponential() {
    const double u = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    return -std::log(u);
  }

 private:
  std::uint64_t key_;
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
};

// Stream id for the dropout masks of a given (step, pass). Perfect hash for
// pass < 64, so masks differ across passes and steps by construction.
constexpr std::uint64_t mask_stream_id(std::int64_t step, int pass) {
  return (static_cast<std::uint64_t>(step) << 6) | static_cast<std::uint64_t>(pass);
}

}  // namespace intradist
