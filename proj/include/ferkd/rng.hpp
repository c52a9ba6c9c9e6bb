#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace ferkd {

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Combines words into one key; used to derive independent streams
// (seed, image index, epoch, ...) without sharing generator state.
constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ (mix64(b) + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
}

// Counter-based generator: the i-th output is mix64(key + i * golden_gamma),
// i.e. SplitMix64 evaluated at an explicit counter. All samplers below are
// written out by hand (no <random> distributions) so a seed yields the same
// sequence on every platform and standard library.
class CounterRng {
 public:
  static constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

  explicit constexpr CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(hash_combine(mix64(seed), stream)) {}

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * golden_gamma);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) noexcept;

  // Standard normal via Box-Muller (one pair per call, second value dropped).
  double normal() noexcept;

  // Marsaglia-Tsang; shape > 0.
  double gamma(double shape) noexcept;

  double beta(double a, double b) noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ferkd
