#pragma once

#include <cstdint>
#include <limits>

namespace gamvar {

/// Counter-based generator: output n of stream s under key k is a pure
/// function of (k, s, n). Each output is the SplitMix64 finalizer applied to
/// a Weyl sequence whose origin is derived from (key, stream), so distinct
/// replicates can draw from independent substreams in any order.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key, std::uint64_t stream = 0)
      : origin_(mix(key ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return at(counter_++); }

  /// Output at an absolute counter position; does not advance.
  result_type at(std::uint64_t n) const { return mix(origin_ + (n + 1) * kGolden); }

  std::uint64_t position() const { return counter_; }

  /// Uniform integer in [0, bound), bound > 0 (Lemire's method).
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; the paired variate is cached.
  double normal();

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t origin_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gamvar
