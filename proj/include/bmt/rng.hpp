#pragma once

// Counter-based SplitMix64 stream. Sample k of a stream with key K is
// mix64(K + (k+1) * 0x9E3779B97F4A7C15), so a stream is fully described by
// (key, counter) and reproduces bit-for-bit on every platform. Child streams
// come from split(), which hashes the parent key with a stream id.
//
// All distributions below are implemented here rather than through
// <random>'s distribution classes, whose algorithms are implementation-defined.

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace bmt {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Independent child stream. Does not advance this stream.
  Rng split(std::uint64_t stream) const {
    Rng child;
    child.key_ = mix64(key_ ^ mix64(stream + 0xBB67AE8584CAA73BULL));
    child.counter_ = 0;
    return child;
  }
  Rng split(std::string_view tag) const { return split(fnv1a(tag)); }

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Unbiased (rejection on the top band).
  std::uint64_t uniform_int(std::uint64_t n);

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller (one variate per call, two draws).
  double normal();
  double gamma(double shape);
  std::uint64_t poisson(double mean);
  /// Negative binomial parameterised by mean and dispersion (gamma shape) r.
  std::uint64_t negative_binomial(double mean, double dispersion);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  static constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ULL;
    }
    return h;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace bmt
