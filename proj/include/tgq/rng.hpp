#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace tgq {

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(std::string_view bytes) noexcept;

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// xoshiro256** generator with portable distribution helpers.
///
/// The standard <random> distributions are implementation-defined, so every
/// distribution the project relies on for reproducibility is spelled out
/// here. Two Rng objects built from the same seed produce the same stream on
/// every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  /// Independent stream keyed by (seed, name), e.g. a parameter path or an
  /// item id. Construction order of other streams does not matter.
  static Rng stream(std::uint64_t seed, std::string_view name) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept;
  /// Standard normal via Box-Muller (one cached spare).
  double normal() noexcept;

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates shuffle driven by Rng::below, walking from the back.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.below(i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace tgq
