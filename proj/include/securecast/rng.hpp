#pragma once

// Bounded draws on top of std::mt19937_64. The standard distributions are
// implementation-defined, so they are avoided wherever traces must be
// reproducible across toolchains.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace securecast {

using Rng = std::mt19937_64;

/// Uniform integer in [0, bound). bound must be > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return x % bound;
}

/// Uniform integer in [lo, hi].
inline std::int64_t uniform_between(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo) + 1));
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline bool bernoulli(Rng& rng, double p) { return p > 0.0 && uniform01(rng) < p; }

/// Partial Fisher-Yates: moves a uniform k-subset (in draw order) to the front.
template <typename T>
void partial_shuffle(Rng& rng, std::span<T> items, std::size_t k) {
  for (std::size_t i = 0; i < k && i < items.size(); ++i) {
    const auto j = i + uniform_below(rng, items.size() - i);
    std::swap(items[i], items[j]);
  }
}

/// Derives an independent 64-bit seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index = 0);

}  // namespace securecast
