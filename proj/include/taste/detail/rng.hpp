#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace taste::detail {

inline constexpr std::string_view kRngAlgorithm =
    "mt19937_64; streams seeded with splitmix64(seed + stream); bounded draws "
    "by rejection sampling";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Portable seeded RNG. std::mt19937_64 output is fixed by the standard, but
/// the std distributions are not, so bounded draws are done here.
class SeededRng {
public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(splitmix64(seed + stream)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::size_t below(std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Moves a uniform random k-subset to the front of `items` in draw order.
  template <typename T> void sample_prefix(std::vector<T> &items, std::size_t k) {
    const std::size_t n = items.size();
    for (std::size_t i = 0; i < k && i < n; ++i) {
      const std::size_t j = i + below(n - i);
      std::swap(items[i], items[j]);
    }
  }

  template <typename T> void shuffle(std::vector<T> &items) {
    sample_prefix(items, items.size());
  }

private:
  std::mt19937_64 engine_;
};

} // namespace taste::detail
