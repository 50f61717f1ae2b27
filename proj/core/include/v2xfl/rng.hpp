#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace v2xfl {

/// Stateless 64-bit mixer (SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a, used for hashing tags and config text.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {
template <typename Key>
constexpr std::uint64_t seed_component(const Key& key) noexcept {
  if constexpr (std::is_convertible_v<const Key&, std::string_view>) {
    return fnv1a64(std::string_view{key});
  } else {
    return static_cast<std::uint64_t>(key);
  }
}
}  // namespace detail

/// Derives an independent stream seed from a base seed and a key path, e.g.
/// derive_seed(master, "train", participant, round). Pure function of its
/// arguments, so streams do not depend on call order.
template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t base, const Keys&... keys) noexcept {
  std::uint64_t h = mix64(base);
  ((h = mix64(h ^ mix64(detail::seed_component(keys)))), ...);
  return h;
}

/// xoshiro256** generator with platform-independent distributions.
///
/// The standard library distributions are implementation-defined, so every
/// draw the simulator makes goes through the helpers here to keep traces
/// bit-identical across toolchains.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return next(); }
  std::uint64_t next() noexcept;

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_below(std::uint64_t bound) noexcept;
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }
  /// Standard normal deviate (Marsaglia polar method).
  double normal() noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// k distinct draws from items, in draw order (partial Fisher-Yates on a copy).
  template <typename T>
  std::vector<T> sample(std::span<const T> items, std::size_t k) {
    std::vector<T> pool(items.begin(), items.end());
    if (k > pool.size()) k = pool.size();
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace v2xfl
