#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace mexit {

/// Seeded random stream over std::mt19937_64 with in-house distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Unbiased (rejection sampling).
  std::size_t index(std::size_t n);

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  /// Forward Fisher-Yates: position i receives a uniform pick from [i, n).
  /// Only the first `steps` positions are drawn (all of them by default).
  template <typename T>
  void shuffle_prefix(std::span<T> items, std::size_t steps) {
    const std::size_t n = items.size();
    if (steps > n) steps = n;
    for (std::size_t i = 0; i < steps && i + 1 < n; ++i) {
      const std::size_t j = i + index(n - i);
      std::swap(items[i], items[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle_prefix(std::span<T>(items), items.size());
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Stable seed derivation from (master seed, role, indices). Same inputs give
/// the same seed on every platform and in every run.
std::uint64_t derive_seed(std::uint64_t master, std::string_view role,
                          std::initializer_list<std::uint64_t> indices = {});

}  // namespace mexit
