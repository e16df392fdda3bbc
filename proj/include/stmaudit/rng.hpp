#ifndef STMAUDIT_RNG_HPP_
#define STMAUDIT_RNG_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace stmaudit {

// Seeded generator with hand-rolled distributions. std::mt19937_64 output is
// pinned by the standard, and the transforms below avoid the
// implementation-defined std::*_distribution classes, so streams are
// bit-identical across platforms and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);

  /// Standard normal via Box-Muller (no cached second variate).
  double normal();

  /// Gamma(shape, scale) via Marsaglia-Tsang; shape > 0.
  double gamma(double shape, double scale);

  /// Poisson via Knuth's product method; valid for mean up to ~700.
  int poisson(double mean);

  /// Index draw from an unnormalized nonnegative weight vector.
  std::size_t categorical(std::span<const double> weights);

  /// Fisher-Yates shuffle with uniform_below.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Derives a stage- or item-specific seed from a base seed. Used so that one
/// top-level seed reproduces every stage of a run.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace stmaudit

#endif  // STMAUDIT_RNG_HPP_
