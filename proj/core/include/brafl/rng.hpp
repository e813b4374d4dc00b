#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace brafl {

/// SplitMix64 finalizer; used to derive independent stream keys.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Folds a sequence of integers into a single 64-bit key.
std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept;

/// Deterministic random stream. Identical (seed, stream_id) pairs produce
/// identical sequences on every platform: the engine is mt19937_64 and the
/// distributions come from Boost.Random, whose algorithms are fixed.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double shape);
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  /// Draws p ~ Dirichlet(alpha * 1_n).
  std::vector<double> dirichlet(std::size_t n, double alpha);
  /// Categorical draw over (unnormalized) nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates with our own index draws: std::shuffle is not portable.
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

/// Counter-based uniform in [0,1): a pure function of its key.
double keyed_uniform(std::uint64_t key) noexcept;

}  // namespace brafl
