#include "brafl/rng.hpp"

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include "brafl/core.hpp"

namespace brafl {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p));
  return h;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(derive_key({seed, stream_id})) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return boost::random::uniform_01<double>{}(engine_); }

double Rng::normal(double mean, double stddev) {
  return boost::random::normal_distribution<double>(mean, stddev)(engine_);
}

double Rng::gamma(double shape) {
  return boost::random::gamma_distribution<double>(shape, 1.0)(engine_);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw Error("Rng::index: empty range");
  return boost::random::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

std::vector<double> Rng::dirichlet(std::size_t n, double alpha) {
  if (!(alpha > 0.0)) throw Error("dirichlet: alpha must be positive");
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = gamma(alpha);
    total += x;
  }
  if (total <= 0.0) {
    // All gammas underflowed (tiny alpha): fall back to a single vertex.
    std::fill(p.begin(), p.end(), 0.0);
    p[index(n)] = 1.0;
    return p;
  }
  for (auto& x : p) x /= total;
  return p;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw Error("categorical: weights sum to zero");
  const double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding: return the last index with positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

double keyed_uniform(std::uint64_t key) noexcept {
  return static_cast<double>(mix64(key) >> 11) * 0x1.0p-53;
}

}  // namespace brafl
