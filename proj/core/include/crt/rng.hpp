#pragma once

#include <cstdint>
#include <string_view>

namespace crt {

// Counter-free splitmix64 generator. All randomness in the project flows
// through this type so runs are bit-reproducible across platforms; the
// standard-library distributions are implementation-defined and never used.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();

  // Uniform in [0,1) with 53 random mantissa bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n >= 1.
  int64_t uniform_int(int64_t n);
  // Standard normal via Box-Muller (no caching, two u64 draws per value).
  double normal();
  // Normal(0, sigma) rejected outside [-2 sigma, 2 sigma].
  double trunc_normal(double sigma);
  bool bernoulli(double p);

 private:
  uint64_t state_;
};

// Derives an independent named substream: hash of (seed, tag, indices).
// Same inputs always give the same stream.
uint64_t derive_seed(uint64_t seed, std::string_view tag);
uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a);
uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a, uint64_t b);

}  // namespace crt
