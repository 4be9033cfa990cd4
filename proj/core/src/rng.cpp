#include "crt/rng.hpp"

#include <cmath>

#include "crt/error.hpp"

namespace crt {

namespace {
uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  return splitmix64(x);
}
}  // namespace

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t n) {
  if (n < 1) throw ContractError(msg("uniform_int: n must be >= 1, got ", n));
  // Modulo bias is < 2^-50 for desk-scale n; acceptable and branch-free.
  return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::trunc_normal(double sigma) {
  for (;;) {
    double v = normal() * sigma;
    if (v >= -2.0 * sigma && v <= 2.0 * sigma) return v;
  }
}

bool Rng::bernoulli(double p) { return uniform() < p; }

uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  return mix(seed, fnv1a(tag));
}
uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a) {
  return mix(derive_seed(seed, tag), a);
}
uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a, uint64_t b) {
  return mix(derive_seed(seed, tag, a), b);
}

}  // namespace crt
