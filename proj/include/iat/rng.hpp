#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace iat {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream seed for (base, i, j, ...). Used to give every example its
// own generator so results do not depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> streams)
{
  std::uint64_t s = splitmix64(base);
  for (auto v : streams) {
    s = splitmix64(s ^ splitmix64(v + 0x632be59bd9b4e019ULL));
  }
  return s;
}

inline double uniform01(Rng &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline bool bernoulli(Rng &rng, double p) { return uniform01(rng) < p; }

// Uniform integer in [lo, hi].
template <typename Int>
Int uniform_int(Rng &rng, Int lo, Int hi)
{
  return std::uniform_int_distribution<Int>(lo, hi)(rng);
}

} // namespace iat
