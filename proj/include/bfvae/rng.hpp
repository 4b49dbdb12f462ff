#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "bfvae/tensor.hpp"

namespace bfvae {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a sub-stream identified by a tuple of indices. Work split across
/// threads draws from streams keyed by work item, never by thread.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t s = mix_seed(base);
  for (auto k : keys) s = mix_seed(s ^ mix_seed(k + 0x632be59bd9b4e019ULL));
  return s;
}

inline Tensor2 standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor2 t(rows, cols);
  for (double& v : t.data()) v = nd(rng);
  return t;
}

inline Tensor2 uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> ud(lo, hi);
  Tensor2 t(rows, cols);
  for (double& v : t.data()) v = ud(rng);
  return t;
}

}  // namespace bfvae
