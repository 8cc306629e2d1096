#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace cim {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a sub-stream identified by integer coordinates.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t s = mix_seed(base);
  for (auto c : coords) s = mix_seed(s ^ mix_seed(c + 0x632be59bd9b4e019ULL));
  return s;
}

constexpr std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::vector<double> sample_dirichlet(Rng& rng, std::size_t k, double alpha = 1.0) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> v(k);
  double total = 0.0;
  for (auto& x : v) {
    x = gamma(rng);
    total += x;
  }
  for (auto& x : v) x /= total;
  return v;
}

}  // namespace cim
