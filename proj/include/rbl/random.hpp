#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace rbl {

// SplitMix64 finalizer; a bijective avalanche mix of one 64-bit word.
std::uint64_t mix64(std::uint64_t x);

// Stable derivation of a child seed from a parent seed and a tuple of
// indices: h = mix64(parent); for each index i: h = mix64(h ^ mix64(i + c))
// with c = 0x9E3779B97F4A7C15. Independent of platform and call order.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> indices);

// 64-bit FNV-1a over the bytes of `s`.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL);

// One independent random stream. Uniforms use the top 53 bits of
// mt19937_64; normals use Box-Muller with both outputs consumed in order,
// so draw sequences are reproducible across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform();
  double normal();
  bool bernoulli(double p) { return p > 0.0 && uniform() < p; }
  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace rbl
