#pragma once

#include <cstdint>

namespace nvtherm::rng {

// Counter-style stream derivation: mixes (master, index) into an independent
// 64-bit stream seed. Bijective per master, so distinct indices never collide.
std::uint64_t derive_stream(std::uint64_t master, std::uint64_t index);

// Small deterministic generator; the state advance and output mix are fixed
// here (not delegated to the standard library) so that byte-identical replay
// holds across platforms and toolchains.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();

private:
  std::uint64_t state_;
};

// Exact Poisson sampling: product-of-uniforms for small means, transformed
// rejection for large ones. mean must be finite and >= 0.
long long poisson(double mean, SplitMix64& gen);

}  // namespace nvtherm::rng
