#include "nvtherm/rng.hpp"

#include <cmath>

#include "nvtherm/errors.hpp"

namespace nvtherm::rng {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_stream(std::uint64_t master, std::uint64_t index) {
  // Two mixing rounds; a single round leaves (master, index) pairs that
  // differ only in low bits visibly correlated.
  return mix64(mix64(master + kGolden) + index * kGolden);
}

std::uint64_t SplitMix64::next() {
  state_ += kGolden;
  return mix64(state_);
}

double SplitMix64::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

long long poisson(double mean, SplitMix64& gen) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw InvalidArgument("poisson: mean must be finite and non-negative");
  }
  if (mean == 0.0) return 0;

  if (mean < 10.0) {
    // Multiply uniforms until the product drops below exp(-mean).
    const double limit = std::exp(-mean);
    double prod = 1.0;
    long long k = -1;
    do {
      prod *= gen.uniform();
      ++k;
    } while (prod > limit);
    return k;
  }

  // Hoermann's PTRD transformed-rejection sampler; exact for mean >= 10.
  const double smu = std::sqrt(mean);
  const double b = 0.931 + 2.53 * smu;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mu = std::log(mean);

  for (;;) {
    double u = gen.uniform() - 0.5;
    double v = gen.uniform();
    double us = 0.5 - std::fabs(u);
    auto k = static_cast<long long>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
    if (us >= 0.07 && v <= v_r) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
    double rhs = static_cast<double>(k) * log_mu - mean - std::lgamma(static_cast<double>(k) + 1.0);
    if (lhs <= rhs) return k;
  }
}

}  // namespace nvtherm::rng
