#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "nvtherm/errors.hpp"
#include "nvtherm/rng.hpp"

using nvtherm::rng::derive_stream;
using nvtherm::rng::poisson;
using nvtherm::rng::SplitMix64;

TEST_CASE("generator reproduces the published reference sequence") {
  SplitMix64 gen(0);
  CHECK(gen.next() == 0xE220A8397B1DCDAFULL);
  CHECK(gen.next() == 0x6E789E6AA1B965F4ULL);
  CHECK(gen.next() == 0x06C45D188009454FULL);
  CHECK(gen.next() == 0xF88BB8A8724C81ECULL);
  CHECK(gen.next() == 0x1B39896A51A8749BULL);

  SplitMix64 gen42(42);
  CHECK(gen42.next() == 0xBDD732262FEB6E95ULL);
  CHECK(gen42.next() == 0x28EFE333B266F103ULL);
}

TEST_CASE("uniform stays in [0, 1) and fills the interval") {
  SplitMix64 gen(7);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = gen.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo < 1e-4);
  CHECK(hi > 1.0 - 1e-4);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("derived streams are distinct over a million indices") {
  std::vector<std::uint64_t> seeds;
  seeds.reserve(1000000);
  for (std::uint64_t i = 0; i < 1000000; ++i) {
    seeds.push_back(derive_stream(0xDEADBEEFULL, i));
  }
  std::sort(seeds.begin(), seeds.end());
  CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
}

TEST_CASE("adjacent stream indices decorrelate about half the bits") {
  double total_flips = 0.0;
  int min_flips = 64;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto a = derive_stream(1, static_cast<std::uint64_t>(i));
    const auto b = derive_stream(1, static_cast<std::uint64_t>(i) + 1);
    const int flips = __builtin_popcountll(a ^ b);
    total_flips += flips;
    min_flips = std::min(min_flips, flips);
  }
  CHECK(total_flips / n == doctest::Approx(32.0).epsilon(0.02));
  CHECK(min_flips >= 10);
}

TEST_CASE("derived streams differ when the master seed changes") {
  CHECK(derive_stream(1, 0) != derive_stream(2, 0));
  CHECK(derive_stream(1, 5) != derive_stream(1, 6));
}

namespace {

// Exact Poisson pmf by upward recursion, for the chi-square reference.
std::vector<double> poisson_pmf(double mean, int k_max) {
  std::vector<double> pmf(static_cast<std::size_t>(k_max) + 1);
  pmf[0] = std::exp(-mean);
  for (int k = 1; k <= k_max; ++k) {
    pmf[static_cast<std::size_t>(k)] = pmf[static_cast<std::size_t>(k) - 1] * mean / k;
  }
  return pmf;
}

void check_poisson_distribution(double mean, int draws, std::uint64_t seed) {
  SplitMix64 gen(seed);
  const double sd = std::sqrt(mean);
  const int k_lo = std::max(0, static_cast<int>(mean - 6.0 * sd));
  const int k_hi = static_cast<int>(mean + 6.0 * sd) + 2;
  std::vector<double> observed(static_cast<std::size_t>(k_hi - k_lo) + 2, 0.0);

  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const auto k = poisson(mean, gen);
    CHECK(k >= 0);
    sum += static_cast<double>(k);
    sum_sq += static_cast<double>(k) * static_cast<double>(k);
    const int idx = std::clamp(static_cast<int>(k) - k_lo, -1,
                               static_cast<int>(observed.size()) - 2);
    observed[static_cast<std::size_t>(idx + 1)] += 1.0;  // slot 0 = underflow
  }
  const double m_hat = sum / draws;
  const double v_hat = sum_sq / draws - m_hat * m_hat;
  // sample mean of n draws scatters by sd/sqrt(n); allow 5 sigma
  CHECK(std::abs(m_hat - mean) < 5.0 * sd / std::sqrt(static_cast<double>(draws)));
  CHECK(v_hat / mean == doctest::Approx(1.0).epsilon(0.05));

  // Chi-square against the exact pmf, merging bins below 10 expected counts
  // into the tails. 6-sigma coverage leaves ~50-70 bins; the 99.9% quantile
  // of chi-square with k dof is below k + 4 sqrt(2k) + 8 for k >= 5.
  const auto pmf = poisson_pmf(mean, k_hi);
  double chi2 = 0.0;
  int dof = 0;
  double pending_obs = observed[0], pending_exp = 0.0;
  for (int k = 0; k < k_lo; ++k) pending_exp += pmf[static_cast<std::size_t>(k)] * draws;
  for (int k = k_lo; k <= k_hi; ++k) {
    pending_obs += observed[static_cast<std::size_t>(k - k_lo) + 1];
    pending_exp += pmf[static_cast<std::size_t>(k)] * draws;
    if (pending_exp >= 10.0 && (k_hi - k) > 2) {
      chi2 += (pending_obs - pending_exp) * (pending_obs - pending_exp) / pending_exp;
      ++dof;
      pending_obs = pending_exp = 0.0;
    }
  }
  double tail_exp = draws;
  for (int k = k_lo; k <= k_hi; ++k) tail_exp -= pmf[static_cast<std::size_t>(k)] * draws;
  pending_exp += std::max(tail_exp, 0.0);
  if (pending_exp > 0.0) {
    chi2 += (pending_obs - pending_exp) * (pending_obs - pending_exp) / pending_exp;
    ++dof;
  }
  CHECK(dof >= 3);
  CHECK(chi2 < dof + 4.0 * std::sqrt(2.0 * dof) + 8.0);
}

}  // namespace

TEST_CASE("small-mean sampler follows the exact pmf") {
  check_poisson_distribution(0.35, 200000, 11);
  check_poisson_distribution(4.2, 200000, 12);
}

TEST_CASE("large-mean sampler follows the exact pmf") {
  check_poisson_distribution(10.0, 200000, 13);  // first mean on the PTRD path
  check_poisson_distribution(47.3, 200000, 14);
  check_poisson_distribution(415.0, 100000, 15);
}

TEST_CASE("poisson edge cases") {
  SplitMix64 gen(1);
  CHECK(poisson(0.0, gen) == 0);
  CHECK_THROWS_AS(poisson(-1.0, gen), nvtherm::InvalidArgument);
  CHECK_THROWS_AS(poisson(std::nan(""), gen), nvtherm::InvalidArgument);
}

TEST_CASE("identical seeds replay identical draws") {
  SplitMix64 a(987), b(987);
  for (int i = 0; i < 1000; ++i) CHECK(poisson(7.7, a) == poisson(7.7, b));
}
