#pragma once

// Independent reference computations for the test suites. Everything here is
// deliberately written from first principles (closed forms, direct
// enumeration, exact integer arithmetic) rather than through the library's
// own code paths.

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "fragcoal/exact_oracle.hpp"
#include "fragcoal/kernel.hpp"
#include "fragcoal/stationary.hpp"

namespace oracles {

// Pure pairwise coalescence at unit rate from all-singletons:
// w_k(t) = (1 + t/2)^-2 (t / (2 + t))^(k-1).
inline double pure_coalescent_w(std::int64_t k, double t) {
  const double a = std::pow(1.0 + t / 2.0, -2.0);
  return a * std::pow(t / (2.0 + t), static_cast<double>(k - 1));
}

// Mean-field forest-fire stationary law (pair-merge case):
// p_k = 2 / (4^k k) * C(2k-2, k-1), as an exact reduced rational.
inline fragcoal::Rational128 pair_limit_reference_exact(std::int64_t k) {
  fragcoal::Rational128 r;
  r.num = fragcoal::detail::binomial_u128(2 * k - 2, k - 1);
  r.den = 1;
  r.mul_num(2);
  r.mul_den(static_cast<fragcoal::detail::u128>(k));
  for (std::int64_t i = 0; i < 2 * k; ++i) r.mul_den(2);
  r.reduce();
  return r;
}

// Exact k-merge total rate alpha * n^(1-k) * C(b, k) in integer arithmetic.
inline long double exact_merge_rate(double alpha, std::int64_t n, std::int64_t b,
                                    std::int64_t k) {
  if (k > b) return 0.0L;
  using u128 = unsigned __int128;
  u128 binom = 1;
  for (std::int64_t i = 1; i <= k; ++i) {
    binom = binom * static_cast<u128>(b - k + i);
    binom = binom / static_cast<u128>(i);  // exact at each step for C(b, <=i)
  }
  u128 npow = 1;
  for (std::int64_t i = 1; i < k; ++i) npow *= static_cast<u128>(n);
  return static_cast<long double>(alpha) * static_cast<long double>(binom) /
         static_cast<long double>(npow);
}

// --- generator built from the ordered-tuple expansion -----------------------
//
// The alternative route to the generator: sum over set partitions pi of
// {1..k} and over ordered tuples of *distinct* cluster sizes (one per block),
// weighting each term by the product of falling factorials of the size
// counts. Equivalent to the subset rule; kept brute force on purpose.

inline void set_partitions(std::int64_t k,
                           std::vector<std::vector<std::vector<std::int64_t>>>& out) {
  std::vector<std::vector<std::int64_t>> blocks;
  auto rec = [&](auto&& self, std::int64_t element) -> void {
    if (element == k) {
      out.push_back(blocks);
      return;
    }
    const std::size_t nblocks = blocks.size();  // recursion appends blocks
    for (std::size_t bi = 0; bi < nblocks; ++bi) {
      blocks[bi].push_back(element);
      self(self, element + 1);
      blocks[bi].pop_back();
    }
    blocks.push_back({element});
    self(self, element + 1);
    blocks.pop_back();
  };
  rec(rec, 0);
}

inline double falling_factorial(std::int64_t x, std::int64_t a) {
  double f = 1.0;
  for (std::int64_t i = 0; i < a; ++i) f *= static_cast<double>(x - i);
  return f;
}

inline fragcoal::GeneratorMatrix build_generator_tuple_form(
    std::int64_t n, const fragcoal::RateKernel& kernel) {
  fragcoal::GeneratorMatrix gen;
  gen.n = n;
  gen.lambda = kernel.lambda();
  gen.states = fragcoal::enumerate_partitions(n);
  const std::size_t dim = gen.states.size();
  gen.Q.assign(dim, std::vector<double>(dim, 0.0));

  for (std::size_t i = 0; i < dim; ++i) {
    const auto& from = gen.states[i];
    auto count_of = [&](std::int64_t size) -> std::int64_t {
      auto it = from.counts.find(size);
      return it == from.counts.end() ? 0 : it->second;
    };

    for (const auto& [k, a] : kernel.alpha_map()) {
      if (a <= 0.0) continue;
      double npow = 1.0;
      for (std::int64_t p = 1; p < k; ++p) npow *= static_cast<double>(n);
      double kfact = 1.0;
      for (std::int64_t p = 1; p <= k; ++p) kfact *= static_cast<double>(p);
      const double prefactor = a / (kfact * npow);

      std::vector<std::vector<std::vector<std::int64_t>>> partitions;
      set_partitions(k, partitions);
      for (const auto& pi : partitions) {
        const auto nblocks = static_cast<std::int64_t>(pi.size());
        // ordered tuples of pairwise-distinct sizes, one per block
        std::vector<std::int64_t> sizes(static_cast<std::size_t>(nblocks), 0);
        auto tuples = [&](auto&& self, std::int64_t block) -> void {
          if (block == nblocks) {
            double weight = prefactor;
            std::int64_t merged = 0;
            fragcoal::PartitionState to = from;
            for (std::int64_t bidx = 0; bidx < nblocks; ++bidx) {
              const auto mult = static_cast<std::int64_t>(pi[static_cast<std::size_t>(bidx)].size());
              const std::int64_t size = sizes[static_cast<std::size_t>(bidx)];
              weight *= falling_factorial(count_of(size), mult);
              merged += mult * size;
              auto it = to.counts.find(size);
              if (it == to.counts.end() || it->second < mult) {
                weight = 0.0;
                break;
              }
              it->second -= mult;
              if (it->second == 0) to.counts.erase(it);
            }
            if (weight != 0.0) {
              ++to.counts[merged];
              gen.Q[i][gen.index_of(to)] += weight;
            }
            return;
          }
          for (std::int64_t l = 1; l <= n; ++l) {
            bool used = false;
            for (std::int64_t prev = 0; prev < block; ++prev)
              if (sizes[static_cast<std::size_t>(prev)] == l) used = true;
            if (used) continue;
            sizes[static_cast<std::size_t>(block)] = l;
            self(self, block + 1);
          }
        };
        tuples(tuples, 0);
      }
    }

    if (kernel.lambda() > 0.0) {
      for (const auto& [size, mult] : from.counts) {
        if (size < 2) continue;
        fragcoal::PartitionState to = from;
        auto it = to.counts.find(size);
        it->second -= 1;
        if (it->second == 0) to.counts.erase(it);
        to.counts[1] += size;
        gen.Q[i][gen.index_of(to)] += kernel.lambda() * static_cast<double>(mult);
      }
    }
    double row = 0.0;
    for (std::size_t j = 0; j < dim; ++j)
      if (j != i) row += gen.Q[i][j];
    gen.Q[i][i] = -row;
  }
  return gen;
}

}  // namespace oracles
