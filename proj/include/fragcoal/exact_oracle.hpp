#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fragcoal/kernel.hpp"
#include "fragcoal/state.hpp"

namespace fragcoal {

/// One lattice point of the finite-n simplex: multiplicities of each cluster
/// size, with sum size * multiplicity == n and no zero entries.
struct PartitionState {
  std::map<std::int64_t, std::int64_t, std::greater<>> counts;

  bool operator==(const PartitionState& other) const = default;
  auto operator<=>(const PartitionState& other) const = default;

  std::int64_t mass() const {
    std::int64_t m = 0;
    for (const auto& [size, mult] : counts) m += size * mult;
    return m;
  }
  std::int64_t cluster_count() const {
    std::int64_t b = 0;
    for (const auto& [size, mult] : counts) b += mult;
    return b;
  }
};

/// Rendered as size^multiplicity factors, largest size first: "2^1 1^2".
inline std::string state_label(const PartitionState& state) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [size, mult] : state.counts) {
    if (!first) out << ' ';
    out << size << '^' << mult;
    first = false;
  }
  return out.str();
}

inline constexpr std::int64_t kMaxOracleN = 12;

/// All integer partitions of n in reverse lexicographic order
/// (n first, all-singletons last). Refuses n > 12.
inline std::vector<PartitionState> enumerate_partitions(std::int64_t n) {
  if (n < 1) throw std::domain_error("enumerate_partitions: n must be >= 1");
  if (n > kMaxOracleN)
    throw std::domain_error("enumerate_partitions: n > 12 not supported");
  std::vector<PartitionState> out;
  std::vector<std::int64_t> parts;
  auto rec = [&](auto&& self, std::int64_t remaining, std::int64_t max_part) -> void {
    if (remaining == 0) {
      PartitionState s;
      for (std::int64_t p : parts) ++s.counts[p];
      out.push_back(std::move(s));
      return;
    }
    for (std::int64_t p = std::min(max_part, remaining); p >= 1; --p) {
      parts.push_back(p);
      self(self, remaining - p, p);
      parts.pop_back();
    }
  };
  rec(rec, n, n);
  return out;
}

/// Dense generator of the partition-valued chain. Row sums are zero;
/// off-diagonal entries are jump rates per unit time.
struct GeneratorMatrix {
  std::int64_t n = 0;
  double lambda = 0.0;
  std::vector<PartitionState> states;
  std::vector<std::vector<double>> Q;

  std::size_t index_of(const PartitionState& s) const {
    for (std::size_t i = 0; i < states.size(); ++i)
      if (states[i] == s) return i;
    throw std::logic_error("GeneratorMatrix: state not found");
  }
};

/// Empirical generating function of a partition state at x.
inline double state_G(const PartitionState& state, std::int64_t n, double x) {
  double acc = 0.0;
  for (const auto& [size, mult] : state.counts)
    acc += std::pow(x, static_cast<double>(size)) * static_cast<double>(mult);
  return acc / static_cast<double>(n);
}

namespace detail {

inline double binomial_small(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (std::int64_t i = 1; i <= k; ++i)
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

// Enumerate multisets {a_s} with 0 <= a_s <= c_s and sum a_s == k; calls
// visit(a, ways) where ways = prod_s C(c_s, a_s).
template <class Visit>
void for_each_merge_multiset(const std::vector<std::pair<std::int64_t, std::int64_t>>& counts,
                             std::int64_t k, Visit&& visit) {
  std::vector<std::int64_t> chosen(counts.size(), 0);
  auto rec = [&](auto&& self, std::size_t idx, std::int64_t remaining, double ways) -> void {
    if (remaining == 0) {
      visit(chosen, ways);
      return;
    }
    if (idx == counts.size()) return;
    const auto [size, mult] = counts[idx];
    for (std::int64_t a = 0; a <= std::min(mult, remaining); ++a) {
      chosen[idx] = a;
      self(self, idx + 1, remaining - a, ways * binomial_small(mult, a));
    }
    chosen[idx] = 0;
  };
  rec(rec, 0, k, 1.0);
}

}  // namespace detail

/// Build the generator from the subset description: every k-subset of the b
/// clusters merges at rate alpha(k) n^{1-k}; every cluster of size s >= 2
/// shatters at rate lambda (singleton shattering is a no-op and omitted).
inline GeneratorMatrix build_generator(std::int64_t n, const RateKernel& kernel) {
  GeneratorMatrix gen;
  gen.n = n;
  gen.lambda = kernel.lambda();
  gen.states = enumerate_partitions(n);
  const std::size_t dim = gen.states.size();
  gen.Q.assign(dim, std::vector<double>(dim, 0.0));

  std::map<PartitionState, std::size_t> index;
  for (std::size_t i = 0; i < dim; ++i) index[gen.states[i]] = i;

  for (std::size_t i = 0; i < dim; ++i) {
    const PartitionState& from = gen.states[i];
    const std::int64_t b = from.cluster_count();
    std::vector<std::pair<std::int64_t, std::int64_t>> counts(from.counts.begin(),
                                                              from.counts.end());
    // coalescence
    for (const auto& [k, a] : kernel.alpha_map()) {
      if (a <= 0.0 || k > b) continue;
      double scale = a;  // alpha(k) / n^{k-1}
      for (std::int64_t p = 1; p < k; ++p) scale /= static_cast<double>(n);
      detail::for_each_merge_multiset(
          counts, k, [&](const std::vector<std::int64_t>& chosen, double ways) {
            PartitionState to = from;
            std::int64_t merged = 0;
            for (std::size_t c = 0; c < counts.size(); ++c) {
              if (chosen[c] == 0) continue;
              merged += counts[c].first * chosen[c];
              auto it = to.counts.find(counts[c].first);
              it->second -= chosen[c];
              if (it->second == 0) to.counts.erase(it);
            }
            ++to.counts[merged];
            gen.Q[i][index.at(to)] += scale * ways;
          });
    }
    // fragmentation
    if (kernel.lambda() > 0.0) {
      for (const auto& [size, mult] : from.counts) {
        if (size < 2) continue;
        PartitionState to = from;
        auto it = to.counts.find(size);
        it->second -= 1;
        if (it->second == 0) to.counts.erase(it);
        to.counts[1] += size;
        gen.Q[i][index.at(to)] += kernel.lambda() * static_cast<double>(mult);
      }
    }
    double row = 0.0;
    for (std::size_t j = 0; j < dim; ++j)
      if (j != i) row += gen.Q[i][j];
    gen.Q[i][i] = -row;
  }
  return gen;
}

/// Distribution at time t starting from state `init`, by uniformization:
/// exp(tQ) = sum_j Poisson(Lambda t)_j P^j with P = I + Q/Lambda. The
/// Poisson tail is cut at 1e-10 total mass.
inline std::vector<double> transient_distribution(const GeneratorMatrix& gen,
                                                  std::size_t init, double t) {
  if (!(t >= 0.0)) throw std::domain_error("transient_distribution: t must be >= 0");
  const std::size_t dim = gen.states.size();
  if (init >= dim) throw std::invalid_argument("transient_distribution: bad init index");
  std::vector<double> v(dim, 0.0);
  v[init] = 1.0;
  double biggest = 0.0;
  for (std::size_t i = 0; i < dim; ++i) biggest = std::max(biggest, -gen.Q[i][i]);
  if (t == 0.0 || biggest == 0.0) return v;

  const double rate = biggest * 1.02;  // slack keeps P strictly substochastic off-diagonal
  const double mu = rate * t;
  std::vector<std::vector<double>> P(dim, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) P[i][j] = gen.Q[i][j] / rate;
    P[i][i] += 1.0;
  }

  std::vector<double> out(dim, 0.0);
  std::vector<double> next(dim, 0.0);
  double cumulative = 0.0;
  const double tail_tol = 1e-10;
  const auto max_terms =
      static_cast<std::int64_t>(mu + 12.0 * std::sqrt(mu + 1.0) + 64.0);
  for (std::int64_t j = 0;; ++j) {
    const double logw = static_cast<double>(j) * std::log(mu) - mu -
                        std::lgamma(static_cast<double>(j) + 1.0);
    const double w = std::exp(logw);
    cumulative += w;
    for (std::size_t s = 0; s < dim; ++s) out[s] += w * v[s];
    if (cumulative >= 1.0 - tail_tol) break;
    if (j > max_terms)
      throw std::runtime_error("transient_distribution: uniformization did not converge");
    for (std::size_t s = 0; s < dim; ++s) {
      double acc = 0.0;
      for (std::size_t r = 0; r < dim; ++r) acc += v[r] * P[r][s];
      next[s] = acc;
    }
    v.swap(next);
  }
  // mop up the cut tail so the result sums to 1 to rounding accuracy
  double total = 0.0;
  for (double& p : out) {
    if (p < 0.0) p = 0.0;
    total += p;
  }
  for (double& p : out) p /= total;
  return out;
}

/// Unique stationary distribution pi with pi Q = 0, sum pi = 1. Requires
/// lambda > 0. Solved by full-pivot elimination on Q^T (kernel extraction).
inline std::vector<double> stationary_distribution(const GeneratorMatrix& gen) {
  if (!(gen.lambda > 0.0))
    throw std::domain_error(
        "stationary_distribution: absorbing chain (lambda == 0) has no unique stationary law");
  const std::size_t dim = gen.states.size();
  if (dim == 1) return {1.0};

  // A = Q^T; find its one-dimensional null space.
  std::vector<std::vector<double>> A(dim, std::vector<double>(dim));
  double scale = 0.0;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      A[i][j] = gen.Q[j][i];
      scale = std::max(scale, std::abs(A[i][j]));
    }
  const double tol = scale * 1e-13 * static_cast<double>(dim);

  std::vector<std::size_t> col_of_row(dim);  // pivot column per eliminated row
  std::vector<bool> col_used(dim, false);
  std::size_t rank = 0;
  std::vector<std::size_t> pivot_rows;
  for (std::size_t step = 0; step < dim; ++step) {
    // full pivot over untouched rows/cols
    double best = tol;
    std::size_t pr = dim, pc = dim;
    for (std::size_t i = rank; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        if (!col_used[j] && std::abs(A[i][j]) > best) {
          best = std::abs(A[i][j]);
          pr = i;
          pc = j;
        }
    if (pr == dim) break;
    std::swap(A[rank], A[pr]);
    col_used[pc] = true;
    col_of_row[rank] = pc;
    for (std::size_t i = 0; i < dim; ++i) {
      if (i == rank || A[i][pc] == 0.0) continue;
      const double f = A[i][pc] / A[rank][pc];
      for (std::size_t j = 0; j < dim; ++j) A[i][j] -= f * A[rank][j];
      A[i][pc] = 0.0;
    }
    ++rank;
  }
  if (rank != dim - 1)
    throw std::runtime_error("stationary_distribution: null space is not one-dimensional");

  // one free column remains; set it to 1 and read the rest off the pivots
  std::size_t free_col = dim;
  for (std::size_t j = 0; j < dim; ++j)
    if (!col_used[j]) free_col = j;
  std::vector<double> pi(dim, 0.0);
  pi[free_col] = 1.0;
  for (std::size_t r = 0; r < rank; ++r) {
    const std::size_t pc = col_of_row[r];
    pi[pc] = -A[r][free_col] / A[r][pc];
  }

  double total = 0.0;
  for (double& p : pi) {
    if (std::abs(p) < 1e-14) p = 0.0;
    if (p < 0.0) p = 0.0;
    total += p;
  }
  for (double& p : pi) p /= total;

  // residual check: pi Q = 0
  double residual = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) acc += pi[i] * gen.Q[i][j];
    residual = std::max(residual, std::abs(acc));
  }
  if (residual > std::max(1e-12, scale * 1e-13))
    throw std::runtime_error("stationary_distribution: residual too large");
  return pi;
}

/// Convert a simulator state's histogram to the matching oracle state index.
inline std::size_t partition_index(const GeneratorMatrix& gen,
                                   const std::map<std::int64_t, std::int64_t>& histogram) {
  PartitionState s;
  for (const auto& [size, count] : histogram) s.counts[size] = count;
  return gen.index_of(s);
}

}  // namespace fragcoal
