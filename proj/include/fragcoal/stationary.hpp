#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fragcoal/kernel.hpp"
#include "fragcoal/state.hpp"

namespace fragcoal {

/// F_1(g) = lambda (1 - g) + sum_k alpha(k)/k! (1 - k) g^k; strictly
/// decreasing on [0,1], with the stationary G(1) as its unique root.
inline double F1(const RateKernel& kernel, double lambda, double g) {
  double acc = lambda * (1.0 - g);
  for (const auto& [k, a] : kernel.alpha_map()) {
    if (a <= 0.0) continue;
    double kfact = 1.0, gk = 1.0;
    for (std::int64_t p = 1; p <= k; ++p) {
      kfact *= static_cast<double>(p);
      gk *= g;
    }
    acc += a / kfact * (1.0 - static_cast<double>(k)) * gk;
  }
  return acc;
}

inline double F1_prime(const RateKernel& kernel, double lambda, double g) {
  double acc = -lambda;
  for (const auto& [k, a] : kernel.alpha_map()) {
    if (a <= 0.0) continue;
    double fact = 1.0, gk = 1.0;  // alpha/(k-2)! g^{k-1}
    for (std::int64_t p = 1; p <= k - 2; ++p) fact *= static_cast<double>(p);
    for (std::int64_t p = 0; p < k - 1; ++p) gk *= g;
    acc -= a / fact * gk;
  }
  return acc;
}

/// F_x(g) at a fixed G(1) value; used to validate the stationary series.
inline double Fx(const RateKernel& kernel, double lambda, double G1, double x, double g) {
  double acc = lambda * (x - g);
  for (const auto& [k, a] : kernel.alpha_map()) {
    if (a <= 0.0) continue;
    double kfact = 1.0, gk = 1.0, g1k = 1.0;
    for (std::int64_t p = 1; p <= k; ++p) kfact *= static_cast<double>(p);
    for (std::int64_t p = 0; p < k; ++p) gk *= g;
    for (std::int64_t p = 0; p < k - 1; ++p) g1k *= G1;
    acc += a / kfact * (gk - static_cast<double>(k) * g1k * g);
  }
  return acc;
}

struct FixedPoint {
  double lambda = 0.0;
  double G1 = 0.0;       // stationary value of G(1,t)
  double S = 0.0;        // sum_k alpha(k)/(k-1)! G1^{k-1}
  double residual = 0.0; // |F_1(G1)|
};

/// Root of F_1 on [0,1]: bisection to width 1e-13 (F_1(0) = lambda > 0,
/// F_1(1) < 0), then Newton polish.
inline FixedPoint solve_G1(const RateKernel& kernel, double lambda) {
  if (!(lambda > 0.0)) throw std::domain_error("solve_G1: lambda must be > 0");
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (F1(kernel, lambda, mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double g = 0.5 * (lo + hi);
  for (int it = 0; it < 20; ++it) {
    const double f = F1(kernel, lambda, g);
    if (f == 0.0) break;
    const double fp = F1_prime(kernel, lambda, g);
    const double next = g - f / fp;
    if (!(next >= lo && next <= hi) || next == g) break;
    g = next;
  }
  FixedPoint fp;
  fp.lambda = lambda;
  fp.G1 = g;
  double S = 0.0;
  for (const auto& [k, a] : kernel.alpha_map()) {
    if (a <= 0.0) continue;
    double fact = 1.0, gk = 1.0;
    for (std::int64_t p = 1; p <= k - 1; ++p) {
      fact *= static_cast<double>(p);
      gk *= g;
    }
    S += a / fact * gk;
  }
  fp.S = S;
  fp.residual = std::abs(F1(kernel, lambda, g));
  return fp;
}

/// Root of F_x(g) = 0 on [0, G1] at fixed x; independent route to the
/// stationary generating function for validation.
inline double stationary_Gx(const RateKernel& kernel, double lambda, double G1, double x) {
  double lo = 0.0, hi = G1;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (Fx(kernel, lambda, G1, x, mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct StationaryW {
  std::vector<double> w;  // w[j], index 0 unused
  std::vector<double> p;  // w normalized to a probability over 1..j_max
  FixedPoint fixed_point;
  double truncation_residual = 0.0;  // |sum_j w_j - G1|
  bool truncation_warning = false;
};

/// Stationary cluster densities from the explicit recursion
///   w_1 = lambda / (lambda + S),
///   w_j = sum_k alpha(k)/k! (w^k)_j / (lambda + S),   j >= 2,
/// where (w^k)_j only involves w_1..w_{j-1}.
inline StationaryW stationary_w(const RateKernel& kernel, double lambda,
                                std::int64_t j_max) {
  if (j_max < 2) throw std::invalid_argument("stationary_w: j_max must be >= 2");
  StationaryW result;
  result.fixed_point = solve_G1(kernel, lambda);
  const double denom = lambda + result.fixed_point.S;
  const auto J = static_cast<std::size_t>(j_max);
  const auto k_top = static_cast<std::size_t>(kernel.max_order());

  // pw[k][j] = coefficient of z^j in (sum_j w_j z^j)^k, built incrementally
  std::vector<std::vector<double>> pw(k_top + 1, std::vector<double>(J + 1, 0.0));
  result.w.assign(J + 1, 0.0);
  result.w[1] = lambda / denom;
  pw[1][1] = result.w[1];

  std::vector<double> coeff(k_top + 1, 0.0);
  for (const auto& [k, a] : kernel.alpha_map()) {
    double kfact = 1.0;
    for (std::int64_t p = 1; p <= k; ++p) kfact *= static_cast<double>(p);
    coeff[static_cast<std::size_t>(k)] = a / kfact;
  }

  for (std::size_t j = 2; j <= J; ++j) {
    double gain = 0.0;
    for (std::size_t k = 2; k <= std::min(k_top, j); ++k) {
      // (w^k)_j = sum_i (w^{k-1})_i w_{j-i}
      double acc = 0.0;
      for (std::size_t i = k - 1; i <= j - 1; ++i) acc += pw[k - 1][i] * result.w[j - i];
      pw[k][j] = acc;
      gain += coeff[k] * acc;
    }
    result.w[j] = gain / denom;
    pw[1][j] = result.w[j];
  }

  double total = 0.0;
  for (std::size_t j = 1; j <= J; ++j) total += result.w[j];
  result.truncation_residual = std::abs(total - result.fixed_point.G1);
  result.truncation_warning = result.truncation_residual > 1e-6;
  result.p.assign(J + 1, 0.0);
  for (std::size_t j = 1; j <= J; ++j) result.p[j] = result.w[j] / total;
  return result;
}

namespace detail {

using u128 = unsigned __int128;

inline u128 gcd_u128(u128 a, u128 b) {
  while (b != 0) {
    const u128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

struct RationalOverflow : std::overflow_error {
  RationalOverflow() : std::overflow_error("128-bit rational overflow") {}
};

}  // namespace detail

/// Exact nonnegative rational on 128-bit unsigned integers, always reduced.
struct Rational128 {
  detail::u128 num = 0;
  detail::u128 den = 1;

  void reduce() {
    if (num == 0) {
      den = 1;
      return;
    }
    const detail::u128 g = detail::gcd_u128(num, den);
    num /= g;
    den /= g;
  }

  void mul_num(detail::u128 f) {
    const detail::u128 g = detail::gcd_u128(f, den);
    f /= g;
    den /= g;
    detail::u128 out;
    if (__builtin_mul_overflow(num, f, &out)) throw detail::RationalOverflow();
    num = out;
  }

  void mul_den(detail::u128 f) {
    if (num != 0) {
      const detail::u128 g = detail::gcd_u128(f, num);
      f /= g;
      num /= g;
    }
    detail::u128 out;
    if (__builtin_mul_overflow(den, f, &out)) throw detail::RationalOverflow();
    den = out;
  }

  bool operator==(const Rational128&) const = default;

  double value() const {
    return static_cast<double>(num) / static_cast<double>(den);
  }
};

namespace detail {

// Binomial coefficient via Pascal's triangle; throws RationalOverflow if the
// value leaves 128 bits.
inline u128 binomial_u128(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::vector<u128> row(static_cast<std::size_t>(k) + 1, 0);
  row[0] = 1;
  for (std::int64_t i = 1; i <= n; ++i) {
    for (std::int64_t j = std::min<std::int64_t>(i, k); j >= 1; --j) {
      u128 out;
      if (__builtin_add_overflow(row[j], row[j - 1], &out)) throw RationalOverflow();
      row[static_cast<std::size_t>(j)] = out;
    }
  }
  return row[static_cast<std::size_t>(k)];
}

}  // namespace detail

/// Exact value of the small-fragmentation limit p_k:
///   (1/k) ((m-1)/m)^k (1/m)^{(k-1)/(m-1)} C(m j, j),  j = (k-1)/(m-1),
/// when m-1 divides k-1, else 0. Throws on 128-bit overflow (large k).
inline Rational128 limit_p_exact(std::int64_t m, std::int64_t k) {
  if (m < 2) throw std::domain_error("limit_p_exact: m must be >= 2");
  if (k < 1) throw std::domain_error("limit_p_exact: k must be >= 1");
  if ((k - 1) % (m - 1) != 0) return Rational128{0, 1};
  const std::int64_t j = (k - 1) / (m - 1);
  Rational128 r;
  r.num = detail::binomial_u128(m * j, j);
  r.den = 1;
  r.mul_den(static_cast<detail::u128>(k));
  for (std::int64_t i = 0; i < k; ++i) r.mul_num(static_cast<detail::u128>(m - 1));
  for (std::int64_t i = 0; i < k + j; ++i) r.mul_den(static_cast<detail::u128>(m));
  r.reduce();
  return r;
}

/// Largest k (over the supported residue class) for which limit_p_exact
/// stays within 128 bits.
inline std::int64_t limit_p_exact_max_k(std::int64_t m) {
  std::int64_t last = 0;
  for (std::int64_t k = 1;; k += (m - 1)) {
    try {
      (void)limit_p_exact(m, k);
    } catch (const detail::RationalOverflow&) {
      return last;
    }
    last = k;
  }
}

/// Limit distribution evaluated in log space with lgamma binomials.
/// p_k is exactly zero off the residue class k = 1 (mod m-1).
inline SizeDistribution limit_p(std::int64_t m, std::int64_t k_max) {
  if (m < 2) throw std::domain_error("limit_p: m must be >= 2");
  if (k_max < 1) throw std::domain_error("limit_p: k_max must be >= 1");
  SizeDistribution dist;
  dist.truncation = k_max;
  dist.p.assign(static_cast<std::size_t>(k_max) + 1, 0.0);
  const double md = static_cast<double>(m);
  const double log_ratio = std::log(md - 1.0) - std::log(md);
  const double log_m = std::log(md);
  double total = 0.0;
  for (std::int64_t j = 0;; ++j) {
    const std::int64_t k = 1 + j * (m - 1);
    if (k > k_max) break;
    const double jd = static_cast<double>(j);
    const double kd = static_cast<double>(k);
    const double log_binom = std::lgamma(md * jd + 1.0) - std::lgamma(jd + 1.0) -
                             std::lgamma((md - 1.0) * jd + 1.0);
    const double logp = -std::log(kd) + kd * log_ratio - jd * log_m + log_binom;
    const double p = std::exp(logp);
    dist.p[static_cast<std::size_t>(k)] = p;
    total += p;
  }
  dist.tail_mass_estimate = std::max(0.0, 1.0 - total);
  return dist;
}

struct TailFit {
  double slope = 0.0;
  double stderr_slope = 0.0;
  std::int64_t points = 0;
};

/// Least-squares slope of log p_k against log k over the supported
/// (nonzero) entries with k_lo <= k <= k_hi. Requires >= 10 such entries.
inline TailFit tail_exponent_fit(const SizeDistribution& dist, std::int64_t k_lo,
                                 std::int64_t k_hi) {
  std::vector<double> xs, ys;
  const std::int64_t hi = std::min<std::int64_t>(k_hi, static_cast<std::int64_t>(dist.p.size()) - 1);
  for (std::int64_t k = std::max<std::int64_t>(1, k_lo); k <= hi; ++k) {
    const double p = dist.p[static_cast<std::size_t>(k)];
    if (p > 0.0) {
      xs.push_back(std::log(static_cast<double>(k)));
      ys.push_back(std::log(p));
    }
  }
  if (xs.size() < 10)
    throw std::invalid_argument("tail_exponent_fit: fewer than 10 supported points");
  const auto n = static_cast<double>(xs.size());
  double xbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xbar += xs[i];
    ybar += ys[i];
  }
  xbar /= n;
  ybar /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - xbar) * (xs[i] - xbar);
    sxy += (xs[i] - xbar) * (ys[i] - ybar);
  }
  TailFit fit;
  fit.points = static_cast<std::int64_t>(xs.size());
  fit.slope = sxy / sxx;
  const double intercept = ybar - fit.slope * xbar;
  double rss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (intercept + fit.slope * xs[i]);
    rss += r * r;
  }
  fit.stderr_slope = xs.size() > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
  return fit;
}

}  // namespace fragcoal
