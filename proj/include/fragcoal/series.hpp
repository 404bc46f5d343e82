#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fragcoal {

/// Truncated formal power series; c[i] is the coefficient of z^i.
struct PowerSeries {
  std::vector<double> c;

  PowerSeries() = default;
  explicit PowerSeries(std::size_t order) : c(order + 1, 0.0) {}

  /// Series a_1 z + a_2 z^2 + ... (constant term zero).
  static PowerSeries from_a1(const std::vector<double>& a) {
    PowerSeries s(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) s.c[i + 1] = a[i];
    return s;
  }

  std::size_t order() const { return c.empty() ? 0 : c.size() - 1; }
  double coeff(std::size_t i) const { return i < c.size() ? c[i] : 0.0; }
};

/// Product truncated at z^order.
inline PowerSeries mul_truncated(const PowerSeries& a, const PowerSeries& b,
                                 std::size_t order) {
  PowerSeries out(order);
  const std::size_t na = std::min(a.c.size(), order + 1);
  for (std::size_t i = 0; i < na; ++i) {
    const double ai = a.c[i];
    if (ai == 0.0) continue;
    const std::size_t nb = std::min(b.c.size(), order + 1 - i);
    for (std::size_t j = 0; j < nb; ++j) out.c[i + j] += ai * b.c[j];
  }
  return out;
}

/// 1 / a, requires a nonzero constant term.
inline PowerSeries reciprocal(const PowerSeries& a, std::size_t order) {
  if (a.c.empty() || a.c[0] == 0.0)
    throw std::domain_error("reciprocal: constant term must be nonzero");
  PowerSeries out(order);
  out.c[0] = 1.0 / a.c[0];
  for (std::size_t i = 1; i <= order; ++i) {
    double acc = 0.0;
    const std::size_t top = std::min(i, a.c.size() - 1);
    for (std::size_t j = 1; j <= top; ++j) acc += a.c[j] * out.c[i - j];
    out.c[i] = -acc / a.c[0];
  }
  return out;
}

/// f(g(z)) truncated at z^order, requires g(0) = 0.
inline PowerSeries compose(const PowerSeries& f, const PowerSeries& g,
                           std::size_t order) {
  if (!g.c.empty() && g.c[0] != 0.0)
    throw std::domain_error("compose: inner series must have zero constant term");
  PowerSeries out(order);
  // Horner from the top coefficient down
  for (std::size_t idx = f.c.size(); idx-- > 0;) {
    out = mul_truncated(out, g, order);
    out.c[0] += f.c[idx];
  }
  return out;
}

/// Coefficients b_1..b_K of the compositional inverse of f (f(0) = 0,
/// f'(0) != 0), via b_k = (1/k) [z^{k-1}] (z / f(z))^k.
inline PowerSeries lagrange_invert(const PowerSeries& f, std::size_t K) {
  if (f.c.size() < 2 || f.c[1] == 0.0)
    throw std::domain_error("lagrange_invert: need a nonzero linear coefficient");
  if (!f.c.empty() && f.c[0] != 0.0)
    throw std::domain_error("lagrange_invert: series must vanish at zero");
  // q = f(z)/z, u = 1/q = z/f(z), both truncated at z^{K-1}
  PowerSeries q(K == 0 ? 0 : K - 1);
  for (std::size_t i = 0; i + 1 < f.c.size() && i < q.c.size(); ++i) q.c[i] = f.c[i + 1];
  const PowerSeries u = reciprocal(q, K - 1);

  PowerSeries inverse(K);
  PowerSeries upow = u;  // u^k as k advances
  inverse.c[1] = u.c[0];  // b_1 = 1/a_1
  for (std::size_t k = 2; k <= K; ++k) {
    upow = mul_truncated(upow, u, K - 1);
    inverse.c[k] = upow.c[k - 1] / static_cast<double>(k);
  }
  return inverse;
}

}  // namespace fragcoal
