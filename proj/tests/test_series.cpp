#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fragcoal/series.hpp"
#include "fragcoal/stationary.hpp"

using fragcoal::compose;
using fragcoal::lagrange_invert;
using fragcoal::mul_truncated;
using fragcoal::PowerSeries;

namespace {

// f(z) = (m z - z^m) / (m - 1)
PowerSeries limit_equation_series(std::int64_t m, std::size_t order) {
  PowerSeries f(order);
  f.c[1] = static_cast<double>(m) / static_cast<double>(m - 1);
  f.c[static_cast<std::size_t>(m)] = -1.0 / static_cast<double>(m - 1);
  return f;
}

}  // namespace

TEST_CASE("inverting the identity", "[series]") {
  PowerSeries f(8);
  f.c[1] = 1.0;
  const auto inv = lagrange_invert(f, 8);
  CHECK(inv.c[1] == 1.0);
  for (std::size_t k = 2; k <= 8; ++k) CHECK(std::abs(inv.c[k]) <= 1e-12);
}

TEST_CASE("inverting the geometric series", "[series]") {
  // f(z) = z/(1-z) = z + z^2 + ...; inverse y/(1+y): b_k = (-1)^{k-1}
  const std::size_t K = 30;
  PowerSeries f(K);
  for (std::size_t i = 1; i <= K; ++i) f.c[i] = 1.0;
  const auto inv = lagrange_invert(f, K);
  for (std::size_t k = 1; k <= K; ++k)
    CHECK(inv.c[k] == Catch::Approx(k % 2 == 1 ? 1.0 : -1.0).margin(1e-9));
}

TEST_CASE("domain errors", "[series]") {
  PowerSeries no_linear(4);
  no_linear.c[2] = 1.0;
  CHECK_THROWS_AS(lagrange_invert(no_linear, 4), std::domain_error);
  PowerSeries constant(4);
  constant.c[0] = 1.0;
  constant.c[1] = 1.0;
  CHECK_THROWS_AS(lagrange_invert(constant, 4), std::domain_error);
  CHECK_THROWS_AS(fragcoal::reciprocal(PowerSeries(3), 3), std::domain_error);
}

TEST_CASE("composition confirms the inverse", "[series][property]") {
  // assorted series with nonzero linear coefficient, including sign changes
  const std::vector<std::vector<double>> cases = {
      {2.0, -1.0, 0.5, 0.0, 0.25},
      {1.0, 1.0, 1.0, 1.0, 1.0, 1.0},
      {0.5, 0.0, -2.0, 1.0},
      {3.0, 0.1, 0.01, -0.001, 0.0001},
  };
  const std::size_t K = 14;
  for (const auto& coeffs : cases) {
    const PowerSeries f = PowerSeries::from_a1(coeffs);
    const auto inv = lagrange_invert(f, K);
    const auto candidate = compose(f, inv, K);  // should be y + O(y^{K+1})
    CHECK(candidate.c[0] == Catch::Approx(0.0).margin(1e-9));
    CHECK(candidate.c[1] == Catch::Approx(1.0).margin(1e-9));
    for (std::size_t k = 2; k <= K; ++k)
      CHECK(candidate.c[k] == Catch::Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("inverse of the limit equation gives the limit distribution", "[series]") {
  for (std::int64_t m : {2, 3, 4, 5}) {
    const std::size_t K = 60;
    const auto inv = lagrange_invert(limit_equation_series(m, K), K);
    const auto limit = fragcoal::limit_p(m, static_cast<std::int64_t>(K));
    for (std::size_t k = 1; k <= K; ++k) {
      const double expected = limit.at(static_cast<std::int64_t>(k));
      if (expected == 0.0) {
        CHECK(std::abs(inv.c[k]) <= 1e-12);
      } else {
        CHECK(std::abs(inv.c[k] - expected) / expected <= 1e-8);
      }
    }
  }
  // frozen values for m = 3: b_1 = 2/3, b_3 = 8/81, b_5 = 32/729
  const auto inv3 = lagrange_invert(limit_equation_series(3, 9), 9);
  CHECK(inv3.c[1] == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(inv3.c[3] == Catch::Approx(8.0 / 81.0).margin(1e-12));
  CHECK(inv3.c[5] == Catch::Approx(32.0 / 729.0).margin(1e-12));
  CHECK(std::abs(inv3.c[2]) <= 1e-15);
  CHECK(std::abs(inv3.c[4]) <= 1e-15);
}
