#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fragcoal/kernel.hpp"
#include "fragcoal/ode.hpp"

namespace fragcoal {

struct MeanFieldConfig {
  RateKernel kernel;
  std::int64_t j_max = 2000;
  std::vector<double> x_grid;  // must contain 1.0 for the G system
  double t_max = 1.0;
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  std::vector<double> output_times;
  double leak_bound = 1e-6;

  explicit MeanFieldConfig(RateKernel kernel_) : kernel(std::move(kernel_)) {}

  void validate() const {
    if (j_max < 2) throw std::invalid_argument("MeanFieldConfig: j_max must be >= 2");
    if (!(t_max > 0.0)) throw std::invalid_argument("MeanFieldConfig: t_max must be > 0");
    if (!(rel_tol > 0.0 && rel_tol <= 1e-2) || !(abs_tol > 0.0 && abs_tol <= 1e-2))
      throw std::invalid_argument("MeanFieldConfig: tolerances must lie in (0, 1e-2]");
    if (!std::is_sorted(output_times.begin(), output_times.end()))
      throw std::invalid_argument("MeanFieldConfig: output_times must be sorted");
    for (double tt : output_times)
      if (!(tt >= 0.0 && tt <= t_max))
        throw std::invalid_argument("MeanFieldConfig: output_times must lie in [0, t_max]");
    for (double x : x_grid)
      if (!(x >= 0.0 && x <= 1.0))
        throw std::invalid_argument("MeanFieldConfig: x_grid values must lie in [0,1]");
  }
};

/// Limit dynamics on a time grid: w[t][j] holds w_j(t) (index 0 unused),
/// G[t][i] holds G(x_i, t). mass = sum_j j w_j, leak = 1 - mass.
struct MeanFieldSolution {
  std::vector<double> times;
  std::int64_t j_max = 0;
  std::vector<std::vector<double>> w;
  std::vector<double> x_grid;
  std::vector<std::vector<double>> G;
  std::vector<double> mass;
  std::vector<double> leak;
  bool leak_warning = false;
  double max_leak = 0.0;
  std::int64_t steps_G = 0;
  std::int64_t steps_w = 0;
  double rel_tol = 0.0;
  double abs_tol = 0.0;
};

namespace detail {

// d/dt G(x) = lambda (x - G) + sum_k alpha(k)/k! (G^k - k G1^{k-1} G)
class GenFuncRhs {
 public:
  GenFuncRhs(const RateKernel& kernel, std::vector<double> xs, std::size_t one_index)
      : kernel_(kernel), xs_(std::move(xs)), one_(one_index) {}

  void operator()(double, const std::vector<double>& y, std::vector<double>& dy) const {
    const double lambda = kernel_.lambda();
    const double g1 = y[one_];
    for (std::size_t i = 0; i < xs_.size(); ++i) {
      const double g = y[i];
      double acc = lambda * (xs_[i] - g);
      for (const auto& [k, a] : kernel_.alpha_map()) {
        if (a <= 0.0) continue;
        double kfact = 1.0, gk = 1.0, g1k = 1.0;
        for (std::int64_t p = 1; p <= k; ++p) kfact *= static_cast<double>(p);
        for (std::int64_t p = 0; p < k; ++p) gk *= g;
        for (std::int64_t p = 0; p < k - 1; ++p) g1k *= g1;
        acc += a / kfact * (gk - static_cast<double>(k) * g1k * g);
      }
      dy[i] = acc;
    }
  }

 private:
  const RateKernel& kernel_;
  std::vector<double> xs_;
  std::size_t one_;
};

// Truncated product of two series with parts >= 1 (index 0 always zero).
// Writes into `out`, which may not alias the inputs.
inline void conv_truncated(const std::vector<double>& a, std::size_t len_a,
                           const std::vector<double>& b, std::size_t len_b,
                           std::vector<double>& out) {
  const std::size_t jmax = out.size() - 1;
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t top = std::min(jmax, len_a + len_b);
  for (std::size_t i = 1; i <= std::min(len_a, top); ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    const std::size_t jhi = std::min(len_b, top - i);
    for (std::size_t j = 1; j <= jhi; ++j) out[i + j] += ai * b[j];
  }
}

// Smoluchowski-type truncated system for w_1..w_jmax.
class ClusterRhs {
 public:
  ClusterRhs(const RateKernel& kernel, std::int64_t j_max)
      : kernel_(kernel), j_max_(static_cast<std::size_t>(j_max)) {
    wbuf_.assign(j_max_ + 1, 0.0);
    pw_.assign(2, std::vector<double>(j_max_ + 1, 0.0));
  }

  void operator()(double, const std::vector<double>& y, std::vector<double>& dy) const {
    const double lambda = kernel_.lambda();
    const std::size_t J = j_max_;
    // total cluster density and the loss factor S
    double W = 0.0;
    std::size_t len = 0;
    for (std::size_t j = 1; j <= J; ++j) {
      const double wj = y[j - 1];
      wbuf_[j] = wj;
      W += wj;
      if (std::abs(wj) > 1e-300) len = j;
    }
    double S = 0.0;
    for (const auto& [k, a] : kernel_.alpha_map()) {
      if (a <= 0.0) continue;
      double fact = 1.0, Wp = 1.0;
      for (std::int64_t p = 1; p <= k - 1; ++p) {
        fact *= static_cast<double>(p);
        Wp *= W;
      }
      S += a / fact * Wp;
    }

    for (std::size_t j = 1; j <= J; ++j) dy[j - 1] = -(lambda + S) * y[j - 1];
    dy[0] += lambda;  // w_1 gains lambda * 1 (mass of the untruncated system)

    // gain terms: alpha(k)/k! * (w^k)_j via iterated truncated products
    const std::int64_t k_top = kernel_.max_order();
    std::size_t cur = 0;
    std::size_t len_pow = len;
    for (std::int64_t k = 2; k <= k_top; ++k) {
      const std::size_t nxt = 1 - cur;
      if (k == 2)
        conv_truncated(wbuf_, len, wbuf_, len, pw_[nxt]);
      else
        conv_truncated(pw_[cur], len_pow, wbuf_, len, pw_[nxt]);
      cur = nxt;
      len_pow = std::min(J, len_pow + len);
      const double a = kernel_.alpha(k);
      if (a <= 0.0) continue;
      double kfact = 1.0;
      for (std::int64_t p = 1; p <= k; ++p) kfact *= static_cast<double>(p);
      const double coeff = a / kfact;
      for (std::size_t j = static_cast<std::size_t>(k); j <= len_pow; ++j)
        dy[j - 1] += coeff * pw_[cur][j];
    }
  }

 private:
  const RateKernel& kernel_;
  std::size_t j_max_;
  mutable std::vector<double> wbuf_;
  mutable std::vector<std::vector<double>> pw_;
};

}  // namespace detail

/// Integrate the generating-function family on the configured x grid
/// (which must include x = 1; the G(1,t) component closes the system).
inline MeanFieldSolution solve_G(const MeanFieldConfig& config) {
  config.validate();
  auto it = std::find(config.x_grid.begin(), config.x_grid.end(), 1.0);
  if (it == config.x_grid.end())
    throw std::invalid_argument("solve_G: x_grid must contain x = 1");
  const std::size_t one_index = static_cast<std::size_t>(it - config.x_grid.begin());

  MeanFieldSolution sol;
  sol.times = config.output_times;
  sol.x_grid = config.x_grid;
  sol.j_max = config.j_max;
  sol.rel_tol = config.rel_tol;
  sol.abs_tol = config.abs_tol;

  detail::GenFuncRhs rhs(config.kernel, config.x_grid, one_index);
  // steer well below the requested local tolerances so the accumulated
  // global error stays within the consistency budget 10*(abs_tol + leak)
  OdeOptions opt;
  opt.rel_tol = config.rel_tol * 1e-2;
  opt.abs_tol = config.abs_tol * 1e-2;
  OdeResult res = integrate_dopri5(rhs, config.x_grid /* G(x,0) = x */, 0.0,
                                   config.t_max, config.output_times, opt);
  sol.G = std::move(res.at_output);
  sol.steps_G = res.accepted;
  return sol;
}

/// Integrate the truncated cluster-density system w_1..w_jmax from the
/// all-singleton initial condition and report the truncation leak.
inline MeanFieldSolution solve_w(const MeanFieldConfig& config) {
  config.validate();
  MeanFieldSolution sol;
  sol.times = config.output_times;
  sol.x_grid = config.x_grid;
  sol.j_max = config.j_max;
  sol.rel_tol = config.rel_tol;
  sol.abs_tol = config.abs_tol;

  std::vector<double> y0(static_cast<std::size_t>(config.j_max), 0.0);
  y0[0] = 1.0;  // w_j(0) = delta_{j,1}
  detail::ClusterRhs rhs(config.kernel, config.j_max);
  OdeOptions opt;
  opt.rel_tol = config.rel_tol * 1e-2;
  opt.abs_tol = config.abs_tol * 1e-2;
  OdeResult res =
      integrate_dopri5(rhs, std::move(y0), 0.0, config.t_max, config.output_times, opt);
  sol.steps_w = res.accepted;

  sol.w.reserve(res.at_output.size());
  for (auto& row : res.at_output) {
    std::vector<double> w(static_cast<std::size_t>(config.j_max) + 1, 0.0);
    double mass = 0.0;
    for (std::size_t j = 1; j < w.size(); ++j) {
      w[j] = row[j - 1];
      mass += static_cast<double>(j) * w[j];
    }
    sol.w.push_back(std::move(w));
    sol.mass.push_back(mass);
    sol.leak.push_back(1.0 - mass);
    sol.max_leak = std::max(sol.max_leak, 1.0 - mass);
  }
  sol.leak_warning = sol.max_leak > config.leak_bound;
  return sol;
}

/// Both parts on the shared grids.
inline MeanFieldSolution solve_meanfield(const MeanFieldConfig& config) {
  MeanFieldSolution sol = solve_w(config);
  MeanFieldSolution g = solve_G(config);
  sol.G = std::move(g.G);
  sol.steps_G = g.steps_G;
  return sol;
}

struct ConsistencyReport {
  double max_abs_discrepancy = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

/// Compare sum_j x^j w_j(t) against the directly integrated G(x,t) over all
/// output times and grid points.
inline ConsistencyReport consistency_check(const MeanFieldSolution& sol) {
  if (sol.w.empty() || sol.G.empty() || sol.w.size() != sol.G.size())
    throw std::invalid_argument("consistency_check: needs both w and G parts");
  ConsistencyReport report;
  for (std::size_t ti = 0; ti < sol.times.size(); ++ti) {
    for (std::size_t xi = 0; xi < sol.x_grid.size(); ++xi) {
      const double x = sol.x_grid[xi];
      double acc = 0.0, xp = 1.0;
      for (std::size_t j = 1; j < sol.w[ti].size(); ++j) {
        xp *= x;
        if (xp == 0.0) break;
        acc += xp * sol.w[ti][j];
      }
      report.max_abs_discrepancy =
          std::max(report.max_abs_discrepancy, std::abs(acc - sol.G[ti][xi]));
    }
  }
  report.threshold = 10.0 * (sol.abs_tol + std::max(0.0, sol.max_leak));
  report.pass = report.max_abs_discrepancy <= report.threshold;
  return report;
}

}  // namespace fragcoal
