#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "fragcoal/io.hpp"
#include "fragcoal/kernel.hpp"
#include "fragcoal/meanfield.hpp"
#include "fragcoal/simulator.hpp"
#include "fragcoal/stationary.hpp"

namespace fragcoal {

struct ConvergenceEntry {
  std::int64_t n = 0;
  double sup_sq_error = 0.0;
  double stderr_sup = 0.0;
};

struct ConvergenceReport {
  std::vector<ConvergenceEntry> entries;
  bool strictly_decreasing = false;
  std::vector<double> t_list;
  std::vector<double> x_grid;
};

/// Estimate sup over the (x, t) grid of E[(G(x,t) - G_n(x,t))^2] for each n:
/// the deterministic limit G comes from the mean-field solver at tight
/// tolerance, the finite-n law from an ensemble of `replicas` trajectories.
inline ConvergenceReport run_convergence_study(const std::vector<std::int64_t>& n_list,
                                               const RateKernel& kernel, double lambda,
                                               std::vector<double> x_grid,
                                               std::vector<double> t_list,
                                               std::int64_t replicas, std::uint64_t seed,
                                               int threads = 1) {
  if (n_list.size() < 2 || !std::is_sorted(n_list.begin(), n_list.end()) ||
      std::adjacent_find(n_list.begin(), n_list.end()) != n_list.end())
    throw std::invalid_argument(
        "run_convergence_study: n_list must be strictly increasing with >= 2 entries");
  if (replicas < 2)
    throw std::invalid_argument(
        "run_convergence_study: replicas must be >= 2 (variance undefined otherwise)");
  if (x_grid.empty() || t_list.empty())
    throw std::invalid_argument("run_convergence_study: empty evaluation grid");
  std::sort(x_grid.begin(), x_grid.end());
  std::sort(t_list.begin(), t_list.end());

  const RateKernel kern = kernel.with_lambda(lambda);

  // reference limit solution; solver grid must include x = 1
  std::vector<double> solver_grid = x_grid;
  if (std::find(solver_grid.begin(), solver_grid.end(), 1.0) == solver_grid.end())
    solver_grid.push_back(1.0);
  MeanFieldConfig mf(kern);
  mf.x_grid = solver_grid;
  mf.t_max = t_list.back();
  mf.output_times = t_list;
  mf.rel_tol = 1e-10;
  mf.abs_tol = 1e-12;
  const MeanFieldSolution limit = solve_G(mf);

  ConvergenceReport report;
  report.t_list = t_list;
  report.x_grid = x_grid;
  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    const std::int64_t n = n_list[ni];
    SimConfig cfg(n, kern);
    cfg.t_max = t_list.back();
    cfg.snapshot_times = t_list;
    cfg.record_G_at = x_grid;
    const std::uint64_t base = seed + 0x100000ull * static_cast<std::uint64_t>(ni);
    const EnsembleResult ens = ensemble(cfg, replicas, base, threads);

    double sup = -1.0;
    double sup_stderr = 0.0;
    for (std::size_t ti = 0; ti < t_list.size(); ++ti)
      for (std::size_t xi = 0; xi < x_grid.size(); ++xi) {
        const std::size_t gi = static_cast<std::size_t>(
            std::find(solver_grid.begin(), solver_grid.end(), x_grid[xi]) -
            solver_grid.begin());
        const double g_ref = limit.G[ti][gi];
        double mean = 0.0, m2 = 0.0;
        for (std::int64_t r = 0; r < replicas; ++r) {
          const double gn = ens.records[static_cast<std::size_t>(r)]
                                .snapshots[ti]
                                .G.values[xi];
          const double sq = (g_ref - gn) * (g_ref - gn);
          const double delta = sq - mean;
          mean += delta / static_cast<double>(r + 1);
          m2 += delta * (sq - mean);
        }
        if (mean > sup) {
          sup = mean;
          const double var = m2 / static_cast<double>(replicas - 1);
          sup_stderr = std::sqrt(var / static_cast<double>(replicas));
        }
      }
    report.entries.push_back({n, sup, sup_stderr});
  }
  report.strictly_decreasing = true;
  for (std::size_t i = 1; i < report.entries.size(); ++i)
    if (!(report.entries[i].sup_sq_error < report.entries[i - 1].sup_sq_error))
      report.strictly_decreasing = false;
  return report;
}

inline void write_convergence_csv(const ConvergenceReport& report,
                                  const std::filesystem::path& dir) {
  CsvFile csv(dir / "convergence.csv", "n,sup_sq_error,stderr");
  for (const auto& e : report.entries) csv.row(e.n, e.sup_sq_error, e.stderr_sup);
}

struct Figure1Report {
  std::vector<std::int64_t> k;
  std::vector<double> p_empirical;
  std::vector<double> p_stationary_lambda;
  std::vector<double> p_limit;
  double even_mass_empirical = 0.0;  // over every size the run visited
  bool truncated = false;
};

/// Long-run comparison at one fragmentation rate: sojourn-averaged empirical
/// p_k versus the stationary recursion at the same lambda and the
/// lambda -> 0 limit law. Requires a kernel whose smallest active order is 3.
inline Figure1Report run_figure1(std::int64_t n, double lambda, const RateKernel& kernel,
                                 double t_max, double burn_in, std::uint64_t seed,
                                 std::int64_t k_max = 99) {
  if (kernel.min_order() != 3)
    throw std::invalid_argument("run_figure1: kernel must have smallest active order 3");
  if (k_max < 1) throw std::invalid_argument("run_figure1: k_max must be >= 1");
  const RateKernel kern = kernel.with_lambda(lambda);

  SimConfig cfg(n, kern);
  cfg.t_max = t_max;
  cfg.burn_in = burn_in;
  cfg.seed = seed;
  const TrajectoryRecord record = run(cfg);

  const std::int64_t j_max = std::max<std::int64_t>(2000, 4 * k_max);
  const StationaryW stat = stationary_w(kern, lambda, j_max);
  const SizeDistribution limit = limit_p(kernel.min_order(), k_max);

  Figure1Report report;
  report.truncated = record.truncated;
  for (std::int64_t k = 1; k <= k_max; ++k) {
    report.k.push_back(k);
    report.p_empirical.push_back(record.time_averaged_p.at(k));
    report.p_stationary_lambda.push_back(
        k < static_cast<std::int64_t>(stat.p.size()) ? stat.p[static_cast<std::size_t>(k)]
                                                     : 0.0);
    report.p_limit.push_back(limit.at(k));
  }
  for (std::int64_t k = 2; k <= record.time_averaged_p.truncation; k += 2)
    report.even_mass_empirical += record.time_averaged_p.at(k);
  return report;
}

inline void write_figure1_csv(const Figure1Report& report,
                              const std::filesystem::path& dir) {
  CsvFile csv(dir / "figure1.csv", "k,p_empirical,p_stationary_lambda,p_limit");
  for (std::size_t i = 0; i < report.k.size(); ++i)
    csv.row(report.k[i], report.p_empirical[i], report.p_stationary_lambda[i],
            report.p_limit[i]);
}

inline void write_figure1_plot_script(const std::filesystem::path& dir) {
  std::ofstream out(dir / "figure1.plt");
  if (!out) throw std::runtime_error("cannot open figure1.plt");
  out << "set datafile separator ','\n"
         "set key autotitle columnhead\n"
         "set logscale xy\n"
         "set xlabel 'cluster size k'\n"
         "set ylabel 'p_k'\n"
         "set style data points\n"
         "plot 'figure1.csv' using 1:($2 > 0 ? $2 : 1/0) pt 7 ps 0.6, \\\n"
         "     'figure1.csv' using 1:($3 > 0 ? $3 : 1/0) pt 5 ps 0.6, \\\n"
         "     'figure1.csv' using 1:($4 > 0 ? $4 : 1/0) with lines\n";
}

}  // namespace fragcoal
