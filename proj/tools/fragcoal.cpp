// fragcoal: simulate, analyse and cross-compare multi-merger
// fragmentation-coalescence processes. See docs/config.md for the per-command
// configuration schemas.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fragcoal/exact_oracle.hpp"
#include "fragcoal/harness.hpp"
#include "fragcoal/io.hpp"
#include "fragcoal/kernel.hpp"
#include "fragcoal/meanfield.hpp"
#include "fragcoal/simulator.hpp"
#include "fragcoal/stationary.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericError = 3;
constexpr int kPartialResult = 4;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

std::filesystem::path resolve_out_dir(const GlobalOpts& opts) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (const char* env = std::getenv("FRAGCOAL_OUT"); env && *env) return env;
  return ".";
}

nlohmann::json require_config(const GlobalOpts& opts) {
  if (opts.config_path.empty())
    throw std::invalid_argument("this command requires --config <file>");
  return fragcoal::load_json_file(opts.config_path);
}

template <class T>
T get_required(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key))
    throw std::invalid_argument("config: missing required field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("config: field '" + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("config: field '" + key + "' has the wrong type");
  }
}

fragcoal::RateKernel kernel_from_config(const nlohmann::json& j) {
  if (!j.contains("kernel"))
    throw std::invalid_argument("config: missing required field 'kernel'");
  return fragcoal::RateKernel::from_json(j.at("kernel"));
}

int cmd_simulate(const GlobalOpts& opts) {
  const auto cfg_json = require_config(opts);
  fragcoal::SimConfig cfg(get_required<std::int64_t>(cfg_json, "n"),
                          kernel_from_config(cfg_json));
  cfg.t_max = get_required<double>(cfg_json, "t_max");
  cfg.burn_in = get_or<double>(cfg_json, "burn_in", 0.0);
  cfg.snapshot_times = get_or<std::vector<double>>(cfg_json, "snapshot_times", {});
  cfg.record_G_at = get_or<std::vector<double>>(cfg_json, "record_G_at", {});
  cfg.seed = get_or<std::uint64_t>(cfg_json, "seed", 0);
  if (opts.seed) cfg.seed = *opts.seed;
  cfg.validate();

  const auto dir = resolve_out_dir(opts);
  fragcoal::ensure_directory(dir);
  const auto t_start = std::chrono::steady_clock::now();
  const fragcoal::TrajectoryRecord record = fragcoal::run(cfg);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  {
    fragcoal::CsvFile traj(dir / "trajectory.csv", "t,k,p_k,w_k");
    const double n = static_cast<double>(cfg.n);
    for (const auto& snap : record.snapshots) {
      const double b = static_cast<double>(snap.cluster_count);
      for (std::int64_t k = 1; k <= snap.p.truncation; ++k) {
        const double pk = snap.p.at(k);
        if (pk > 0.0) traj.row(snap.t, k, pk, pk * b / n);
      }
    }
  }
  {
    fragcoal::CsvFile gn(dir / "gn.csv", "t,x,G_n");
    for (const auto& snap : record.snapshots)
      for (std::size_t xi = 0; xi < snap.G.x_points.size(); ++xi)
        gn.row(snap.t, snap.G.x_points[xi], snap.G.values[xi]);
  }
  {
    fragcoal::CsvFile avg(dir / "time_averaged_p.csv", "k,p_k");
    for (std::int64_t k = 1; k <= record.time_averaged_p.truncation; ++k) {
      const double pk = record.time_averaged_p.at(k);
      if (pk > 0.0) avg.row(k, pk);
    }
  }
  nlohmann::json summary;
  summary["n"] = cfg.n;
  summary["seed"] = cfg.seed;
  summary["event_counts"] = record.event_counts;
  summary["final_cluster_count"] = record.final_cluster_count;
  summary["final_time"] = record.final_time;
  summary["truncated"] = record.truncated;
  summary["sojourn_weight_total"] = record.sojourn_weight_total;
  summary["wall_time_seconds"] = wall;
  fragcoal::write_json_file(dir / "summary.json", summary);

  if (record.truncated) {
    std::cerr << "warning: chain absorbed before t_max; trajectory is partial\n";
    return kPartialResult;
  }
  return kOk;
}

int cmd_exact(const GlobalOpts& opts) {
  const auto cfg_json = require_config(opts);
  const std::int64_t n = get_required<std::int64_t>(cfg_json, "n");
  const fragcoal::RateKernel kernel = kernel_from_config(cfg_json);
  const auto dir = resolve_out_dir(opts);
  fragcoal::ensure_directory(dir);

  const fragcoal::GeneratorMatrix gen = fragcoal::build_generator(n, kernel);
  {
    fragcoal::CsvFile out(dir / "generator.csv", "row_state,column_state,rate");
    for (std::size_t i = 0; i < gen.states.size(); ++i)
      for (std::size_t j = 0; j < gen.states.size(); ++j)
        if (gen.Q[i][j] != 0.0)
          out.row(fragcoal::state_label(gen.states[i]),
                  fragcoal::state_label(gen.states[j]), gen.Q[i][j]);
  }
  if (kernel.lambda() > 0.0) {
    const std::vector<double> pi = fragcoal::stationary_distribution(gen);
    fragcoal::CsvFile out(dir / "stationary.csv", "state,probability");
    for (std::size_t i = 0; i < gen.states.size(); ++i)
      out.row(fragcoal::state_label(gen.states[i]), pi[i]);
    return kOk;
  }
  std::cerr << "warning: lambda == 0, absorbing chain has no unique stationary law; "
               "stationary.csv not written\n";
  return kPartialResult;
}

int cmd_meanfield(const GlobalOpts& opts) {
  const auto cfg_json = require_config(opts);
  fragcoal::MeanFieldConfig cfg(kernel_from_config(cfg_json));
  cfg.j_max = get_or<std::int64_t>(cfg_json, "j_max", 2000);
  cfg.x_grid = get_or<std::vector<double>>(cfg_json, "x_grid", {0.25, 0.5, 0.75, 1.0});
  cfg.t_max = get_required<double>(cfg_json, "t_max");
  cfg.rel_tol = get_or<double>(cfg_json, "rel_tol", 1e-8);
  cfg.abs_tol = get_or<double>(cfg_json, "abs_tol", 1e-10);
  cfg.output_times = get_required<std::vector<double>>(cfg_json, "output_times");
  cfg.leak_bound = get_or<double>(cfg_json, "leak_bound", 1e-6);
  cfg.validate();

  const auto dir = resolve_out_dir(opts);
  fragcoal::ensure_directory(dir);
  const fragcoal::MeanFieldSolution sol = fragcoal::solve_meanfield(cfg);
  const fragcoal::ConsistencyReport consistency = fragcoal::consistency_check(sol);

  {
    fragcoal::CsvFile out(dir / "meanfield_w.csv", "t,j,w_j");
    for (std::size_t ti = 0; ti < sol.times.size(); ++ti)
      for (std::size_t j = 1; j < sol.w[ti].size(); ++j)
        if (sol.w[ti][j] != 0.0)
          out.row(sol.times[ti], static_cast<std::int64_t>(j), sol.w[ti][j]);
  }
  {
    fragcoal::CsvFile out(dir / "meanfield_G.csv", "t,x,G");
    for (std::size_t ti = 0; ti < sol.times.size(); ++ti)
      for (std::size_t xi = 0; xi < sol.x_grid.size(); ++xi)
        out.row(sol.times[ti], sol.x_grid[xi], sol.G[ti][xi]);
  }
  nlohmann::json report;
  report["times"] = sol.times;
  report["leak"] = sol.leak;
  report["max_leak"] = sol.max_leak;
  report["leak_bound"] = cfg.leak_bound;
  report["leak_warning"] = sol.leak_warning;
  report["rel_tol"] = sol.rel_tol;
  report["abs_tol"] = sol.abs_tol;
  report["steps_G"] = sol.steps_G;
  report["steps_w"] = sol.steps_w;
  report["consistency"] = {{"max_abs_discrepancy", consistency.max_abs_discrepancy},
                           {"threshold", consistency.threshold},
                           {"pass", consistency.pass}};
  fragcoal::write_json_file(dir / "meanfield_report.json", report);

  if (sol.leak_warning) {
    std::cerr << "warning: truncation leak " << sol.max_leak << " exceeds bound "
              << cfg.leak_bound << "\n";
    return kPartialResult;
  }
  return kOk;
}

int cmd_stationary(const GlobalOpts& opts) {
  const auto cfg_json = require_config(opts);
  const fragcoal::RateKernel kernel = kernel_from_config(cfg_json);
  const std::int64_t j_max = get_or<std::int64_t>(cfg_json, "j_max", 2000);
  const double lambda = get_or<double>(cfg_json, "lambda", kernel.lambda());

  const auto dir = resolve_out_dir(opts);
  fragcoal::ensure_directory(dir);
  const fragcoal::StationaryW stat = fragcoal::stationary_w(kernel, lambda, j_max);
  {
    fragcoal::CsvFile out(dir / "stationary_w.csv", "j,w_j,p_j");
    for (std::size_t j = 1; j < stat.w.size(); ++j)
      out.row(static_cast<std::int64_t>(j), stat.w[j], stat.p[j]);
  }
  nlohmann::json fp;
  fp["lambda"] = stat.fixed_point.lambda;
  fp["G1"] = stat.fixed_point.G1;
  fp["S"] = stat.fixed_point.S;
  fp["residual"] = stat.fixed_point.residual;
  fp["truncation_residual"] = stat.truncation_residual;
  fragcoal::write_json_file(dir / "fixedpoint.json", fp);

  if (stat.truncation_warning) {
    std::cerr << "warning: truncation insufficient, |sum w - G1| = "
              << stat.truncation_residual << "\n";
    return kPartialResult;
  }
  return kOk;
}

int cmd_limit(const GlobalOpts& opts, std::optional<std::int64_t> m_flag,
              std::optional<std::int64_t> kmax_flag) {
  std::int64_t m = 0, k_max = 0;
  if (!opts.config_path.empty()) {
    const auto cfg_json = fragcoal::load_json_file(opts.config_path);
    m = get_or<std::int64_t>(cfg_json, "m", 0);
    k_max = get_or<std::int64_t>(cfg_json, "k_max", 0);
  }
  if (m_flag) m = *m_flag;
  if (kmax_flag) k_max = *kmax_flag;
  if (m < 2) throw std::invalid_argument("limit: need --m >= 2");
  if (k_max < 1) throw std::invalid_argument("limit: need --kmax >= 1");

  const auto dir = resolve_out_dir(opts);
  fragcoal::ensure_directory(dir);
  const fragcoal::SizeDistribution dist = fragcoal::limit_p(m, k_max);
  fragcoal::CsvFile out(dir / "limit_p.csv", "k,p_k");
  for (std::int64_t k = 1; k <= k_max; ++k) out.row(k, dist.at(k));
  return kOk;
}

int cmd_convergence(const GlobalOpts& opts) {
  const auto cfg_json = require_config(opts);
  const fragcoal::RateKernel kernel = kernel_from_config(cfg_json);
  const auto n_list = get_required<std::vector<std::int64_t>>(cfg_json, "n_list");
  const double lambda = get_or<double>(cfg_json, "lambda", kernel.lambda());
  const auto x_grid = get_required<std::vector<double>>(cfg_json, "x_grid");
  const auto t_list = get_required<std::vector<double>>(cfg_json, "t_list");
  const auto replicas = get_required<std::int64_t>(cfg_json, "replicas");
  std::uint64_t seed = get_or<std::uint64_t>(cfg_json, "seed", 0);
  if (opts.seed) seed = *opts.seed;

  const auto dir = resolve_out_dir(opts);
  fragcoal::ensure_directory(dir);
  const fragcoal::ConvergenceReport report = fragcoal::run_convergence_study(
      n_list, kernel, lambda, x_grid, t_list, replicas, seed, opts.threads);
  fragcoal::write_convergence_csv(report, dir);

  nlohmann::json rj;
  rj["strictly_decreasing"] = report.strictly_decreasing;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : report.entries)
    entries.push_back({{"n", e.n},
                       {"sup_sq_error", e.sup_sq_error},
                       {"stderr", e.stderr_sup}});
  rj["entries"] = entries;
  fragcoal::write_json_file(dir / "convergence_report.json", rj);
  std::cout << (report.strictly_decreasing ? "PASS" : "FAIL")
            << " strict monotone decrease of sup E[(G - G_n)^2]\n";
  return kOk;
}

int cmd_figure1(const GlobalOpts& opts) {
  const auto cfg_json = require_config(opts);
  const std::int64_t n = get_required<std::int64_t>(cfg_json, "n");
  const double lambda = get_required<double>(cfg_json, "lambda");
  const double t_max = get_required<double>(cfg_json, "t_max");
  const double burn_in = get_required<double>(cfg_json, "burn_in");
  const std::int64_t k_max = get_or<std::int64_t>(cfg_json, "k_max", 99);
  std::uint64_t seed = get_or<std::uint64_t>(cfg_json, "seed", 0);
  if (opts.seed) seed = *opts.seed;
  const fragcoal::RateKernel kernel =
      cfg_json.contains("kernel")
          ? fragcoal::RateKernel::from_json(cfg_json.at("kernel"))
          : fragcoal::RateKernel({{3, 1.0}, {4, 2.0}}, lambda);

  const auto dir = resolve_out_dir(opts);
  fragcoal::ensure_directory(dir);
  const fragcoal::Figure1Report report =
      fragcoal::run_figure1(n, lambda, kernel, t_max, burn_in, seed, k_max);
  fragcoal::write_figure1_csv(report, dir);
  fragcoal::write_figure1_plot_script(dir);
  if (report.truncated) {
    std::cerr << "warning: chain absorbed before t_max\n";
    return kPartialResult;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-merger fragmentation-coalescence toolkit"};
  app.require_subcommand(1);

  GlobalOpts opts;
  std::optional<std::int64_t> m_flag, kmax_flag;

  auto add_common = [&](CLI::App* sub, bool with_seed = true) {
    sub->add_option("--config", opts.config_path, "JSON configuration file");
    sub->add_option("--out", opts.out_dir, "output directory (default $FRAGCOAL_OUT or .)");
    if (with_seed) {
      sub->add_option_function<std::uint64_t>(
          "--seed", [&](std::uint64_t s) { opts.seed = s; },
          "override the RNG seed");
    }
    sub->add_option("--threads", opts.threads, "worker threads for ensembles")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* simulate = app.add_subcommand("simulate", "run one exact trajectory");
  add_common(simulate);
  CLI::App* exact = app.add_subcommand("exact", "small-n generator and stationary law");
  add_common(exact, false);
  CLI::App* meanfield = app.add_subcommand("meanfield", "integrate the limit equations");
  add_common(meanfield, false);
  CLI::App* stationary =
      app.add_subcommand("stationary", "stationary fixed point and cluster densities");
  add_common(stationary, false);
  CLI::App* limit = app.add_subcommand("limit", "small-fragmentation limit distribution");
  add_common(limit, false);
  limit->add_option_function<std::int64_t>(
      "--m", [&](std::int64_t v) { m_flag = v; }, "smallest active merge order");
  limit->add_option_function<std::int64_t>(
      "--kmax", [&](std::int64_t v) { kmax_flag = v; }, "largest cluster size");
  CLI::App* convergence =
      app.add_subcommand("convergence", "finite-n to limit convergence study");
  add_common(convergence);
  CLI::App* figure1 =
      app.add_subcommand("figure1", "long-run empirical vs stationary vs limit law");
  add_common(figure1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (app.got_subcommand(simulate)) return cmd_simulate(opts);
    if (app.got_subcommand(exact)) return cmd_exact(opts);
    if (app.got_subcommand(meanfield)) return cmd_meanfield(opts);
    if (app.got_subcommand(stationary)) return cmd_stationary(opts);
    if (app.got_subcommand(limit)) return cmd_limit(opts, m_flag, kmax_flag);
    if (app.got_subcommand(convergence)) return cmd_convergence(opts);
    if (app.got_subcommand(figure1)) return cmd_figure1(opts);
  } catch (const fragcoal::OdeFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::domain_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericError;
  }
  return kConfigError;
}
