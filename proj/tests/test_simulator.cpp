#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

#include "fragcoal/exact_oracle.hpp"
#include "fragcoal/simulator.hpp"
#include "support/oracles.hpp"

using fragcoal::compute_event_rates;
using fragcoal::EventType;
using fragcoal::RateKernel;
using fragcoal::SimConfig;
using fragcoal::SystemState;
using fragcoal::Xoshiro256pp;

TEST_CASE("event rates on small states", "[simulator]") {
  {
    const SystemState s = SystemState::singletons(4);
    const auto rates = compute_event_rates(s, RateKernel({{2, 1.0}}, 1.0));
    CHECK(rates.merge_rate.at(2) == Catch::Approx(1.5).margin(1e-15));  // C(4,2)/4
    CHECK(rates.frag_rate == 0.0);
    CHECK(rates.total == Catch::Approx(1.5).margin(1e-15));
  }
  {
    const SystemState s = SystemState::singletons(2);
    const auto rates = compute_event_rates(s, RateKernel({{2, 1.0}}, 0.0));
    CHECK(rates.merge_rate.at(2) == Catch::Approx(0.5).margin(1e-15));
  }
  {
    const SystemState s = SystemState::singletons(2);
    const auto rates = compute_event_rates(s, RateKernel({{3, 1.0}}, 0.0));
    CHECK(rates.merge_rate.at(3) == 0.0);  // C(2,3) = 0
    CHECK(rates.total == 0.0);
  }
}

TEST_CASE("running product matches exact integer rate", "[simulator][property]") {
  Xoshiro256pp rng(7u);
  for (int trial = 0; trial < 300; ++trial) {
    const std::int64_t n = 2 + static_cast<std::int64_t>(fragcoal::uniform_below(rng, 999));
    const std::int64_t b = 1 + static_cast<std::int64_t>(
                                   fragcoal::uniform_below(rng, static_cast<std::uint64_t>(n)));
    const std::int64_t k =
        2 + static_cast<std::int64_t>(fragcoal::uniform_below(rng, 5));  // 2..6
    const double alpha = 0.25 + static_cast<double>(fragcoal::uniform_below(rng, 8));

    // state with b clusters summing to n
    SystemState s = SystemState::singletons(n);
    if (b < n) s.merge_prefix(static_cast<std::size_t>(n - b + 1));
    REQUIRE(s.cluster_count() == b);

    const auto rates = compute_event_rates(s, RateKernel({{k, alpha}}, 0.0));
    const long double exact = oracles::exact_merge_rate(alpha, n, b, k);
    if (exact == 0.0L) {
      CHECK(rates.merge_rate.at(k) == 0.0);
    } else {
      const long double rel =
          std::abs(static_cast<long double>(rates.merge_rate.at(k)) - exact) / exact;
      CHECK(static_cast<double>(rel) <= 1e-12);
    }
  }
}

TEST_CASE("forced moves", "[simulator]") {
  {
    // single cluster, lambda > 0: only fragmentation is possible
    SystemState s = SystemState::singletons(5);
    s.merge_prefix(5);
    Xoshiro256pp rng(1u);
    const auto rec = fragcoal::step(s, RateKernel({{2, 1.0}}, 2.0), rng);
    CHECK(rec.type == EventType::fragment);
    CHECK(rec.sizes == std::vector<std::int64_t>{5});
    CHECK(s.cluster_count() == 5);
    CHECK(s.count_of(1) == 5);
  }
  {
    // all singletons: singleton fragmentation is excluded, so a pair merge
    SystemState s = SystemState::singletons(6);
    Xoshiro256pp rng(2u);
    const auto rec = fragcoal::step(s, RateKernel({{2, 1.0}}, 5.0), rng);
    CHECK(rec.type == EventType::merge);
    CHECK(s.cluster_count() == 5);
    CHECK(s.count_of(2) == 1);
  }
  {
    // absorbing: lambda = 0 and too few clusters to merge
    SystemState s = SystemState::singletons(4);
    s.merge_prefix(4);
    Xoshiro256pp rng(3u);
    const auto rec = fragcoal::step(s, RateKernel({{2, 1.0}}, 0.0), rng);
    CHECK(rec.type == EventType::absorbed);
    CHECK(s.cluster_count() == 1);
    CHECK(s.time() == 0.0);
  }
}

TEST_CASE("two-state long-run occupancy", "[simulator]") {
  // n=2, alpha(2)=1, lambda=0.5: both jump rates are 1/2, so the chain
  // spends half its time merged.
  SimConfig cfg(2, RateKernel({{2, 1.0}}, 0.5));
  cfg.t_max = 2e4;
  cfg.seed = 99u;
  const auto record = fragcoal::run(cfg);
  CHECK(record.time_averaged_p.at(2) == Catch::Approx(0.5).margin(0.03));
  CHECK(record.sojourn_weight_total ==
        Catch::Approx(cfg.t_max).epsilon(1e-9));
}

TEST_CASE("mass conservation and count deltas along a long run", "[simulator][property]") {
  const RateKernel kernel({{2, 0.8}, {3, 1.2}, {4, 0.3}}, 0.6);
  SystemState s = SystemState::singletons(300);
  Xoshiro256pp rng(11u);
  for (int ev = 0; ev < 20000; ++ev) {
    const std::int64_t b = s.cluster_count();
    const auto rec = fragcoal::step(s, kernel, rng);
    REQUIRE(rec.type != EventType::absorbed);
    const std::int64_t mass =
        std::accumulate(s.clusters().begin(), s.clusters().end(), std::int64_t{0});
    REQUIRE(mass == 300);
    if (rec.type == EventType::merge) {
      REQUIRE(s.cluster_count() ==
              b - static_cast<std::int64_t>(rec.sizes.size()) + 1);
    } else {
      REQUIRE(s.cluster_count() == b + rec.sizes[0] - 1);
    }
    if (ev % 500 == 0) REQUIRE(s.check_consistency());
  }
  REQUIRE(s.check_consistency());
}

TEST_CASE("jump-chain frequencies match the generator rows", "[simulator][oracle]") {
  struct Setup {
    std::int64_t n;
    RateKernel kernel;
    std::uint64_t seed;
  };
  const Setup setups[] = {
      {5, RateKernel({{2, 0.7}, {3, 1.3}}, 0.9), 12345u},
      {6, RateKernel({{3, 2.0}}, 0.6), 999u},
  };
  for (const auto& setup : setups) {
    const auto gen = fragcoal::build_generator(setup.n, setup.kernel);
    const std::size_t dim = gen.states.size();

    std::vector<std::vector<std::int64_t>> counts(dim,
                                                  std::vector<std::int64_t>(dim, 0));
    SystemState s = SystemState::singletons(setup.n);
    Xoshiro256pp rng(setup.seed);
    const std::int64_t events = 150000;
    std::size_t from = fragcoal::partition_index(gen, s.histogram());
    for (std::int64_t ev = 0; ev < events; ++ev) {
      const auto rec = fragcoal::step(s, setup.kernel, rng);
      REQUIRE(rec.type != EventType::absorbed);
      const std::size_t to = fragcoal::partition_index(gen, s.histogram());
      ++counts[from][to];
      from = to;
    }

    for (std::size_t i = 0; i < dim; ++i) {
      const std::int64_t row_total =
          std::accumulate(counts[i].begin(), counts[i].end(), std::int64_t{0});
      if (row_total < 200) continue;  // too few visits for a frequency check
      const double out_rate = -gen.Q[i][i];
      for (std::size_t j = 0; j < dim; ++j) {
        if (i == j) continue;
        const double p = gen.Q[i][j] / out_rate;  // jump-chain probability
        const double expected = p * static_cast<double>(row_total);
        const double sigma =
            std::sqrt(std::max(1.0, static_cast<double>(row_total) * p * (1.0 - p)));
        CHECK(std::abs(static_cast<double>(counts[i][j]) - expected) <=
              3.0 * sigma + 1.0);
      }
    }
  }
}

TEST_CASE("sojourn occupancy matches the stationary law", "[simulator][oracle][slow]") {
  const std::int64_t n = 6;
  const RateKernel kernel({{2, 1.0}}, 1.0);
  const auto gen = fragcoal::build_generator(n, kernel);
  const auto pi = fragcoal::stationary_distribution(gen);

  SimConfig cfg(n, kernel);
  cfg.t_max = 1e5;
  cfg.seed = 4242u;
  const auto record = fragcoal::run(cfg);

  // fold the sojourn-averaged size distribution back onto partition states:
  // re-run the trajectory logic is unnecessary -- instead accumulate state
  // occupancy directly with a second pass driven by the same seed.
  SystemState s = SystemState::singletons(n);
  Xoshiro256pp rng(cfg.seed);
  std::vector<double> occupancy(gen.states.size(), 0.0);
  double t = 0.0;
  while (t < cfg.t_max) {
    const auto ev = fragcoal::draw_event(s, kernel, rng);
    REQUIRE(ev.has_value());
    const double hold = std::min(ev->dt, cfg.t_max - t);
    occupancy[fragcoal::partition_index(gen, s.histogram())] += hold;
    if (t + ev->dt >= cfg.t_max) break;
    t += ev->dt;
    fragcoal::apply_event(s, *ev, rng);
  }
  double tv = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i)
    tv += std::abs(occupancy[i] / cfg.t_max - pi[i]);
  tv *= 0.5;
  CHECK(tv <= 0.01);

  // and the run() record's own averaged p agrees with the pi-weighted size law
  std::vector<double> p_expected(static_cast<std::size_t>(n) + 1, 0.0);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const double b = static_cast<double>(gen.states[i].cluster_count());
    for (const auto& [size, mult] : gen.states[i].counts)
      p_expected[static_cast<std::size_t>(size)] +=
          pi[i] * static_cast<double>(mult) / b;
  }
  for (std::int64_t k = 1; k <= n; ++k)
    CHECK(record.time_averaged_p.at(k) ==
          Catch::Approx(p_expected[static_cast<std::size_t>(k)]).margin(0.01));
}

TEST_CASE("pure coalescent snapshot matches the closed form", "[simulator][slow]") {
  SimConfig cfg(10000, RateKernel({{2, 1.0}}, 0.0));
  cfg.t_max = 2.5;
  cfg.snapshot_times = {2.0};
  cfg.record_G_at = {1.0};
  cfg.seed = 31337u;
  const auto record = fragcoal::run(cfg);
  REQUIRE(record.snapshots.size() == 1);
  const auto& snap = record.snapshots[0];
  const double w1 = snap.p.at(1) * static_cast<double>(snap.cluster_count) /
                    static_cast<double>(cfg.n);
  // w_1(2) = 0.25; three Monte Carlo standard errors of roughly sqrt(w1/n)
  CHECK(w1 == Catch::Approx(oracles::pure_coalescent_w(1, 2.0)).margin(0.015));
}

TEST_CASE("run is deterministic given the seed", "[simulator]") {
  SimConfig cfg(50, RateKernel({{2, 1.0}, {3, 0.5}}, 0.7));
  cfg.t_max = 20.0;
  cfg.burn_in = 1.0;
  cfg.snapshot_times = {0.0, 5.0, 20.0};
  cfg.record_G_at = {0.5, 1.0};
  cfg.seed = 77u;
  const auto a = fragcoal::run(cfg);
  const auto b = fragcoal::run(cfg);
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
    CHECK(a.snapshots[i].p.p == b.snapshots[i].p.p);
    CHECK(a.snapshots[i].G.values == b.snapshots[i].G.values);
  }
  CHECK(a.time_averaged_p.p == b.time_averaged_p.p);
  CHECK(a.event_counts == b.event_counts);
  CHECK(a.final_cluster_count == b.final_cluster_count);
}

TEST_CASE("absorbing pure coalescent truncates but fills the window", "[simulator]") {
  SimConfig cfg(40, RateKernel({{2, 1.0}}, 0.0));
  cfg.t_max = 5000.0;
  cfg.snapshot_times = {4999.0};
  cfg.record_G_at = {1.0};
  cfg.seed = 5u;
  const auto record = fragcoal::run(cfg);
  CHECK(record.truncated);
  CHECK(record.final_cluster_count == 1);
  REQUIRE(record.snapshots.size() == 1);
  CHECK(record.snapshots[0].p.at(40) == 1.0);
  CHECK(record.sojourn_weight_total == Catch::Approx(5000.0).epsilon(1e-9));
}

TEST_CASE("ensemble basics", "[simulator]") {
  SimConfig cfg(100, RateKernel({{2, 1.0}}, 0.1));
  cfg.t_max = 1.0;
  cfg.snapshot_times = {0.0, 1.0};
  cfg.record_G_at = {0.3, 1.0};
  const auto single = fragcoal::ensemble(cfg, 1, 9001u);
  SimConfig same = cfg;
  same.seed = fragcoal::replica_seed(9001u, 0);
  const auto direct = fragcoal::run(same);
  CHECK(single.records[0].snapshots[1].G.values == direct.snapshots[1].G.values);
  for (std::size_t ti = 0; ti < 2; ++ti)
    for (std::size_t xi = 0; xi < 2; ++xi) {
      CHECK(single.stats.mean[ti][xi] == direct.snapshots[ti].G.values[xi]);
      CHECK(std::isnan(single.stats.variance[ti][xi]));
    }

  // deterministic initial condition: mean exactly x, variance exactly zero
  const auto ens = fragcoal::ensemble(cfg, 8, 40u);
  CHECK(ens.stats.mean[0][0] == 0.3);
  CHECK(ens.stats.mean[0][1] == 1.0);
  CHECK(ens.stats.variance[0][0] == 0.0);
  CHECK(ens.stats.variance[0][1] == 0.0);

  CHECK_THROWS_AS(fragcoal::ensemble(cfg, 0, 1u), std::invalid_argument);
}

TEST_CASE("ensemble variance of G shrinks with n", "[simulator][slow]") {
  double var_small = 0.0, var_large = 0.0;
  for (const std::int64_t n : {100, 10000}) {
    SimConfig cfg(n, RateKernel({{2, 1.0}}, 0.1));
    cfg.t_max = 1.0;
    cfg.snapshot_times = {1.0};
    cfg.record_G_at = {1.0};
    const auto ens = fragcoal::ensemble(cfg, 300, 777u);
    (n == 100 ? var_small : var_large) = ens.stats.variance[0][0];
  }
  CHECK(var_large < var_small);
  CHECK(var_large < var_small / 10.0);  // roughly 1/n scaling leaves lots of room
}

TEST_CASE("ensemble is thread-count independent", "[simulator]") {
  SimConfig cfg(200, RateKernel({{2, 1.0}, {3, 0.4}}, 0.3));
  cfg.t_max = 2.0;
  cfg.snapshot_times = {1.0, 2.0};
  cfg.record_G_at = {0.5, 1.0};
  const auto serial = fragcoal::ensemble(cfg, 16, 5150u, 1);
  const auto parallel = fragcoal::ensemble(cfg, 16, 5150u, 4);
  CHECK(serial.stats.mean == parallel.stats.mean);
  CHECK(serial.stats.variance == parallel.stats.variance);
}
