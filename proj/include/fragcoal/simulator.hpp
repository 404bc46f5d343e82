#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "fragcoal/kernel.hpp"
#include "fragcoal/rng.hpp"
#include "fragcoal/state.hpp"

namespace fragcoal {

struct SimConfig {
  std::int64_t n;
  RateKernel kernel;
  double t_max = 0.0;
  double burn_in = 0.0;
  std::vector<double> snapshot_times;
  std::uint64_t seed = 0;
  std::vector<double> record_G_at;

  SimConfig(std::int64_t n_, RateKernel kernel_) : n(n_), kernel(std::move(kernel_)) {}

  void validate() const {
    if (n < 1) throw std::invalid_argument("SimConfig: n must be >= 1");
    if (!(t_max > 0.0)) throw std::invalid_argument("SimConfig: t_max must be > 0");
    if (!(burn_in >= 0.0) || !(burn_in < t_max))
      throw std::invalid_argument("SimConfig: need 0 <= burn_in < t_max");
    if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end()))
      throw std::invalid_argument("SimConfig: snapshot_times must be sorted");
    for (double s : snapshot_times)
      if (!(s >= 0.0 && s <= t_max))
        throw std::invalid_argument("SimConfig: snapshot_times must lie in [0, t_max]");
    for (double x : record_G_at)
      if (!(x >= 0.0 && x <= 1.0))
        throw std::invalid_argument("SimConfig: record_G_at values must lie in [0,1]");
  }
};

struct EventRates {
  double frag_rate = 0.0;
  std::map<std::int64_t, double> merge_rate;
  double total = 0.0;
};

/// Total jump rates out of the current state. With b clusters the k-merge
/// rate is alpha(k) n^{1-k} C(b,k), evaluated as alpha(k)/k! * n * prod of
/// (b-i)/n factors so nothing overflows for large b and k. Fragmentation of
/// singletons is a no-op and excluded from the event space.
inline EventRates compute_event_rates(const SystemState& state, const RateKernel& kernel) {
  EventRates rates;
  const std::int64_t b = state.cluster_count();
  const double n = static_cast<double>(state.n());
  rates.frag_rate = kernel.lambda() * static_cast<double>(b - state.count_of(1));
  rates.total = rates.frag_rate;
  for (const auto& [k, a] : kernel.alpha_map()) {
    double rate = 0.0;
    if (a > 0.0 && b >= k) {
      double prod = 1.0;
      double kfact = 1.0;
      for (std::int64_t i = 0; i < k; ++i) {
        prod *= static_cast<double>(b - i) / n;
        kfact *= static_cast<double>(i + 1);
      }
      rate = a / kfact * n * prod;
    }
    rates.merge_rate[k] = rate;
    rates.total += rate;
  }
  return rates;
}

enum class EventType { merge, fragment, absorbed };

struct EventRecord {
  EventType type = EventType::absorbed;
  double dt = 0.0;
  std::vector<std::int64_t> sizes;  // merge: the k merged sizes; fragment: {s}
};

struct PendingEvent {
  EventType type;
  double dt;
  std::int64_t merge_order = 0;
};

/// Draw the waiting time and event category without mutating the state.
/// Returns nullopt if the state is absorbing (total rate zero).
template <class Rng>
std::optional<PendingEvent> draw_event(const SystemState& state, const RateKernel& kernel,
                                       Rng& rng) {
  const EventRates rates = compute_event_rates(state, kernel);
  if (!(rates.total > 0.0)) return std::nullopt;
  const double dt = exponential(rng, rates.total);
  double u = uniform_half_open(rng) * rates.total;
  if (rates.frag_rate > 0.0) {
    if (u < rates.frag_rate) return PendingEvent{EventType::fragment, dt, 0};
    u -= rates.frag_rate;
  }
  std::int64_t last_positive = 0;
  for (const auto& [k, rate] : rates.merge_rate) {
    if (rate > 0.0) {
      if (u < rate) return PendingEvent{EventType::merge, dt, k};
      u -= rate;
      last_positive = k;
    }
  }
  // rounding pushed u past the end; attribute to the last positive category
  if (last_positive > 0) return PendingEvent{EventType::merge, dt, last_positive};
  return PendingEvent{EventType::fragment, dt, 0};
}

/// Apply a drawn event: uniform k-subset selection by partial Fisher-Yates
/// for merges (all subsets equally likely because rates are size-blind),
/// uniform choice among clusters of size >= 2 for fragmentation. The
/// on_count_change callback fires with (size, count_before) for every
/// histogram entry the event is about to modify.
template <class Rng, class TouchFn>
EventRecord apply_event(SystemState& state, const PendingEvent& ev, Rng& rng,
                        TouchFn&& on_count_change) {
  EventRecord rec;
  rec.type = ev.type;
  rec.dt = ev.dt;
  if (ev.type == EventType::fragment) {
    const auto b = static_cast<std::uint64_t>(state.cluster_count());
    std::size_t idx;
    do {
      idx = static_cast<std::size_t>(uniform_below(rng, b));
    } while (state.clusters()[idx] < 2);
    const std::int64_t s = state.clusters()[idx];
    on_count_change(s, state.count_of(s));
    on_count_change(std::int64_t{1}, state.count_of(1));
    rec.sizes.push_back(s);
    state.fragment_at(idx);
  } else {
    const auto k = static_cast<std::size_t>(ev.merge_order);
    const auto b = static_cast<std::uint64_t>(state.cluster_count());
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, b - i));
      state.swap_clusters(i, j);
    }
    rec.sizes.assign(state.clusters().begin(),
                     state.clusters().begin() + static_cast<std::ptrdiff_t>(k));
    std::int64_t merged = 0;
    for (std::size_t i = 0; i < rec.sizes.size(); ++i) {
      merged += rec.sizes[i];
      bool first = true;  // touch each distinct size once
      for (std::size_t j = 0; j < i; ++j)
        if (rec.sizes[j] == rec.sizes[i]) {
          first = false;
          break;
        }
      if (first) on_count_change(rec.sizes[i], state.count_of(rec.sizes[i]));
    }
    on_count_change(merged, state.count_of(merged));
    state.merge_prefix(k);
  }
  state.advance_time(ev.dt);
  return rec;
}

template <class Rng>
EventRecord apply_event(SystemState& state, const PendingEvent& ev, Rng& rng) {
  return apply_event(state, ev, rng, [](std::int64_t, std::int64_t) {});
}

/// One exact jump of the process. Returns an absorbed record (type ==
/// EventType::absorbed) and leaves the state untouched when no event is
/// possible.
template <class Rng>
EventRecord step(SystemState& state, const RateKernel& kernel, Rng& rng) {
  const auto ev = draw_event(state, kernel, rng);
  if (!ev) return EventRecord{};
  return apply_event(state, *ev, rng);
}

namespace detail {

// Accumulates A_k = integral of p_k(t) dt over [burn_in, t_end] lazily:
// R(t) = integral dt/b(t) advances each holding interval, and a size's
// contribution h_k * dR is flushed only when its count changes.
class OccupancyAccumulator {
 public:
  OccupancyAccumulator(double burn_in, double t_end) : burn_(burn_in), end_(t_end) {}

  void advance(double t0, double t1, double cluster_count) {
    const double lo = std::max(t0, burn_);
    const double hi = std::min(t1, end_);
    if (hi > lo) R_ += (hi - lo) / cluster_count;
  }

  void touch(std::int64_t size, std::int64_t count_before) {
    Entry& e = entries_[size];
    e.acc += static_cast<double>(count_before) * (R_ - e.lastR);
    e.lastR = R_;
  }

  SizeDistribution finish(const std::map<std::int64_t, std::int64_t>& histogram) {
    for (const auto& [size, count] : histogram) touch(size, count);
    std::int64_t kmax = 0;
    for (const auto& [size, e] : entries_)
      if (e.acc > 0.0) kmax = std::max(kmax, size);
    SizeDistribution dist;
    dist.truncation = kmax;
    dist.p.assign(static_cast<std::size_t>(kmax) + 1, 0.0);
    const double window = end_ - burn_;
    for (const auto& [size, e] : entries_)
      if (size <= kmax) dist.p[static_cast<std::size_t>(size)] = e.acc / window;
    return dist;
  }

  double weight_total() const {
    double s = 0.0;
    for (const auto& [size, e] : entries_) s += e.acc;
    return s;
  }

 private:
  struct Entry {
    double acc = 0.0;
    double lastR = 0.0;
  };
  double R_ = 0.0;
  double burn_;
  double end_;
  std::unordered_map<std::int64_t, Entry> entries_;
};

}  // namespace detail

struct TrajectorySnapshot {
  double t = 0.0;
  SizeDistribution p;
  GeneratingFunctionGrid G;
  std::int64_t cluster_count = 0;
};

struct TrajectoryRecord {
  std::vector<TrajectorySnapshot> snapshots;
  SizeDistribution time_averaged_p;
  double sojourn_weight_total = 0.0;  // should equal t_max - burn_in
  std::map<std::string, std::int64_t> event_counts;
  bool truncated = false;  // absorbing state reached before t_max
  double final_time = 0.0;
  std::int64_t final_cluster_count = 0;
};

/// Run one trajectory from the all-singleton state. Deterministic given the
/// seed. Snapshots record the state holding just before each requested time;
/// the time-averaged distribution weights each visited state by its sojourn
/// time clipped to [burn_in, t_max]. If the chain absorbs (lambda = 0), the
/// absorbing state fills the remaining window and `truncated` is set.
inline TrajectoryRecord run(const SimConfig& config) {
  config.validate();
  SystemState state = SystemState::singletons(config.n);
  Xoshiro256pp rng(config.seed);
  detail::OccupancyAccumulator occupancy(config.burn_in, config.t_max);
  TrajectoryRecord record;
  std::size_t snap_idx = 0;
  std::int64_t fragment_events = 0;
  std::map<std::int64_t, std::int64_t> merge_events;

  auto emit_snapshots_through = [&](double t_end) {
    while (snap_idx < config.snapshot_times.size() &&
           config.snapshot_times[snap_idx] <= t_end) {
      TrajectorySnapshot snap;
      snap.t = config.snapshot_times[snap_idx];
      snap.p = empirical_p(state);
      snap.G = empirical_G_grid(state, config.record_G_at);
      snap.G.t = snap.t;
      snap.cluster_count = state.cluster_count();
      record.snapshots.push_back(std::move(snap));
      ++snap_idx;
    }
  };

  while (true) {
    const auto ev = draw_event(state, config.kernel, rng);
    const double t0 = state.time();
    const bool final_interval = !ev || t0 + ev->dt >= config.t_max;
    const double t1 = final_interval ? config.t_max : t0 + ev->dt;
    emit_snapshots_through(t1);
    occupancy.advance(t0, t1, static_cast<double>(state.cluster_count()));
    if (final_interval) {
      if (!ev) record.truncated = true;
      state.advance_time(config.t_max - t0);
      break;
    }
    const EventRecord rec = apply_event(
        state, *ev, rng,
        [&](std::int64_t size, std::int64_t count) { occupancy.touch(size, count); });
    if (rec.type == EventType::fragment)
      ++fragment_events;
    else
      ++merge_events[static_cast<std::int64_t>(rec.sizes.size())];
  }

  if (fragment_events > 0) record.event_counts["fragment"] = fragment_events;
  for (const auto& [k, c] : merge_events)
    record.event_counts["merge_" + std::to_string(k)] = c;
  record.time_averaged_p = occupancy.finish(state.histogram());
  record.sojourn_weight_total = occupancy.weight_total();
  record.final_time = state.time();
  record.final_cluster_count = state.cluster_count();
  return record;
}

struct EnsembleStats {
  std::vector<double> times;  // snapshot times
  std::vector<double> xs;     // record_G_at grid
  std::vector<std::vector<double>> mean;      // [time][x], mean of G_n(x,t)
  std::vector<std::vector<double>> variance;  // sample variance; NaN for 1 replica
};

struct EnsembleResult {
  std::vector<TrajectoryRecord> records;
  EnsembleStats stats;
};

/// Independent replicas with seeds base_seed + r (scrambled inside the
/// generator). Statistics are merged in replica-index order, so the result
/// does not depend on the thread count.
inline EnsembleResult ensemble(const SimConfig& config, std::int64_t replicas,
                               std::uint64_t base_seed, int threads = 1) {
  if (replicas < 1) throw std::invalid_argument("ensemble: replicas must be >= 1");
  config.validate();
  EnsembleResult result;
  result.records.resize(static_cast<std::size_t>(replicas));

  auto run_replica = [&](std::int64_t r) {
    SimConfig local = config;
    local.seed = replica_seed(base_seed, static_cast<std::uint64_t>(r));
    result.records[static_cast<std::size_t>(r)] = run(local);
  };

  if (threads <= 1 || replicas == 1) {
    for (std::int64_t r = 0; r < replicas; ++r) run_replica(r);
  } else {
    std::atomic<std::int64_t> next{0};
    const int nworkers = static_cast<int>(std::min<std::int64_t>(threads, replicas));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nworkers));
    for (int w = 0; w < nworkers; ++w)
      pool.emplace_back([&] {
        for (std::int64_t r = next.fetch_add(1); r < replicas; r = next.fetch_add(1))
          run_replica(r);
      });
    for (auto& th : pool) th.join();
  }

  EnsembleStats& stats = result.stats;
  stats.times = config.snapshot_times;
  stats.xs = config.record_G_at;
  const std::size_t nt = stats.times.size();
  const std::size_t nx = stats.xs.size();
  stats.mean.assign(nt, std::vector<double>(nx, 0.0));
  stats.variance.assign(nt, std::vector<double>(nx, 0.0));
  std::vector<std::vector<double>> m2(nt, std::vector<double>(nx, 0.0));
  // Welford, strictly in replica order.
  for (std::int64_t r = 0; r < replicas; ++r) {
    const auto& snaps = result.records[static_cast<std::size_t>(r)].snapshots;
    for (std::size_t ti = 0; ti < nt; ++ti)
      for (std::size_t xi = 0; xi < nx; ++xi) {
        const double value = snaps[ti].G.values[xi];
        const double delta = value - stats.mean[ti][xi];
        stats.mean[ti][xi] += delta / static_cast<double>(r + 1);
        m2[ti][xi] += delta * (value - stats.mean[ti][xi]);
      }
  }
  for (std::size_t ti = 0; ti < nt; ++ti)
    for (std::size_t xi = 0; xi < nx; ++xi)
      stats.variance[ti][xi] =
          replicas > 1 ? m2[ti][xi] / static_cast<double>(replicas - 1)
                       : std::numeric_limits<double>::quiet_NaN();
  return result;
}

}  // namespace fragcoal
