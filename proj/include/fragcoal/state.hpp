#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fragcoal {

/// Cluster size distribution p_k (fraction of clusters of size k).
/// Index 0 is unused; p[k] is the probability of size k for 1 <= k <= truncation.
struct SizeDistribution {
  std::vector<double> p;
  std::int64_t truncation = 0;
  double tail_mass_estimate = 0.0;

  double at(std::int64_t k) const {
    return (k >= 1 && k < static_cast<std::int64_t>(p.size())) ? p[k] : 0.0;
  }
  double sum() const {
    double s = 0.0;
    for (std::size_t k = 1; k < p.size(); ++k) s += p[k];
    return s;
  }
};

/// Values of a generating function sampled on a grid of x in [0,1].
struct GeneratingFunctionGrid {
  std::vector<double> x_points;
  std::vector<double> values;
  double t = 0.0;
};

/// Exact configuration of the finite-n process: a multiset of cluster sizes
/// summing to n, plus the current process time. The histogram mirrors the
/// cluster array at all times; every mutation below preserves total mass.
class SystemState {
 public:
  static SystemState singletons(std::int64_t n) {
    if (n < 1) throw std::domain_error("SystemState: n must be >= 1");
    SystemState s;
    s.n_ = n;
    s.clusters_.assign(static_cast<std::size_t>(n), 1);
    s.histogram_[1] = n;
    s.t_ = 0.0;
    return s;
  }

  std::int64_t n() const { return n_; }
  double time() const { return t_; }
  const std::vector<std::int64_t>& clusters() const { return clusters_; }
  const std::map<std::int64_t, std::int64_t>& histogram() const { return histogram_; }
  std::int64_t cluster_count() const { return static_cast<std::int64_t>(clusters_.size()); }

  std::int64_t count_of(std::int64_t size) const {
    auto it = histogram_.find(size);
    return it == histogram_.end() ? 0 : it->second;
  }

  void advance_time(double dt) { t_ += dt; }

  void swap_clusters(std::size_t i, std::size_t j) {
    std::swap(clusters_[i], clusters_[j]);
  }

  /// Merge the first k clusters into a single cluster of summed size.
  /// Returns the merged size.
  std::int64_t merge_prefix(std::size_t k) {
    std::int64_t merged = 0;
    for (std::size_t i = 0; i < k; ++i) {
      merged += clusters_[i];
      histogram_dec(clusters_[i]);
    }
    // Backfill the prefix holes from the tail, then shrink.
    const std::size_t b = clusters_.size();
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t from = b - 1 - i;
      if (from < k) break;
      clusters_[i] = clusters_[from];
    }
    clusters_.resize(b - k);
    clusters_.push_back(merged);
    histogram_inc(merged);
    return merged;
  }

  /// Shatter the cluster at index i into singletons. Returns its size.
  std::int64_t fragment_at(std::size_t i) {
    const std::int64_t s = clusters_[i];
    histogram_dec(s);
    clusters_[i] = 1;
    if (s > 1) clusters_.insert(clusters_.end(), static_cast<std::size_t>(s - 1), 1);
    histogram_[1] += s;
    return s;
  }

  /// Rebuild the histogram from the cluster array and compare; also checks
  /// total mass. Intended for tests.
  bool check_consistency() const {
    std::map<std::int64_t, std::int64_t> tally;
    std::int64_t mass = 0;
    for (std::int64_t c : clusters_) {
      if (c < 1) return false;
      ++tally[c];
      mass += c;
    }
    return mass == n_ && tally == histogram_;
  }

 private:
  void histogram_inc(std::int64_t size) { ++histogram_[size]; }
  void histogram_dec(std::int64_t size) {
    auto it = histogram_.find(size);
    if (--it->second == 0) histogram_.erase(it);
  }

  std::int64_t n_ = 0;
  std::vector<std::int64_t> clusters_;
  std::map<std::int64_t, std::int64_t> histogram_;
  double t_ = 0.0;
};

/// G_n(x) = sum_k x^k * (#clusters of size k) / n.
inline double empirical_G(const SystemState& state, double x) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::domain_error("empirical_G: x must lie in [0,1]");
  if (x == 1.0)
    return static_cast<double>(state.cluster_count()) / static_cast<double>(state.n());
  double acc = 0.0;
  for (const auto& [size, count] : state.histogram())
    acc += std::pow(x, static_cast<double>(size)) * static_cast<double>(count);
  return acc / static_cast<double>(state.n());
}

inline GeneratingFunctionGrid empirical_G_grid(const SystemState& state,
                                               std::span<const double> xs) {
  GeneratingFunctionGrid grid;
  grid.t = state.time();
  grid.x_points.assign(xs.begin(), xs.end());
  grid.values.reserve(xs.size());
  for (double x : xs) grid.values.push_back(empirical_G(state, x));
  return grid;
}

/// p_k = (#clusters of size k) / (#clusters).
inline SizeDistribution empirical_p(const SystemState& state) {
  SizeDistribution dist;
  const double b = static_cast<double>(state.cluster_count());
  const std::int64_t kmax = state.histogram().empty() ? 0 : state.histogram().rbegin()->first;
  dist.truncation = kmax;
  dist.p.assign(static_cast<std::size_t>(kmax) + 1, 0.0);
  for (const auto& [size, count] : state.histogram())
    dist.p[static_cast<std::size_t>(size)] = static_cast<double>(count) / b;
  return dist;
}

}  // namespace fragcoal
