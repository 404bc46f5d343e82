#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace fragcoal {

/// Rate parameters of a fragmentation-coalescence process: coalescence
/// rates alpha(k) for k-fold merges (finite support, k >= 2) and a
/// per-cluster shattering rate lambda. Immutable once constructed.
class RateKernel {
 public:
  RateKernel(std::map<std::int64_t, double> alpha, double lambda)
      : alpha_(std::move(alpha)), lambda_(lambda) {
    if (!(lambda_ >= 0.0) || !std::isfinite(lambda_))
      throw std::invalid_argument("RateKernel: lambda must be finite and >= 0");
    if (alpha_.empty())
      throw std::invalid_argument("RateKernel: alpha support is empty");
    min_order_ = 0;
    for (const auto& [k, a] : alpha_) {
      if (k < 2)
        throw std::invalid_argument("RateKernel: alpha keys must be >= 2");
      if (!(a >= 0.0) || !std::isfinite(a))
        throw std::invalid_argument("RateKernel: alpha values must be finite and >= 0");
      if (a > 0.0 && min_order_ == 0) min_order_ = k;
    }
    if (min_order_ == 0)
      throw std::invalid_argument("RateKernel: at least one alpha value must be positive");
  }

  double lambda() const { return lambda_; }
  const std::map<std::int64_t, double>& alpha_map() const { return alpha_; }

  double alpha(std::int64_t k) const {
    auto it = alpha_.find(k);
    return it == alpha_.end() ? 0.0 : it->second;
  }

  /// Smallest k with alpha(k) > 0.
  std::int64_t min_order() const { return min_order_; }
  std::int64_t max_order() const { return alpha_.rbegin()->first; }

  RateKernel with_lambda(double lambda) const { return RateKernel(alpha_, lambda); }

  static RateKernel from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

 private:
  std::map<std::int64_t, double> alpha_;
  double lambda_;
  std::int64_t min_order_;
};

/// True iff alpha(k) <= C * exp(gamma * k * log log k) for every supported
/// k >= k_check. Entries below k_check are only required to be finite.
inline bool kernel_admissible(const RateKernel& kernel, double C, double gamma,
                              std::int64_t k_check = 3) {
  if (gamma >= 1.0) throw std::domain_error("kernel_admissible: gamma must be < 1");
  if (!(C > 0.0)) throw std::domain_error("kernel_admissible: C must be > 0");
  if (k_check < 3)
    throw std::invalid_argument("kernel_admissible: k_check must be >= 3");
  for (const auto& [k, a] : kernel.alpha_map()) {
    if (!std::isfinite(a)) return false;
    if (k < k_check) continue;
    const double kd = static_cast<double>(k);
    // compare in log space: log alpha(k) vs log C + gamma * k * loglog k
    if (a > 0.0 && std::log(a) > std::log(C) + gamma * kd * std::log(std::log(kd)))
      return false;
  }
  return true;
}

inline RateKernel RateKernel::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("kernel: expected JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "lambda" && key != "alpha")
      throw std::invalid_argument("kernel: unknown key '" + key + "'");
  }
  if (!j.contains("lambda") || !j.contains("alpha"))
    throw std::invalid_argument("kernel: requires 'lambda' and 'alpha'");
  if (!j.at("lambda").is_number())
    throw std::invalid_argument("kernel: 'lambda' must be a number");
  const double lambda = j.at("lambda").get<double>();
  const auto& ja = j.at("alpha");
  if (!ja.is_object() || ja.empty())
    throw std::invalid_argument("kernel: 'alpha' must be a non-empty object");
  std::map<std::int64_t, double> alpha;
  for (const auto& [key, value] : ja.items()) {
    std::size_t pos = 0;
    std::int64_t k = 0;
    try {
      k = std::stoll(key, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("kernel: alpha key '" + key + "' is not an integer");
    }
    if (pos != key.size() || key.empty() || key[0] == '+' ||
        (key.size() > 1 && key[0] == '0'))
      throw std::invalid_argument("kernel: alpha key '" + key + "' is not a decimal integer");
    if (k < 2)
      throw std::invalid_argument("kernel: alpha key '" + key + "' must be >= 2");
    if (!value.is_number())
      throw std::invalid_argument("kernel: alpha values must be numbers");
    alpha[k] = value.get<double>();
  }
  return RateKernel(std::move(alpha), lambda);
}

inline nlohmann::json RateKernel::to_json() const {
  nlohmann::json ja = nlohmann::json::object();
  for (const auto& [k, a] : alpha_) ja[std::to_string(k)] = a;
  return nlohmann::json{{"lambda", lambda_}, {"alpha", ja}};
}

}  // namespace fragcoal
