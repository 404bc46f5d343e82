#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fragcoal {

/// Raised when adaptive step control can no longer make progress.
struct OdeFailure : std::runtime_error {
  explicit OdeFailure(double time)
      : std::runtime_error("ODE step size underflow at t = " + std::to_string(time)),
        t(time) {}
  double t;
};

struct OdeOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double initial_step = 0.0;  // 0: pick automatically
  std::int64_t max_steps = 20'000'000;
};

struct OdeResult {
  std::vector<std::vector<double>> at_output;  // one state vector per output time
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
};

/// Dormand-Prince 5(4) with FSAL and PI-free step control; solution values
/// at output_times come from cubic Hermite interpolation over each accepted
/// step. rhs signature: void(double t, const std::vector<double>& y,
/// std::vector<double>& dydt).
template <class Rhs>
OdeResult integrate_dopri5(Rhs&& rhs, std::vector<double> y, double t0, double t1,
                           std::span<const double> output_times, const OdeOptions& opt) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  if (!(t1 >= t0)) throw std::invalid_argument("integrate_dopri5: t1 must be >= t0");
  for (std::size_t i = 1; i < output_times.size(); ++i)
    if (output_times[i] < output_times[i - 1])
      throw std::invalid_argument("integrate_dopri5: output_times must be sorted");

  const std::size_t dim = y.size();
  OdeResult result;
  result.at_output.reserve(output_times.size());
  std::size_t out_idx = 0;
  // outputs at or before t0 get the initial state
  while (out_idx < output_times.size() && output_times[out_idx] <= t0) {
    result.at_output.push_back(y);
    ++out_idx;
  }
  if (t1 == t0) {
    while (out_idx < output_times.size()) {
      result.at_output.push_back(y);
      ++out_idx;
    }
    return result;
  }

  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
  std::vector<double> ytmp(dim), ynew(dim), yerr(dim);
  rhs(t0, y, k1);

  double h = opt.initial_step;
  if (!(h > 0.0)) {
    // crude but serviceable: scale-of-solution over scale-of-derivative
    double ys = 0.0, fs = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      ys = std::max(ys, std::abs(y[i]));
      fs = std::max(fs, std::abs(k1[i]));
    }
    h = std::min((t1 - t0) / 100.0, 0.01 * (ys + opt.abs_tol) / (fs + 1e-12));
    h = std::max(h, (t1 - t0) * 1e-10);
  }

  double t = t0;
  bool just_rejected = false;
  for (std::int64_t stepno = 0; stepno < opt.max_steps; ++stepno) {
    if (t >= t1) break;
    h = std::min(h, t1 - t);
    if (h < 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0))
      throw OdeFailure(t);

    for (std::size_t i = 0; i < dim; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
    rhs(t + c2 * h, ytmp, k2);
    for (std::size_t i = 0; i < dim; ++i)
      ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    rhs(t + c3 * h, ytmp, k3);
    for (std::size_t i = 0; i < dim; ++i)
      ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    rhs(t + c4 * h, ytmp, k4);
    for (std::size_t i = 0; i < dim; ++i)
      ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    rhs(t + c5 * h, ytmp, k5);
    for (std::size_t i = 0; i < dim; ++i)
      ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                            a65 * k5[i]);
    rhs(t + h, ytmp, k6);
    for (std::size_t i = 0; i < dim; ++i)
      ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    rhs(t + h, ynew, k7);

    double err = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      yerr[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                     e7 * k7[i]);
      const double sc =
          opt.abs_tol + opt.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double r = yerr[i] / sc;
      err += r * r;
    }
    err = std::sqrt(err / static_cast<double>(dim));

    if (!(err <= 1.0)) {  // also catches NaN
      ++result.rejected;
      const double factor =
          std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
      h *= factor;
      just_rejected = true;
      continue;
    }

    // accepted; interpolate any outputs inside (t, t+h]
    while (out_idx < output_times.size() && output_times[out_idx] <= t + h) {
      const double theta = (output_times[out_idx] - t) / h;
      const double th2 = theta * theta, th3 = th2 * theta;
      const double h00 = 2 * th3 - 3 * th2 + 1;
      const double h10 = th3 - 2 * th2 + theta;
      const double h01 = -2 * th3 + 3 * th2;
      const double h11 = th3 - th2;
      std::vector<double> yi(dim);
      for (std::size_t i = 0; i < dim; ++i)
        yi[i] = h00 * y[i] + h10 * h * k1[i] + h01 * ynew[i] + h11 * h * k7[i];
      result.at_output.push_back(std::move(yi));
      ++out_idx;
    }

    t += h;
    y.swap(ynew);
    k1.swap(k7);  // FSAL
    ++result.accepted;
    double factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    factor = std::min(just_rejected ? 1.0 : 5.0, std::max(0.2, factor));
    h *= factor;
    just_rejected = false;
  }
  if (t < t1) throw OdeFailure(t);

  while (out_idx < output_times.size()) {  // outputs exactly at t1 (rounding)
    result.at_output.push_back(y);
    ++out_idx;
  }
  return result;
}

}  // namespace fragcoal
