#pragma once

// Embedded Dormand-Prince 5(4) stepper for small fixed-size systems.
//
// The stepper never interpolates: `advance` lands exactly on its end time so
// callers can cut integration at discontinuities of the right-hand side.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>

namespace trapctl::ode {

template <std::size_t N>
using State = std::array<double, N>;

struct Tolerances {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_max = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 50'000'000;
};

enum class Status { ok, step_underflow, non_finite, too_many_steps };

struct Result {
  Status status = Status::ok;
  double t = 0.0;        // time reached (failure time when status != ok)
  std::size_t steps = 0;  // accepted steps
  std::size_t rejected = 0;
};

namespace detail {

// Butcher tableau (Dormand & Prince 1980).
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

template <std::size_t N>
bool all_finite(const State<N>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

/// Integrates y' = rhs(t, y) from t0 to t1 (t1 > t0), updating `y` in place.
///
/// `h` is the step-size hint; it is read (<= 0 selects a starting guess) and
/// written back so consecutive calls over adjacent intervals keep their pace.
/// `observe(t, y)` runs after every accepted step, including the last one at t1.
/// A right-hand side that returns non-finite values causes the step to be
/// rejected; persistent failure is reported through the returned status.
template <std::size_t N, class Rhs, class Observer>
Result advance(Rhs&& rhs, double t0, double t1, State<N>& y, double& h, const Tolerances& tol,
               Observer&& observe) {
  using namespace detail;
  Result res;
  res.t = t0;
  if (!(t1 > t0)) return res;

  const double span = t1 - t0;
  if (!(h > 0.0)) h = std::min(span, 1e-3);
  h = std::min(h, tol.h_max);

  double t = t0;
  State<N> k1 = rhs(t, y);
  if (!all_finite(k1)) {
    res.status = Status::non_finite;
    return res;
  }

  State<N> tmp{}, k2{}, k3{}, k4{}, k5{}, k6{}, k7{}, y_new{};
  while (t < t1) {
    if (res.steps + res.rejected >= tol.max_steps) {
      res.status = Status::too_many_steps;
      res.t = t;
      return res;
    }
    const bool last = t + 1.01 * h >= t1;
    const double step = last ? t1 - t : h;
    if (step <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      res.status = Status::step_underflow;
      res.t = t;
      return res;
    }

    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + step * a21 * k1[i];
    k2 = rhs(t + c2 * step, tmp);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + step * (a31 * k1[i] + a32 * k2[i]);
    k3 = rhs(t + c3 * step, tmp);
    for (std::size_t i = 0; i < N; ++i)
      tmp[i] = y[i] + step * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    k4 = rhs(t + c4 * step, tmp);
    for (std::size_t i = 0; i < N; ++i)
      tmp[i] = y[i] + step * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    k5 = rhs(t + c5 * step, tmp);
    for (std::size_t i = 0; i < N; ++i)
      tmp[i] = y[i] + step * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    k6 = rhs(t + step, tmp);
    for (std::size_t i = 0; i < N; ++i)
      y_new[i] = y[i] + step * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    const double t_new = last ? t1 : t + step;
    k7 = rhs(t_new, y_new);

    double err = 0.0;
    bool finite = all_finite(y_new) && all_finite(k7);
    if (finite) {
      for (std::size_t i = 0; i < N; ++i) {
        const double e = step * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                                 e7 * k7[i]);
        const double scale = tol.atol + tol.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        err = std::max(err, std::abs(e) / scale);
      }
      finite = std::isfinite(err);
    }

    if (!finite) {
      ++res.rejected;
      h = 0.25 * step;
      if (!all_finite(y) || h <= 16.0 * std::numeric_limits<double>::epsilon() * std::abs(t)) {
        res.status = Status::non_finite;
        res.t = t;
        return res;
      }
      continue;
    }

    if (err <= 1.0) {
      t = t_new;
      y = y_new;
      k1 = k7;
      ++res.steps;
      observe(t, static_cast<const State<N>&>(y));
      const double grow = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      // a clipped final step says nothing about the natural step size
      if (!last) h = std::min(step * grow, tol.h_max);
    } else {
      ++res.rejected;
      h = step * std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
    }
  }
  res.t = t;
  return res;
}

template <std::size_t N, class Rhs>
Result advance(Rhs&& rhs, double t0, double t1, State<N>& y, double& h, const Tolerances& tol) {
  return advance<N>(std::forward<Rhs>(rhs), t0, t1, y, h, tol, [](double, const State<N>&) {});
}

}  // namespace trapctl::ode
