#pragma once

// Independent checks of designed protocols: invariant audits, closed-form
// against numeric Ermakov solutions, and a classical Monte Carlo ensemble that
// pushes phase-space points through Hamilton's equations.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "trapctl/ermakov.hpp"
#include "trapctl/errors.hpp"
#include "trapctl/ode.hpp"
#include "trapctl/phasespace.hpp"
#include "trapctl/protocol.hpp"

namespace trapctl {

// ---------------------------------------------------------------------------
// Invariant audit

struct PieceDrift {
  std::size_t piece = 0;
  double t_begin = 0.0;
  double t_end = 0.0;
  double max_drift = 0.0;
};

/// Relative drift of the Ermakov invariant inside every constant-w^2 piece.
///
/// The reference is alpha at the start of the piece (kicks and switches reset
/// it). When alpha nearly cancels (inverted traps, e.g. alpha = 1 - wI^2/w0^2
/// vanishing at wI = w0) the denominator falls back to the always-positive
/// 1/b^2 term at the piece start.
inline std::vector<PieceDrift> invariant_drift_by_piece(const Trajectory& traj) {
  std::vector<PieceDrift> out;
  for (std::size_t p = 0; p < traj.pieces.size(); ++p) {
    const TrajectoryPiece& piece = traj.pieces[p];
    if (!piece.constant) continue;
    const double ref = ermakov_invariant(piece.start, piece.omega_sq, traj.omega0);
    const double scale =
        std::max(std::abs(ref), 1.0 / (piece.start.b * piece.start.b));
    PieceDrift d{p, piece.t_begin, piece.t_end, 0.0};
    for (const auto& s : traj.samples)
      if (s.piece == p) d.max_drift = std::max(d.max_drift, std::abs(s.alpha - ref) / scale);
    out.push_back(d);
  }
  return out;
}

inline double check_invariant_drift(const Trajectory& traj) {
  if (traj.samples.empty()) throw DomainError("invariant audit requires a non-empty trajectory");
  double m = 0.0;
  for (const auto& d : invariant_drift_by_piece(traj)) m = std::max(m, d.max_drift);
  return m;
}

// ---------------------------------------------------------------------------
// Closed form against numerics

/// Left limit of the piecewise Pinney solution at schedule time t.
inline ScalingState closed_form_state(const FrequencySchedule& schedule, const ScalingState& initial,
                                      double t) {
  if (!schedule.all_constant())
    throw UnsupportedScheduleError("closed form needs constant-frequency segments only");
  std::vector<TimedKick> kicks = schedule.kicks;
  std::stable_sort(kicks.begin(), kicks.end(),
                   [](const TimedKick& a, const TimedKick& b) { return a.time < b.time; });
  ScalingState s{initial.b, initial.b_dot, 0.0};
  double seg_begin = 0.0;
  std::size_t k = 0;
  auto propagate = [&](double to, double omega_sq) {
    if (to > s.t) {
      const ScalingState n = b_const_freq(to - s.t, s.b, s.b_dot, omega_sq, schedule.omega0);
      s = {n.b, n.b_dot, to};
    }
  };
  for (const auto& seg : schedule.segments) {
    const double seg_end = seg_begin + seg.duration;
    while (k < kicks.size() && kicks[k].time < t && kicks[k].time <= seg_end) {
      propagate(kicks[k].time, seg.omega_sq);
      s = apply_delta_kick(s, kicks[k].kick);
      ++k;
    }
    if (t <= seg_end) {
      propagate(t, seg.omega_sq);
      s.t += initial.t;
      return s;
    }
    propagate(seg_end, seg.omega_sq);
    seg_begin = seg_end;
  }
  while (k < kicks.size() && kicks[k].time < t) s = apply_delta_kick(s, kicks[k++].kick);
  propagate(t, schedule.omega_final_sq);
  s.t += initial.t;
  return s;
}

/// Maximum relative |b_numeric - b_closed| over >= 100 points per segment.
inline double compare_closed_form(const FrequencySchedule& schedule, double tol,
                                  const ScalingState& initial = {}) {
  if (!schedule.all_constant())
    throw UnsupportedScheduleError("closed form needs constant-frequency segments only");
  IntegrateOptions opts;
  opts.rtol = tol;
  opts.record_steps = false;
  double begin = 0.0;
  for (const auto& seg : schedule.segments) {
    for (int i = 1; i <= 100; ++i) opts.sample_times.push_back(begin + seg.duration * i / 101.0);
    begin += seg.duration;
  }
  ScalingState start = initial;
  start.t = 0.0;
  const Trajectory traj = integrate(schedule, start, opts);
  double worst = 0.0;
  for (const auto& s : traj.samples) {
    const double b_cf = closed_form_state(schedule, start, s.t).b;
    worst = std::max(worst, std::abs(s.b - b_cf) / b_cf);
  }
  return worst;
}

/// w(t_k)^2 of the kick-assisted shortcut exactly as it appears in print,
/// ω0²/b_F⁴ − n(n+1)(b_F−1) b_F³ / t_F², kept only for side-by-side comparison
/// with delta_sta_end_omega_sq.
inline double delta_sta_end_omega_sq_printed(double omega0, double bF, double tF, int n) {
  const double b2 = bF * bF;
  return omega0 * omega0 / (b2 * b2) - n * (n + 1.0) * (bF - 1.0) * b2 * bF / (tF * tF);
}

// ---------------------------------------------------------------------------
// Monte Carlo ensemble

struct EnsembleConfig {
  static constexpr const char* rng_algorithm = "splitmix64-counter/box-muller";

  std::size_t n_samples = 100'000;
  std::uint64_t seed = 0x5eed'2021'dcc0'0001ULL;
  double tolerance = 1e-10;
  unsigned threads = 0;  // 0: hardware concurrency
  std::size_t jackknife_blocks = 20;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform in (0, 1) depending only on (seed, sample index, draw index).
inline double counter_uniform(std::uint64_t seed, std::uint64_t index, std::uint64_t draw) {
  const std::uint64_t z = splitmix64(splitmix64(seed ^ (index * 0xd1b54a32d192ed03ULL)) + draw);
  return (static_cast<double>(z >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// Standard-normal pair for sample `index` (Box-Muller, fixed stream length).
inline std::array<double, 2> gaussian_pair(std::uint64_t seed, std::uint64_t index) {
  const double u1 = detail::counter_uniform(seed, index, 0);
  const double u2 = detail::counter_uniform(seed, index, 1);
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  return {rad * std::cos(ang), rad * std::sin(ang)};
}

/// Draws phase-space point `index` from the zero-mean Gaussian `state`.
inline std::array<double, 2> sample_point(const GaussianState& state, std::uint64_t seed,
                                          std::uint64_t index) {
  const auto z = gaussian_pair(seed, index);
  const double l11 = std::sqrt(state.sigma_rr);
  const double l21 = state.sigma_rp / l11;
  const double l22 = std::sqrt(state.sigma_pp - l21 * l21);
  return {l11 * z[0], l21 * z[0] + l22 * z[1]};
}

/// Propagates one classical point (r, p) through the schedule with
/// r' = p, p' = -w^2(t) r and kicks p -> p - kappa r.
inline std::array<double, 2> hamilton_propagate(const FrequencySchedule& schedule,
                                                std::array<double, 2> x, double tolerance,
                                                std::size_t sample = NumericOverflowError::npos) {
  ode::Tolerances tol;
  tol.rtol = tolerance;
  tol.atol = tolerance * 1e-2;
  const double omega0 = schedule.omega0;
  double begin = 0.0;
  double h = 0.0;
  std::size_t k = 0;
  const auto& kicks = schedule.kicks;  // sorted by the caller
  auto kick_until = [&](double t) {
    while (k < kicks.size() && kicks[k].time <= t) {
      x[1] -= kicks[k].kick.kappa * x[0];
      ++k;
    }
  };
  kick_until(0.0);
  for (const auto& seg : schedule.segments) {
    const double end = begin + seg.duration;
    const bool constant = seg.is_constant();
    auto rhs = [&](double t, const ode::State<2>& y) -> ode::State<2> {
      const double w2 = constant ? seg.omega_sq : seg.omega_sq_at(t - begin, omega0);
      return {y[1], -w2 * y[0]};
    };
    double t = begin;
    while (true) {
      const double stop = (k < kicks.size() && kicks[k].time < end) ? kicks[k].time : end;
      if (stop > t) {
        const auto r = ode::advance<2>(rhs, t, stop, x, h, tol);
        if (r.status != ode::Status::ok || !std::isfinite(x[0]) || !std::isfinite(x[1]))
          throw NumericOverflowError("non-finite phase-space sample", r.t, sample);
        t = stop;
      }
      kick_until(stop);
      if (stop >= end) break;
    }
    begin = end;
  }
  kick_until(std::numeric_limits<double>::infinity());
  return x;
}

struct EnsembleResult {
  GaussianState covariance;      // empirical, mean-subtracted, 1/(n-1)
  GaussianState standard_error;  // jackknife, per component
  std::size_t n_samples = 0;
};

/// Statistics of a point cloud: unbiased covariance and block-jackknife errors.
inline EnsembleResult ensemble_statistics(const std::vector<std::array<double, 2>>& pts,
                                          std::size_t blocks) {
  const std::size_t n = pts.size();
  if (n < 2) throw DomainError("ensemble needs at least 2 samples");
  blocks = std::clamp<std::size_t>(blocks, 2, n);

  // per-block sums of r, p, rr, rp, pp
  std::vector<std::array<double, 5>> sums(blocks, {0, 0, 0, 0, 0});
  const std::size_t per = n / blocks;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bidx = std::min(i / per, blocks - 1);
    const auto& x = pts[i];
    auto& s = sums[bidx];
    s[0] += x[0];
    s[1] += x[1];
    s[2] += x[0] * x[0];
    s[3] += x[0] * x[1];
    s[4] += x[1] * x[1];
  }
  std::array<double, 5> total{0, 0, 0, 0, 0};
  std::vector<std::size_t> counts(blocks, per);
  counts.back() = n - per * (blocks - 1);
  for (const auto& s : sums)
    for (int j = 0; j < 5; ++j) total[j] += s[j];

  auto cov = [](const std::array<double, 5>& s, double m) -> std::array<double, 3> {
    const double mr = s[0] / m, mp = s[1] / m;
    const double f = m / (m - 1.0);
    return {(s[2] / m - mr * mr) * f, (s[3] / m - mr * mp) * f, (s[4] / m - mp * mp) * f};
  };

  EnsembleResult res;
  res.n_samples = n;
  const auto full = cov(total, static_cast<double>(n));
  res.covariance = {full[0], full[1], full[2]};

  std::vector<std::array<double, 3>> loo(blocks);
  std::array<double, 3> mean{0, 0, 0};
  for (std::size_t b = 0; b < blocks; ++b) {
    std::array<double, 5> s = total;
    for (int j = 0; j < 5; ++j) s[j] -= sums[b][j];
    loo[b] = cov(s, static_cast<double>(n - counts[b]));
    for (int j = 0; j < 3; ++j) mean[j] += loo[b][j] / static_cast<double>(blocks);
  }
  std::array<double, 3> var{0, 0, 0};
  for (const auto& e : loo)
    for (int j = 0; j < 3; ++j) var[j] += (e[j] - mean[j]) * (e[j] - mean[j]);
  const double fb = (static_cast<double>(blocks) - 1.0) / static_cast<double>(blocks);
  res.standard_error = {std::sqrt(fb * var[0]), std::sqrt(fb * var[1]), std::sqrt(fb * var[2])};
  return res;
}

/// Samples `initial`, transports every point classically through `schedule`
/// and returns the empirical covariance with jackknife standard errors.
///
/// Point i depends only on (seed, i), and the reduction runs serially in index
/// order, so the result is bitwise identical for any thread count.
inline EnsembleResult ensemble_propagate(const FrequencySchedule& schedule,
                                         const GaussianState& initial,
                                         const EnsembleConfig& config) {
  schedule.validate();
  if (!initial.positive_definite()) throw DegeneracyError("initial covariance not positive definite");
  if (config.n_samples < 2) throw DomainError("ensemble needs n_samples >= 2");
  if (!(config.tolerance > 0.0)) throw DomainError("ensemble tolerance must be > 0");

  FrequencySchedule sched = schedule;
  std::stable_sort(sched.kicks.begin(), sched.kicks.end(),
                   [](const TimedKick& a, const TimedKick& b) { return a.time < b.time; });

  const std::size_t n = config.n_samples;
  std::vector<std::array<double, 2>> pts(n);
  unsigned threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(std::min<std::size_t>(n, 64)));

  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::size_t> error_index(threads, n);
  auto work = [&](unsigned w) {
    const std::size_t lo = n * w / threads, hi = n * (w + 1) / threads;
    for (std::size_t i = lo; i < hi; ++i) {
      try {
        pts[i] = hamilton_propagate(sched, sample_point(initial, config.seed, i), config.tolerance, i);
      } catch (...) {
        errors[w] = std::current_exception();
        error_index[w] = i;
        return;
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (unsigned w = 0; w < threads; ++w)
    if (errors[w]) std::rethrow_exception(errors[w]);

  return ensemble_statistics(pts, config.jackknife_blocks);
}

/// Largest component-wise deviation between an ensemble and a prediction, in
/// units of the ensemble standard errors.
inline double ensemble_deviation_sigmas(const EnsembleResult& e, const GaussianState& predicted) {
  auto z = [](double est, double ref, double se) {
    return se > 0.0 ? std::abs(est - ref) / se : (est == ref ? 0.0 : std::numeric_limits<double>::infinity());
  };
  return std::max({z(e.covariance.sigma_rr, predicted.sigma_rr, e.standard_error.sigma_rr),
                   z(e.covariance.sigma_rp, predicted.sigma_rp, e.standard_error.sigma_rp),
                   z(e.covariance.sigma_pp, predicted.sigma_pp, e.standard_error.sigma_pp)});
}

// ---------------------------------------------------------------------------
// Protocol verification

struct VerificationThresholds {
  double b_error = 1e-6;
  double b_dot_residual = 1e-6;
  double invariant_drift = 1e-9;
  double stationarity = 1e-6;
  double ensemble_sigmas = 5.0;
  double hold_periods = 10.0;
  double tolerance = 1e-10;
  /// When set, also run the Monte Carlo oracle on a thermal state at this beta.
  std::optional<double> ensemble_beta;
  EnsembleConfig ensemble;
};

struct CriterionResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct VerificationReport {
  std::string protocol;
  double final_b_error = 0.0;
  double final_bdot_residual = 0.0;
  double max_invariant_drift = 0.0;
  double stationarity_error = 0.0;
  std::optional<double> oracle_covariance_error;  // in standard errors
  std::vector<CriterionResult> criteria;

  bool passed() const {
    return std::all_of(criteria.begin(), criteria.end(),
                       [](const CriterionResult& c) { return c.pass; });
  }

  /// `key: value` lines, one criterion per line.
  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "report: trapctl-verification\n"
       << "version: 1\n"
       << "protocol: " << protocol << "\n"
       << "final_b_error: " << final_b_error << "\n"
       << "final_bdot_residual: " << final_bdot_residual << "\n"
       << "max_invariant_drift: " << max_invariant_drift << "\n"
       << "stationarity_error: " << stationarity_error << "\n"
       << "oracle_covariance_error: ";
    if (oracle_covariance_error)
      os << *oracle_covariance_error << "\n";
    else
      os << "none\n";
    for (const auto& c : criteria)
      os << "criterion: " << c.name << " value=" << c.value << " threshold=" << c.threshold
         << " result=" << (c.pass ? "pass" : "fail") << "\n";
    os << "overall: " << (passed() ? "pass" : "fail") << "\n";
    return os.str();
  }
};

/// Integrates the protocol, then holds the final trap and audits the result.
inline VerificationReport verify_protocol(const ProtocolSpec& spec,
                                          const VerificationThresholds& th = {}) {
  const FrequencySchedule& sched = spec.schedule;
  VerificationReport rep;
  rep.protocol = spec.label;

  IntegrateOptions opts;
  opts.rtol = th.tolerance;
  const Trajectory main = integrate(sched, ScalingState{1.0, 0.0, 0.0}, opts);
  const ScalingState end = main.final_state();
  const double bF = spec.predicted_final.b;
  rep.final_b_error = std::abs(end.b - bF);
  rep.final_bdot_residual = std::abs(end.b_dot) / sched.omega0;
  rep.max_invariant_drift = check_invariant_drift(main);

  if (sched.omega_final_sq > 0.0 && th.hold_periods > 0.0) {
    FrequencySchedule hold;
    hold.omega0 = sched.omega0;
    hold.omega_final_sq = sched.omega_final_sq;
    const double period = 2.0 * std::numbers::pi / std::sqrt(sched.omega_final_sq);
    hold.segments.push_back(SegmentLaw::constant(sched.omega_final_sq, th.hold_periods * period));
    IntegrateOptions hold_opts = opts;
    const int n = static_cast<int>(std::ceil(20.0 * th.hold_periods));
    for (int i = 1; i <= n; ++i) hold_opts.sample_times.push_back(hold.total_duration() * i / n);
    const Trajectory tail = integrate(hold, end, hold_opts);
    for (const auto& s : tail.samples)
      rep.stationarity_error = std::max(rep.stationarity_error, std::abs(s.b - bF));
    rep.max_invariant_drift = std::max(rep.max_invariant_drift, check_invariant_drift(tail));
  }

  rep.criteria.push_back({"final_b_error", rep.final_b_error, th.b_error,
                          rep.final_b_error <= th.b_error});
  rep.criteria.push_back({"final_bdot_residual", rep.final_bdot_residual, th.b_dot_residual,
                          rep.final_bdot_residual <= th.b_dot_residual});
  rep.criteria.push_back({"max_invariant_drift", rep.max_invariant_drift, th.invariant_drift,
                          rep.max_invariant_drift <= th.invariant_drift});
  if (sched.omega_final_sq > 0.0 && th.hold_periods > 0.0)
    rep.criteria.push_back({"stationarity_error", rep.stationarity_error, th.stationarity,
                            rep.stationarity_error <= th.stationarity});

  if (th.ensemble_beta) {
    const GaussianState initial = thermal_state(*th.ensemble_beta, sched.omega0);
    const GaussianState predicted = evolve(initial, map_scale_invariant(end.b, end.b_dot));
    EnsembleConfig cfg = th.ensemble;
    cfg.tolerance = th.tolerance;
    const EnsembleResult e = ensemble_propagate(sched, initial, cfg);
    rep.oracle_covariance_error = ensemble_deviation_sigmas(e, predicted);
    rep.criteria.push_back({"oracle_covariance_error", *rep.oracle_covariance_error,
                            th.ensemble_sigmas, *rep.oracle_covariance_error <= th.ensemble_sigmas});
  }
  return rep;
}

}  // namespace trapctl
