#pragma once

// Scale-invariant dynamics of a harmonically trapped cloud.
//
// The whole state is the scaling factor b(t) of the cloud width and its rate,
// governed by the Ermakov equation  b'' + w(t)^2 b = w0^2 / b^3.  Units are
// hbar = m = 1 with the reference frequency w0 configurable. Squared trap
// frequencies are signed: w^2 < 0 encodes an inverted (repulsive) trap.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "trapctl/errors.hpp"
#include "trapctl/ode.hpp"

namespace trapctl {

struct ScalingState {
  double b = 1.0;
  double b_dot = 0.0;
  double t = 0.0;
};

/// Instantaneous harmonic pulse p -> p - kappa r, kappa = tau_k * w_k^2.
struct DeltaKick {
  double kappa = 0.0;
};

struct TimedKick {
  double time = 0.0;
  DeltaKick kick;
};

enum class SegmentKind {
  constant,        // fixed w^2 for the whole duration
  polynomial_sta,  // reverse-engineered ramp realizing b = 1 + (b_F - 1) (s/T)^(n+1)
  constant_mu,     // w(s) = w0 T / (T + (w0/w_end - 1) s): constant w'/w^2
};

inline const char* to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::constant: return "constant";
    case SegmentKind::polynomial_sta: return "polynomial_sta";
    case SegmentKind::constant_mu: return "constant_mu";
  }
  return "?";
}

/// One piece of a frequency schedule. Smooth kinds are evaluated pointwise
/// from their closed-form law, never from sampled tables.
struct SegmentLaw {
  SegmentKind kind = SegmentKind::constant;
  double omega_sq = 0.0;  // constant
  double duration = 0.0;
  double b_final = 1.0;   // polynomial_sta
  int order = 1;          // polynomial_sta
  double omega_end = 1.0; // constant_mu

  static SegmentLaw constant(double omega_sq, double duration) {
    SegmentLaw s;
    s.kind = SegmentKind::constant;
    s.omega_sq = omega_sq;
    s.duration = duration;
    return s;
  }

  static SegmentLaw polynomial_sta(double b_final, int order, double duration) {
    SegmentLaw s;
    s.kind = SegmentKind::polynomial_sta;
    s.b_final = b_final;
    s.order = order;
    s.duration = duration;
    return s;
  }

  static SegmentLaw constant_mu(double omega_end, double duration) {
    SegmentLaw s;
    s.kind = SegmentKind::constant_mu;
    s.omega_end = omega_end;
    s.duration = duration;
    return s;
  }

  bool is_constant() const noexcept { return kind == SegmentKind::constant; }

  void validate() const {
    if (!(duration >= 0.0) || !std::isfinite(duration))
      throw DomainError("segment duration must be finite and >= 0");
    switch (kind) {
      case SegmentKind::constant:
        if (!std::isfinite(omega_sq)) throw DomainError("segment omega_sq must be finite");
        break;
      case SegmentKind::polynomial_sta:
        if (order < 1) throw DomainError("polynomial_sta order n must be >= 1");
        if (!(b_final > 0.0)) throw DomainError("polynomial_sta b_F must be > 0");
        if (!(duration > 0.0)) throw DomainError("polynomial_sta duration must be > 0");
        break;
      case SegmentKind::constant_mu:
        if (!(omega_end > 0.0)) throw DomainError("constant_mu end frequency must be > 0");
        if (!(duration > 0.0)) throw DomainError("constant_mu duration must be > 0");
        break;
    }
  }

  /// Signed w^2 at local time s in [0, duration].
  double omega_sq_at(double s, double omega0) const {
    switch (kind) {
      case SegmentKind::constant:
        return omega_sq;
      case SegmentKind::polynomial_sta: {
        const double x = s / duration;
        const double b = 1.0 + (b_final - 1.0) * std::pow(x, order + 1);
        // b'' = n (n+1) (b_F - 1) s^(n-1) / T^(n+1)
        const double b_ddot = order * (order + 1.0) * (b_final - 1.0) * std::pow(x, order - 1) /
                              (duration * duration);
        const double b2 = b * b;
        return omega0 * omega0 / (b2 * b2) - b_ddot / b;
      }
      case SegmentKind::constant_mu: {
        const double w = omega0 * duration / (duration + (omega0 / omega_end - 1.0) * s);
        return w * w;
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  }
};

struct FrequencySchedule {
  double omega0 = 1.0;
  std::vector<SegmentLaw> segments;
  std::vector<TimedKick> kicks;
  double omega_final_sq = 1.0;  // trap switched on once the segments are exhausted

  double total_duration() const {
    return std::accumulate(segments.begin(), segments.end(), 0.0,
                           [](double acc, const SegmentLaw& s) { return acc + s.duration; });
  }

  bool all_constant() const {
    return std::all_of(segments.begin(), segments.end(),
                       [](const SegmentLaw& s) { return s.is_constant(); });
  }

  void validate() const {
    if (!(omega0 > 0.0) || !std::isfinite(omega0)) throw DomainError("omega0 must be > 0");
    if (!std::isfinite(omega_final_sq)) throw DomainError("final omega_sq must be finite");
    for (const auto& s : segments) s.validate();
    const double total = total_duration();
    for (const auto& k : kicks) {
      if (!(k.time >= 0.0) || k.time > total * (1.0 + 1e-15))
        throw DomainError("kick time " + std::to_string(k.time) + " outside [0, " +
                          std::to_string(total) + "]");
      if (!std::isfinite(k.kick.kappa)) throw DomainError("kick strength must be finite");
    }
  }

  /// Right-continuous w^2(t); before 0 the reference trap, after the end the final trap.
  double omega_sq_at(double t) const {
    if (t < 0.0) return omega0 * omega0;
    double begin = 0.0;
    for (const auto& s : segments) {
      const double end = begin + s.duration;
      if (t < end) return s.omega_sq_at(t - begin, omega0);
      begin = end;
    }
    return omega_final_sq;
  }

  /// Copy with the final trap held for `duration` as an explicit trailing segment.
  FrequencySchedule with_hold(double duration) const {
    FrequencySchedule out = *this;
    out.segments.push_back(SegmentLaw::constant(omega_final_sq, duration));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Pointwise laws

struct ErmakovRate {
  double db = 0.0;
  double db_dot = 0.0;
};

inline ErmakovRate ermakov_rhs(const ScalingState& state, double omega_sq, double omega0) {
  if (!(state.b > 0.0)) throw SingularStateError("scaling factor b <= 0", state.t);
  const double b3 = state.b * state.b * state.b;
  return {state.b_dot, omega0 * omega0 / b3 - omega_sq * state.b};
}

/// Applies the kick exactly: b and t are untouched, b_dot -> b_dot - kappa b.
inline ScalingState apply_delta_kick(const ScalingState& state, DeltaKick kick) {
  ScalingState out = state;
  out.b_dot = std::fma(-kick.kappa, state.b, state.b_dot);
  return out;
}

/// Free expansion after a sudden release from the w0 trap.
inline double b_tof(double t, double omega0 = 1.0) {
  const double x = omega0 * t;
  return std::sqrt(1.0 + x * x);
}

inline double b_tof_rate(double t, double omega0 = 1.0) {
  return omega0 * omega0 * t / b_tof(t, omega0);
}

inline double b_adiabatic(double omega, double omega0 = 1.0) {
  if (!(omega > 0.0))
    throw DomainError("adiabatic scaling factor undefined for omega <= 0 (inverted trap)");
  return std::sqrt(omega0 / omega);
}

/// Pinney solution over a constant-w^2 stretch of length s.
///
/// Returns b and b_dot after the stretch; the `t` field carries s. Separate
/// branches for trapping, inverted and free evolution; all three are sums of
/// squares, so no cancellation occurs in b^2.
inline ScalingState b_const_freq(double s, double b0, double b0_dot, double omega_sq,
                                 double omega0 = 1.0) {
  if (!(b0 > 0.0)) throw SingularStateError("initial scaling factor b0 <= 0", 0.0);
  double u, u_dot, w, w_dot;
  const double g = omega0 / b0;
  if (omega_sq > 0.0) {
    const double om = std::sqrt(omega_sq);
    const double c = std::cos(om * s), sn = std::sin(om * s);
    u = b0 * c + b0_dot / om * sn;
    u_dot = -b0 * om * sn + b0_dot * c;
    w = g / om * sn;
    w_dot = g * c;
  } else if (omega_sq < 0.0) {
    const double om = std::sqrt(-omega_sq);
    const double ch = std::cosh(om * s), sh = std::sinh(om * s);
    u = b0 * ch + b0_dot / om * sh;
    u_dot = b0 * om * sh + b0_dot * ch;
    w = g / om * sh;
    w_dot = g * ch;
  } else {
    u = b0 + b0_dot * s;
    u_dot = b0_dot;
    w = g * s;
    w_dot = g;
  }
  const double b = std::hypot(u, w);
  return {b, (u * u_dot + w * w_dot) / b, s};
}

/// Solution that ends at rest, b(tF) = bF and b_dot(tF) = 0, in a trap of
/// frequency omega, evaluated at an earlier time t.
inline double b_const_freq_backward(double t, double bF, double omega, double tF,
                                    double omega0 = 1.0) {
  if (!(omega > 0.0)) throw DomainError("backward solution requires omega > 0");
  if (!(bF > 0.0)) throw DomainError("backward solution requires b_F > 0");
  const double r = omega0 / (bF * omega);
  const double sn = std::sin(omega * (t - tF));
  return std::sqrt(bF * bF + (r * r - bF * bF) * sn * sn);
}

/// Ermakov constant of motion alpha = (b_dot/w0)^2 + (w^2/w0^2) b^2 + 1/b^2.
inline double ermakov_invariant(const ScalingState& state, double omega_sq, double omega0 = 1.0) {
  if (!(state.b > 0.0)) throw SingularStateError("scaling factor b <= 0", state.t);
  const double r = state.b_dot / omega0;
  return r * r + omega_sq / (omega0 * omega0) * state.b * state.b + 1.0 / (state.b * state.b);
}

// ---------------------------------------------------------------------------
// Adaptive integration of a whole schedule

struct TrajectorySample {
  double t = 0.0;
  double b = 1.0;
  double b_dot = 0.0;
  double omega_sq = 0.0;  // left limit at t
  double alpha = 0.0;
  std::size_t piece = 0;
};

enum class EventKind { segment_switch, kick };

struct TrajectoryEvent {
  EventKind kind = EventKind::segment_switch;
  double t = 0.0;
  ScalingState before;
  ScalingState after;
  double kappa = 0.0;        // kicks only
  std::size_t segment = 0;   // segment entered (switch) or hosting the kick
};

/// Stretch between consecutive events; alpha is conserved inside constant pieces.
struct TrajectoryPiece {
  double t_begin = 0.0;
  double t_end = 0.0;
  std::size_t segment = 0;
  bool constant = true;
  double omega_sq = 0.0;  // valid for constant pieces
  ScalingState start;
};

struct Trajectory {
  double omega0 = 1.0;
  std::vector<TrajectorySample> samples;
  std::vector<TrajectoryEvent> events;
  std::vector<TrajectoryPiece> pieces;

  std::vector<double> segment_boundaries() const {
    std::vector<double> out;
    out.reserve(events.size());
    for (const auto& e : events)
      if (out.empty() || out.back() != e.t) out.push_back(e.t);
    return out;
  }

  std::vector<double> alpha_log() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.alpha);
    return out;
  }

  /// State at the end, after any kick scheduled at the final time.
  ScalingState final_state() const {
    if (!events.empty() && samples.back().t <= events.back().t) return events.back().after;
    const auto& s = samples.back();
    return {s.b, s.b_dot, s.t};
  }
};

struct IntegrateOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double b_floor = 1e-9;
  /// Extra times (schedule clock) the integrator must land on and record.
  std::vector<double> sample_times;
  /// Record every accepted step; otherwise only boundaries and sample_times.
  bool record_steps = true;
};

namespace detail {

inline void check_state(double t, double b, double b_dot, double b_floor) {
  if (!std::isfinite(b) || !std::isfinite(b_dot))
    throw NumericOverflowError("non-finite scaling state", t);
  if (b < b_floor) throw SingularStateError("scaling factor fell below floor", t);
}

}  // namespace detail

/// Integrates the Ermakov equation through `schedule` starting from `initial`.
///
/// The schedule clock starts at initial.t. Integration stops exactly on every
/// segment boundary, kick time and requested sample time; kicks are applied as
/// exact maps through apply_delta_kick. Throws SingularStateError when b drops
/// below the floor and NumericOverflowError when the state stops being finite.
inline Trajectory integrate(const FrequencySchedule& schedule, const ScalingState& initial,
                            const IntegrateOptions& opts = {}) {
  schedule.validate();
  if (!(initial.b > 0.0)) throw SingularStateError("initial scaling factor b <= 0", initial.t);
  if (!(opts.rtol > 0.0)) throw DomainError("integration tolerance must be > 0");

  const double t0 = initial.t;
  const double omega0 = schedule.omega0;
  const double w0sq = omega0 * omega0;

  std::vector<TimedKick> kicks = schedule.kicks;
  std::stable_sort(kicks.begin(), kicks.end(),
                   [](const TimedKick& a, const TimedKick& b) { return a.time < b.time; });
  std::vector<double> extra = opts.sample_times;
  std::sort(extra.begin(), extra.end());

  ode::Tolerances tol;
  tol.rtol = opts.rtol;
  tol.atol = opts.atol;

  Trajectory traj;
  traj.omega0 = omega0;
  ScalingState state = initial;
  std::size_t piece = 0;
  std::size_t next_kick = 0;
  double h = 0.0;

  auto seg_omega_sq = [&](std::size_t i, double local) {
    return schedule.segments.empty() ? schedule.omega_final_sq
                                     : schedule.segments[i].omega_sq_at(local, omega0);
  };
  auto open_piece = [&](std::size_t seg, double t_begin) {
    TrajectoryPiece p;
    p.t_begin = t_begin;
    p.t_end = t_begin;
    p.segment = seg;
    p.constant = schedule.segments.empty() || schedule.segments[seg].is_constant();
    p.omega_sq = p.constant ? seg_omega_sq(seg, 0.0) : std::numeric_limits<double>::quiet_NaN();
    p.start = state;
    traj.pieces.push_back(p);
    piece = traj.pieces.size() - 1;
  };
  auto record = [&](double t, double b, double b_dot, double omega_sq) {
    detail::check_state(t, b, b_dot, opts.b_floor);
    ScalingState s{b, b_dot, t};
    traj.samples.push_back({t, b, b_dot, omega_sq, ermakov_invariant(s, omega_sq, omega0), piece});
    traj.pieces[piece].t_end = t;
  };
  auto apply_kicks_at = [&](double local_time, std::size_t seg) {
    bool any = false;
    while (next_kick < kicks.size() && kicks[next_kick].time <= local_time) {
      TrajectoryEvent ev;
      ev.kind = EventKind::kick;
      ev.t = state.t;
      ev.before = state;
      state = apply_delta_kick(state, kicks[next_kick].kick);
      ev.after = state;
      ev.kappa = kicks[next_kick].kick.kappa;
      ev.segment = seg;
      traj.events.push_back(ev);
      ++next_kick;
      any = true;
    }
    return any;
  };

  open_piece(0, t0);
  record(t0, state.b, state.b_dot, seg_omega_sq(0, 0.0));
  if (apply_kicks_at(0.0, 0)) open_piece(0, t0);

  double seg_begin = 0.0;
  for (std::size_t i = 0; i < schedule.segments.size(); ++i) {
    const SegmentLaw& seg = schedule.segments[i];
    const double seg_end = seg_begin + seg.duration;

    if (i > 0) {
      TrajectoryEvent ev;
      ev.kind = EventKind::segment_switch;
      ev.t = state.t;
      ev.before = state;
      ev.after = state;
      ev.segment = i;
      traj.events.push_back(ev);
      open_piece(i, state.t);
    }

    std::vector<double> targets;
    for (std::size_t k = next_kick; k < kicks.size() && kicks[k].time <= seg_end; ++k)
      if (kicks[k].time > seg_begin) targets.push_back(kicks[k].time);
    const double gap = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(seg_end));
    const std::size_t n_kick_targets = targets.size();
    for (double x : extra) {
      if (!(x > seg_begin + gap && x < seg_end - gap)) continue;
      bool clash = false;
      for (std::size_t k = 0; k < n_kick_targets; ++k) clash = clash || std::abs(x - targets[k]) <= gap;
      if (!clash) targets.push_back(x);
    }
    targets.push_back(seg_end);
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

    const bool constant = seg.is_constant();
    const double wsq = seg.omega_sq;
    auto rhs = [&](double t, const ode::State<2>& y) -> ode::State<2> {
      const double b = y[0];
      if (!(b > 0.0)) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
      const double om2 = constant ? wsq : seg.omega_sq_at(t - seg_begin, omega0);
      return {y[1], w0sq / (b * b * b) - om2 * b};
    };

    double local = seg_begin;
    for (double target : targets) {
      if (target > local) {
        ode::State<2> y{state.b, state.b_dot};
        const double target_abs = t0 + target;
        auto observe = [&](double t, const ode::State<2>& yy) {
          const double t_abs = t0 + t;
          if (opts.record_steps || t == target)
            record(t == target ? target_abs : t_abs, yy[0], yy[1],
                   constant ? wsq : seg.omega_sq_at(t - seg_begin, omega0));
          else
            detail::check_state(t_abs, yy[0], yy[1], opts.b_floor);
        };
        const ode::Result r = ode::advance<2>(rhs, local, target, y, h, tol, observe);
        if (r.status != ode::Status::ok) {
          if (y[0] < opts.b_floor * 10.0)
            throw SingularStateError("scaling factor collapsed", t0 + r.t);
          throw NumericOverflowError("integration failed (step underflow or overflow)", t0 + r.t);
        }
        state = {y[0], y[1], target_abs};
        local = target;
      }
      if (apply_kicks_at(target, i)) open_piece(i, state.t);
    }
    seg_begin = seg_end;
  }
  return traj;
}

inline Trajectory integrate(const FrequencySchedule& schedule, const ScalingState& initial,
                            double tol) {
  IntegrateOptions opts;
  opts.rtol = tol;
  return integrate(schedule, initial, opts);
}

}  // namespace trapctl
