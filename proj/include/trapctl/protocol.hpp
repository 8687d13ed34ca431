#pragma once

// Closed-form construction of expansion protocols that end in a stationary
// state of the final trap w_F = w0 / b_F^2.

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "trapctl/ermakov.hpp"
#include "trapctl/errors.hpp"

namespace trapctl {

struct ProtocolSpec {
  std::string label;
  FrequencySchedule schedule;
  std::map<std::string, double> design_params;
  ScalingState predicted_final;
  /// Formulas that produced each design number, in human-readable form.
  std::vector<std::string> provenance;

  double omega_final() const { return std::sqrt(schedule.omega_final_sq); }
  double b_final() const { return predicted_final.b; }
};

namespace detail {

inline std::string fmt_num(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

inline void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError(std::string(name) + " must be > 0");
}

inline void require_expansion(double bF) {
  if (!(bF > 1.0) || !std::isfinite(bF))
    throw DomainError("b_F must be > 1 (expansion families cannot compress)");
}

inline void require_cooling(double omega0, double omegaF) {
  require_positive(omega0, "omega0");
  require_positive(omegaF, "omega_F");
  if (!(omegaF < omega0)) throw DomainError("omega_F must be < omega0 (expansion only)");
}

inline FrequencySchedule make_schedule(double omega0, double omegaF) {
  FrequencySchedule s;
  s.omega0 = omega0;
  s.omega_final_sq = omegaF * omegaF;
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementary relations

inline double final_frequency(double bF, double omega0 = 1.0) {
  detail::require_positive(bF, "b_F");
  return omega0 / (bF * bF);
}

/// Exact kick strength bringing a scale-invariant state to rest: kappa = b_dot / b.
inline double dkc_kick_exact(const ScalingState& state) {
  if (!(state.b > 0.0)) throw SingularStateError("scaling factor b <= 0", state.t);
  return state.b_dot / state.b;
}

/// Exact kick after free flight of duration tk: w0^2 tk / (1 + w0^2 tk^2).
inline double dkc_kick_exact_tof(double tk, double omega0 = 1.0) {
  const double x = omega0 * tk;
  return omega0 * x / (1.0 + x * x);
}

/// Far-field kick 1/tk for point particles.
inline double dkc_kick_longtime_tof(double tk) {
  if (!(tk > 0.0)) throw DomainError("long-time kick requires t_k > 0");
  return 1.0 / tk;
}

/// Exact kick after a sudden inversion to w^2 = -omegaI^2 lasting tk.
inline double dkc_kick_exact_inverted(double tk, double omegaI, double omega0 = 1.0) {
  const double a = omega0 * omega0 + omegaI * omegaI;
  const double sh = std::sinh(omegaI * tk);
  return 0.5 * omegaI * a * std::sinh(2.0 * omegaI * tk) / (omegaI * omegaI + a * sh * sh);
}

/// Free-flight time after which b_TOF reaches bF.
inline double tof_expansion_time(double bF, double omega0 = 1.0) {
  detail::require_positive(bF, "b_F");
  if (bF < 1.0) throw DomainError("free flight cannot reach b_F < 1");
  return std::sqrt(bF * bF - 1.0) / omega0;
}

/// Time in the inverted trap after which b reaches bF.
inline double inverted_expansion_time(double bF, double omegaI, double omega0 = 1.0) {
  detail::require_positive(omegaI, "omega_I");
  if (bF < 1.0) throw DomainError("inverted-trap expansion cannot reach b_F < 1");
  const double r = omega0 / omegaI;
  return std::asinh(std::sqrt((bF * bF - 1.0) / (r * r + 1.0))) / omegaI;
}

/// Long-time approximation of inverted_expansion_time.
inline double inverted_expansion_time_approx(double bF, double omegaI, double omega0 = 1.0) {
  const double r = omega0 / omegaI;
  return std::log(2.0 * bF / std::sqrt(r * r + 1.0)) / omegaI;
}

/// Rejects designs whose closed forms overflowed for extreme inputs.
inline void check_finite(const ProtocolSpec& p) {
  auto bad = [&](const std::string& what) {
    throw NumericOverflowError("design '" + p.label + "' produced a non-finite " + what, 0.0);
  };
  for (const auto& [k, v] : p.design_params)
    if (!std::isfinite(v)) bad("parameter " + k);
  for (const auto& s : p.schedule.segments)
    if (!std::isfinite(s.duration) || !std::isfinite(s.omega_sq)) bad("segment");
  for (const auto& k : p.schedule.kicks)
    if (!std::isfinite(k.time) || !std::isfinite(k.kick.kappa)) bad("kick");
  if (!std::isfinite(p.predicted_final.b) || !std::isfinite(p.schedule.omega_final_sq)) bad("final state");
}

// ---------------------------------------------------------------------------
// Delta-kick cooling

enum class KickRule {
  exact,     // kappa = b_dot / b at the kick
  longtime,  // kappa = 1 / t_k (far-field rule, only asymptotically correct)
};

/// Free flight to bF followed by a single kick and the final trap w0/bF^2.
inline ProtocolSpec design_dkc_free(double bF, double omega0 = 1.0,
                                    KickRule rule = KickRule::exact) {
  detail::require_positive(omega0, "omega0");
  detail::require_expansion(bF);
  const double tk = tof_expansion_time(bF, omega0);
  const double kappa = rule == KickRule::exact ? omega0 * std::sqrt(bF * bF - 1.0) / (bF * bF)
                                               : dkc_kick_longtime_tof(tk);
  const double omegaF = final_frequency(bF, omega0);

  ProtocolSpec p;
  p.label = rule == KickRule::exact ? "dkc-free" : "dkc-free-longtime";
  p.schedule = detail::make_schedule(omega0, omegaF);
  p.schedule.segments.push_back(SegmentLaw::constant(0.0, tk));
  p.schedule.kicks.push_back({tk, {kappa}});
  p.design_params = {{"b_F", bF}, {"t_k", tk}, {"kappa", kappa}, {"omega_F", omegaF}};
  p.predicted_final = {bF, 0.0, tk};
  p.provenance = {"t_k = sqrt(b_F^2 - 1) / omega0",
                  rule == KickRule::exact ? "kappa = omega0 sqrt(b_F^2 - 1) / b_F^2"
                                          : "kappa = 1 / t_k (long-time rule)",
                  "omega_F = omega0 / b_F^2"};
  return p;
}

/// Sudden trap inversion to -omegaI^2 until b reaches bF, then the exact kick.
inline ProtocolSpec design_dkc_inverted(double bF, double omegaI, double omega0 = 1.0) {
  detail::require_positive(omega0, "omega0");
  detail::require_positive(omegaI, "omega_I");
  detail::require_expansion(bF);
  const double tk = inverted_expansion_time(bF, omegaI, omega0);
  const double kappa = dkc_kick_exact_inverted(tk, omegaI, omega0);
  const double omegaF = final_frequency(bF, omega0);

  ProtocolSpec p;
  p.label = "dkc-inverted";
  p.schedule = detail::make_schedule(omega0, omegaF);
  p.schedule.segments.push_back(SegmentLaw::constant(-omegaI * omegaI, tk));
  p.schedule.kicks.push_back({tk, {kappa}});
  p.design_params = {{"b_F", bF}, {"omega_I", omegaI}, {"t_k", tk}, {"kappa", kappa},
                     {"omega_F", omegaF}};
  p.predicted_final = {bF, 0.0, tk};
  p.provenance = {
      "t_k = asinh(sqrt((b_F^2 - 1) / (omega0^2/omega_I^2 + 1))) / omega_I",
      "kappa = (omega_I/2) (omega0^2 + omega_I^2) sinh(2 omega_I t_k) / "
      "(omega_I^2 + (omega0^2 + omega_I^2) sinh^2(omega_I t_k))",
      "omega_F = omega0 / b_F^2"};
  return p;
}

// ---------------------------------------------------------------------------
// Bang-bang with a positive intermediate frequency

inline ProtocolSpec design_bangbang_positive(double omega0, double omegaF) {
  detail::require_cooling(omega0, omegaF);
  const double omega1 = std::sqrt(omega0 * omegaF);
  const double t1 = std::numbers::pi / (2.0 * omega1);

  ProtocolSpec p;
  p.label = "bangbang-positive";
  p.schedule = detail::make_schedule(omega0, omegaF);
  p.schedule.segments.push_back(SegmentLaw::constant(omega0 * omegaF, t1));
  p.design_params = {{"omega_F", omegaF}, {"omega_1", omega1}, {"t_1", t1},
                     {"N", omega0 / omegaF}};
  p.predicted_final = {std::sqrt(omega0 / omegaF), 0.0, t1};
  p.provenance = {"omega_1 = sqrt(omega0 omega_F)", "t_1 = pi / (2 omega_1)"};
  return p;
}

// ---------------------------------------------------------------------------
// Constant non-adiabaticity ramp

/// Commonly quoted shortest stopping time of the constant-mu ramp:
/// ((1 - wF/w0)/wF) sqrt(1 + 4 pi^2 / ln^2(wF/w0)).
inline double constant_mu_quoted_time(double omega0, double omegaF) {
  detail::require_cooling(omega0, omegaF);
  const double l = std::log(omegaF / omega0);
  return (1.0 - omegaF / omega0) / omegaF *
         std::sqrt(1.0 + 4.0 * std::numbers::pi * std::numbers::pi / (l * l));
}

/// Ramp duration T for which the constant-mu drive ends exactly at rest in the
/// w_F trap after `cycles` full oscillations of b^2 / (1 + c t).
///
/// With w(t) = w0 / (1 + c t), the Ermakov equation reduces to an Euler
/// equation whose solutions oscillate in ln(1 + c t) with angular frequency
/// 2 nu, nu = sqrt(w0^2/c^2 - 1/4). Rest at the end needs nu ln N = cycles pi.
inline double constant_mu_stationary_time(double omega0, double omegaF, int cycles = 1) {
  detail::require_cooling(omega0, omegaF);
  if (cycles < 1) throw DomainError("cycles must be >= 1");
  const double n = omega0 / omegaF;
  const double l = std::log(n);
  const double q = cycles * std::numbers::pi / l;
  return (n - 1.0) / omega0 * std::sqrt(0.25 + q * q);
}

struct ConstantMuDesign {
  ProtocolSpec spec;
  double mu = 0.0;
  double t1 = 0.0;  // quoted shortest stopping time
};

/// Ramp w(t) = w0 tF / (tF + (w0/wF - 1) t) over [0, tF], then the wF trap.
///
/// The final state is stationary only for ramp durations returned by
/// constant_mu_stationary_time; other tF leave residual breathing.
inline ConstantMuDesign design_constant_mu(double omega0, double omegaF, double tF) {
  detail::require_cooling(omega0, omegaF);
  detail::require_positive(tF, "t_F");
  ConstantMuDesign d;
  d.mu = (1.0 - omegaF / omega0) / (omegaF * tF);
  d.t1 = constant_mu_quoted_time(omega0, omegaF);

  ProtocolSpec& p = d.spec;
  p.label = "constant-mu";
  p.schedule = detail::make_schedule(omega0, omegaF);
  p.schedule.segments.push_back(SegmentLaw::constant_mu(omegaF, tF));
  p.design_params = {{"omega_F", omegaF}, {"t_F", tF}, {"mu", d.mu}, {"t_1", d.t1},
                     {"N", omega0 / omegaF}};
  p.predicted_final = {std::sqrt(omega0 / omegaF), 0.0, tF};
  p.provenance = {"omega(t) = omega0 t_F / (t_F + (omega0/omega_F - 1) t)",
                  "mu = (1 - omega_F/omega0) / (omega_F t_F)",
                  "t_1 = ((1 - omega_F/omega0)/omega_F) sqrt(1 + 4 pi^2 / ln^2(omega_F/omega0))"};
  return d;
}

/// Ratio of the constant-mu stopping time to the free-flight DKC time.
inline double adiabatic_gain_ratio(double N) {
  if (!(N > 1.0)) throw DomainError("gain ratio requires N > 1");
  const double l = std::log(N);
  return std::sqrt((N - 1.0) * (1.0 + 4.0 * std::numbers::pi * std::numbers::pi / (l * l)));
}

struct ScalarMinimum {
  double x = 0.0;
  double value = 0.0;
  int iterations = 0;
};

/// Golden-section search for the minimum of a unimodal function on [lo, hi].
inline ScalarMinimum golden_section_minimize(const std::function<double(double)>& f, double lo,
                                             double hi, double tol) {
  if (!(hi > lo)) throw DomainError("golden section requires hi > lo");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  int it = 0;
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
    ++it;
  }
  const double x = 0.5 * (a + b);
  return {x, f(x), it};
}

inline ScalarMinimum minimize_gain_ratio(double lo = 1.01, double hi = 100.0, double tol = 1e-6) {
  if (!(lo > 1.0)) throw DomainError("gain-ratio bracket must lie above N = 1");
  return golden_section_minimize(adiabatic_gain_ratio, lo, hi, tol);
}

// ---------------------------------------------------------------------------
// Kick-assisted shortcut (polynomial ansatz + terminal kick)

/// w(t_k)^2 right before the kick, from differentiating b = 1 + (bF-1)(t/tk)^(n+1).
inline double delta_sta_end_omega_sq(double omega0, double bF, double tk, int n) {
  const double b2 = bF * bF;
  return omega0 * omega0 / (b2 * b2) - n * (n + 1.0) * (bF - 1.0) / (tk * tk * bF);
}

inline ProtocolSpec design_delta_sta(double omega0, double omegaF, double tk, int n) {
  if (n < 1) throw DomainError("polynomial order n must be >= 1");
  detail::require_cooling(omega0, omegaF);
  detail::require_positive(tk, "t_k");
  const double bF = std::sqrt(omega0 / omegaF);
  const double kappa = (n + 1.0) * (bF - 1.0) / (tk * bF);

  ProtocolSpec p;
  p.label = "delta-sta";
  p.schedule = detail::make_schedule(omega0, omegaF);
  p.schedule.segments.push_back(SegmentLaw::polynomial_sta(bF, n, tk));
  p.schedule.kicks.push_back({tk, {kappa}});
  p.design_params = {{"omega_F", omegaF},
                     {"b_F", bF},
                     {"t_k", tk},
                     {"n", static_cast<double>(n)},
                     {"kappa", kappa},
                     {"omega_sq_start", p.schedule.segments[0].omega_sq_at(0.0, omega0)},
                     {"omega_sq_end", delta_sta_end_omega_sq(omega0, bF, tk, n)}};
  p.predicted_final = {bF, 0.0, tk};
  p.provenance = {"b(t) = 1 + (b_F - 1) (t/t_k)^(n+1)",
                  "omega(t)^2 = omega0^2/b^4 - n(n+1)(b_F-1) t^(n-1) / (t_k^(n+1) b)",
                  "kappa = (n+1)(b_F - 1) / (t_k b_F)", "omega_F = omega0 / b_F^2"};
  return p;
}

// ---------------------------------------------------------------------------
// Finite pulses (two-stage bang-bang)

struct PulseTiming {
  double t_k = 0.0;    // expansion stage length
  double tau_k = 0.0;  // pulse length at omega_k
};

/// Scaling factor at the switch from the expansion stage to the pulse, from
/// equating the Ermakov invariants of both stages (omegaI = 0 for free flight).
inline double kick_point_scaling(double bF, double omegaI, double omegak, double omega0 = 1.0) {
  const double wk2 = omegak * omegak, wi2 = omegaI * omegaI, w02 = omega0 * omega0;
  return std::sqrt((wk2 * bF * bF + wi2 + w02 / (bF * bF) - w02) / (wk2 + wi2));
}

inline PulseTiming finite_pulse_timing_free(double omega0, double omegaF, double omegak) {
  detail::require_cooling(omega0, omegaF);
  detail::require_positive(omegak, "omega_k");
  const double bF = std::sqrt(omega0 / omegaF);
  const double b2 = bF * bF;
  const double min_wk = omega0 / bF;
  if (omegak < min_wk)
    throw FeasibilityError("omega_k >= omega0/b_F = " + detail::fmt_num(min_wk));
  const double r = omega0 / omegak;
  const double rad = b2 - 1.0 + (1.0 - b2) / b2 * r * r;
  const double arg = std::sqrt((b2 - 1.0) / (b2 * b2 / (r * r) - 1.0));
  return {std::sqrt(std::max(rad, 0.0)) / omega0, std::asin(std::min(arg, 1.0)) / omegak};
}

inline PulseTiming finite_pulse_timing_inverted(double omega0, double omegaF, double omegaI,
                                                double omegak) {
  detail::require_cooling(omega0, omegaF);
  detail::require_positive(omegaI, "omega_I");
  detail::require_positive(omegak, "omega_k");
  const double bF = std::sqrt(omega0 / omegaF);
  const double b2 = bF * bF;
  const double v1 = (omegaI / omega0) * (omegaI / omega0);
  const double v2 = (omegak / omega0) * (omegak / omega0);
  const double min_wk = omega0 / bF;
  if (b2 * v2 < 1.0)
    throw FeasibilityError("omega_k >= omega0/b_F = " + detail::fmt_num(min_wk));
  const double sinh_arg = v1 * (b2 - 1.0) * (b2 * v2 - 1.0) / (b2 * (v1 + v2) * (v1 + 1.0));
  const double sin_arg = v2 * (b2 - 1.0) * (b2 * v1 + 1.0) / ((v1 + v2) * (b2 * b2 * v2 - 1.0));
  if (sin_arg > 1.0)
    throw FeasibilityError("v2 (b_F^2-1)(b_F^2 v1+1) <= (v1+v2)(b_F^4 v2-1) with v1=(omega_I/omega0)^2, "
                           "v2=(omega_k/omega0)^2 (left/right = " +
                           detail::fmt_num(sin_arg) + ")");
  return {std::asinh(std::sqrt(sinh_arg)) / omegaI, std::asin(std::sqrt(sin_arg)) / omegak};
}

/// Free flight then a finite pulse at omega_k, no delta kick.
inline ProtocolSpec design_finite_dkc_free(double omega0, double omegaF, double omegak) {
  const PulseTiming pt = finite_pulse_timing_free(omega0, omegaF, omegak);
  const double bF = std::sqrt(omega0 / omegaF);

  ProtocolSpec p;
  p.label = "finite-dkc-free";
  p.schedule = detail::make_schedule(omega0, omegaF);
  p.schedule.segments.push_back(SegmentLaw::constant(0.0, pt.t_k));
  p.schedule.segments.push_back(SegmentLaw::constant(omegak * omegak, pt.tau_k));
  p.design_params = {{"omega_F", omegaF}, {"omega_k", omegak}, {"b_F", bF},
                     {"t_k", pt.t_k},     {"tau_k", pt.tau_k}, {"pulse_area", pt.tau_k * omegak * omegak}};
  p.predicted_final = {bF, 0.0, pt.t_k + pt.tau_k};
  p.provenance = {
      "t_k = sqrt(b_F^2 - 1 + ((1 - b_F^2)/b_F^2) (omega0/omega_k)^2) / omega0",
      "tau_k = asin(sqrt((b_F^2 - 1) / (b_F^4 omega_k^2/omega0^2 - 1))) / omega_k"};
  return p;
}

/// Inverted-trap expansion then a finite pulse at omega_k.
inline ProtocolSpec design_finite_dkc_inverted(double omega0, double omegaF, double omegaI,
                                               double omegak) {
  const PulseTiming pt = finite_pulse_timing_inverted(omega0, omegaF, omegaI, omegak);
  const double bF = std::sqrt(omega0 / omegaF);

  ProtocolSpec p;
  p.label = "finite-dkc-inverted";
  p.schedule = detail::make_schedule(omega0, omegaF);
  p.schedule.segments.push_back(SegmentLaw::constant(-omegaI * omegaI, pt.t_k));
  p.schedule.segments.push_back(SegmentLaw::constant(omegak * omegak, pt.tau_k));
  p.design_params = {{"omega_F", omegaF}, {"omega_I", omegaI}, {"omega_k", omegak},
                     {"b_F", bF},         {"t_k", pt.t_k},     {"tau_k", pt.tau_k},
                     {"pulse_area", pt.tau_k * omegak * omegak}};
  p.predicted_final = {bF, 0.0, pt.t_k + pt.tau_k};
  p.provenance = {
      "t_k = asinh(sqrt(v1 (b_F^2-1)(b_F^2 v2-1) / (b_F^2 (v1+v2)(v1+1)))) / omega_I",
      "tau_k = asin(sqrt(v2 (b_F^2-1)(b_F^2 v1+1) / ((v1+v2)(b_F^4 v2-1)))) / omega_k",
      "v1 = (omega_I/omega0)^2, v2 = (omega_k/omega0)^2"};
  return p;
}

/// Pulse area tau_k w_k^2 of the inverted finite-pulse family as w_k -> infinity.
inline double inverted_pulse_area_limit(double bF, double omegaI, double omega0 = 1.0) {
  const double b2 = bF * bF;
  const double r = omegaI / omega0;
  return omega0 / b2 * std::sqrt((b2 - 1.0) * (b2 * r * r + 1.0));
}

struct PulseDrift {
  double delta_b = 0.0;
  double b_dot_final = 0.0;
};

/// Quoted leading-order corrections when the instantaneous kick strength is
/// delivered as a pulse at frequency omega_k after free flight to bF.
inline PulseDrift finite_pulse_drift(double bF, double omega0, double omegak) {
  detail::require_expansion(bF);
  detail::require_positive(omegak, "omega_k");
  const double r2 = (omega0 / omegak) * (omega0 / omegak);
  const double b2 = bF * bF;
  return {(b2 - 1.0) / (b2 * bF) * r2, std::sqrt(b2 - 1.0) / (b2 * b2 * bF) * omega0 * r2};
}

/// Exact drift for the same pulse, from the closed-form solution through it.
inline PulseDrift finite_pulse_drift_exact(double bF, double omega0, double omegak) {
  detail::require_expansion(bF);
  detail::require_positive(omegak, "omega_k");
  const double b_dot = omega0 * std::sqrt(bF * bF - 1.0) / bF;
  const double tau = (b_dot / bF) / (omegak * omegak);
  const ScalingState s = b_const_freq(tau, bF, b_dot, omegak * omegak, omega0);
  return {s.b - bF, s.b_dot};
}

struct InversionRatios {
  double width_ratio = 0.0;  // free-flight / inverted cloud width at tF
  double pulse_ratio = 0.0;  // free-flight / inverted kick strength
  double time_ratio = 0.0;   // inverted / free-flight expansion time for the same b_F
};

/// Long-time comparison of free flight against inverted-trap expansion over tF.
inline InversionRatios squeezing_and_pulse_ratios(double omega0, double omegaI, double tF) {
  detail::require_positive(omega0, "omega0");
  detail::require_positive(omegaI, "omega_I");
  detail::require_positive(tF, "t_F");
  InversionRatios r;
  r.width_ratio = 0.5 * std::sqrt(1.0 / (omega0 * omega0) + 1.0 / (omegaI * omegaI)) *
                  std::exp(omegaI * tF) / tF;
  r.pulse_ratio = 1.0 / (omegaI * tF);
  const double bF = b_const_freq(tF, 1.0, 0.0, -omegaI * omegaI, omega0).b;
  const double q = std::sqrt(omega0 * omega0 / (omegaI * omegaI) + 1.0);
  r.time_ratio = omega0 / (omegaI * bF) * std::log(2.0 * bF / q);
  return r;
}

}  // namespace trapctl
