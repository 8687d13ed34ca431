#pragma once

// Single-mode Gaussian phase space (hbar = m = 1).
//
// Maps are forward maps acting on points (r, p): a state with covariance S
// becomes F S F^T. Pullback matrices, i.e. arguments of the initial Wigner
// function, are their inverses.

#include <cmath>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "trapctl/errors.hpp"

namespace trapctl {

/// 2x2 real matrix (a b; c d) with unit determinant.
struct SymplecticMap {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  double det() const noexcept { return a * d - b * c; }

  static SymplecticMap identity() noexcept { return {}; }

  /// this * rhs: apply rhs first, then this.
  SymplecticMap operator*(const SymplecticMap& rhs) const noexcept {
    return {a * rhs.a + b * rhs.c, a * rhs.b + b * rhs.d, c * rhs.a + d * rhs.c,
            c * rhs.b + d * rhs.d};
  }

  SymplecticMap inverse() const noexcept { return {d, -b, -c, a}; }
};

/// Zero-mean Gaussian covariance (sigma_rr, sigma_rp, sigma_pp).
struct GaussianState {
  double sigma_rr = 0.5;
  double sigma_rp = 0.0;
  double sigma_pp = 0.5;

  double det() const noexcept { return sigma_rr * sigma_pp - sigma_rp * sigma_rp; }

  bool positive_definite() const noexcept {
    return std::isfinite(sigma_rr) && std::isfinite(sigma_rp) && std::isfinite(sigma_pp) &&
           sigma_rr > 0.0 && det() > 0.0;
  }

  /// Positive definite and above the uncertainty bound det >= 1/4 (up to rounding).
  bool physical(double slack = 1e-12) const noexcept {
    return positive_definite() && det() >= 0.25 * (1.0 - slack);
  }
};

/// Forward map of scale-invariant evolution: r -> b r, p -> p/b + b_dot r.
inline SymplecticMap map_scale_invariant(double b, double b_dot) {
  if (!(b > 0.0)) throw DomainError("scale-invariant map requires b > 0");
  return {b, 0.0, b_dot, 1.0 / b};
}

/// Pullback form (1/b, 0; -b_dot, b), the inverse of map_scale_invariant.
inline SymplecticMap pullback_scale_invariant(double b, double b_dot) {
  if (!(b > 0.0)) throw DomainError("scale-invariant map requires b > 0");
  return {1.0 / b, 0.0, -b_dot, b};
}

/// Momentum shear p -> p - kappa r.
inline SymplecticMap map_delta_kick(double kappa) noexcept { return {1.0, 0.0, -kappa, 1.0}; }

/// Product of maps given in application order: maps[0] acts first.
inline SymplecticMap compose(std::span<const SymplecticMap> maps) {
  if (maps.empty()) throw DomainError("compose requires at least one map");
  SymplecticMap out = maps.front();
  for (std::size_t i = 1; i < maps.size(); ++i) out = maps[i] * out;
  return out;
}

inline SymplecticMap compose(std::initializer_list<SymplecticMap> maps) {
  return compose(std::span<const SymplecticMap>(maps.begin(), maps.size()));
}

/// coth(x/2) without overflow for large x.
inline double coth_half(double x) { return 1.0 + 2.0 / std::expm1(x); }

/// Thermal state of an oscillator of frequency omega at inverse temperature beta.
inline GaussianState thermal_state(double beta, double omega) {
  if (!(beta > 0.0)) throw DomainError("thermal state requires beta > 0");
  if (!(omega > 0.0)) throw DomainError("thermal state requires omega > 0");
  const double ct = coth_half(beta * omega);
  return {ct / (2.0 * omega), 0.0, 0.5 * omega * ct};
}

inline GaussianState ground_state(double omega) {
  if (!(omega > 0.0)) throw DomainError("ground state requires omega > 0");
  return {0.5 / omega, 0.0, 0.5 * omega};
}

inline GaussianState evolve(const GaussianState& s, const SymplecticMap& f) {
  // S' = F S F^T
  const double ra = f.a * s.sigma_rr + f.b * s.sigma_rp;
  const double rb = f.a * s.sigma_rp + f.b * s.sigma_pp;
  const double pa = f.c * s.sigma_rr + f.d * s.sigma_rp;
  const double pb = f.c * s.sigma_rp + f.d * s.sigma_pp;
  GaussianState out{ra * f.a + rb * f.b, ra * f.c + rb * f.d, pa * f.c + pb * f.d};
  if (!out.positive_definite()) throw DegeneracyError("evolved covariance is not positive definite");
  return out;
}

struct Widths {
  double delta_r = 0.0;
  double delta_p = 0.0;
  double product = 0.0;
};

inline Widths widths(const GaussianState& s) {
  return {std::sqrt(s.sigma_rr), std::sqrt(s.sigma_pp), std::sqrt(s.sigma_rr * s.sigma_pp)};
}

/// Uncertainty product after scale-invariant evolution of an uncorrelated state.
inline double uncertainty_product_scaled(double delta_r0, double delta_p0, double b, double b_dot) {
  return delta_r0 * std::sqrt(delta_p0 * delta_p0 + b * b * b_dot * b_dot * delta_r0 * delta_r0);
}

inline double wigner_density(const GaussianState& s, double r, double p) {
  const double det = s.det();
  // x^T S^-1 x with S^-1 = (pp -rp; -rp rr) / det
  const double q = (s.sigma_pp * r * r - 2.0 * s.sigma_rp * r * p + s.sigma_rr * p * p) / det;
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
}

struct AxisSpec {
  double min = -1.0;
  double max = 1.0;
  std::size_t points = 2;

  double at(std::size_t i) const {
    return points == 1 ? min : min + (max - min) * static_cast<double>(i) /
                                         static_cast<double>(points - 1);
  }
  double spacing() const { return (max - min) / static_cast<double>(points - 1); }
};

/// Sampled Wigner function; row i is p = p_axis[i], column j is r = r_axis[j].
struct WignerGrid {
  GaussianState state;
  std::vector<double> r_axis;
  std::vector<double> p_axis;
  std::vector<double> values;  // row-major, p_axis.size() x r_axis.size()

  double at(std::size_t ip, std::size_t ir) const { return values[ip * r_axis.size() + ir]; }

  /// Trapezoid-rule integral over the sampled window.
  double integral() const {
    const std::size_t nr = r_axis.size(), np = p_axis.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t j = 0; j < nr; ++j) {
        const double wr = (j == 0 || j + 1 == nr) ? 0.5 : 1.0;
        const double wp = (i == 0 || i + 1 == np) ? 0.5 : 1.0;
        acc += wr * wp * at(i, j);
      }
    return acc * (r_axis[1] - r_axis[0]) * (p_axis[1] - p_axis[0]);
  }

  /// Position marginal: trapezoid over p for every r.
  std::vector<double> marginal_r() const {
    const std::size_t nr = r_axis.size(), np = p_axis.size();
    std::vector<double> out(nr, 0.0);
    const double dp = p_axis[1] - p_axis[0];
    for (std::size_t i = 0; i < np; ++i) {
      const double w = (i == 0 || i + 1 == np) ? 0.5 : 1.0;
      for (std::size_t j = 0; j < nr; ++j) out[j] += w * dp * at(i, j);
    }
    return out;
  }

  std::vector<double> marginal_p() const {
    const std::size_t nr = r_axis.size(), np = p_axis.size();
    std::vector<double> out(np, 0.0);
    const double dr = r_axis[1] - r_axis[0];
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t j = 0; j < nr; ++j) {
        const double w = (j == 0 || j + 1 == nr) ? 0.5 : 1.0;
        out[i] += w * dr * at(i, j);
      }
    return out;
  }
};

inline WignerGrid wigner_grid(const GaussianState& s, const AxisSpec& r, const AxisSpec& p) {
  if (!s.positive_definite()) throw DegeneracyError("Wigner grid requires a positive-definite covariance");
  if (r.points < 2 || p.points < 2) throw DomainError("grid resolution must be >= 2 per axis");
  if (!(r.max > r.min) || !(p.max > p.min)) throw DomainError("grid ranges must be non-empty");
  WignerGrid g;
  g.state = s;
  g.r_axis.resize(r.points);
  g.p_axis.resize(p.points);
  for (std::size_t j = 0; j < r.points; ++j) g.r_axis[j] = r.at(j);
  for (std::size_t i = 0; i < p.points; ++i) g.p_axis[i] = p.at(i);
  g.values.resize(r.points * p.points);
  for (std::size_t i = 0; i < p.points; ++i)
    for (std::size_t j = 0; j < r.points; ++j)
      g.values[i * r.points + j] = wigner_density(s, g.r_axis[j], g.p_axis[i]);
  return g;
}

/// Window of +-k standard deviations on both axes.
inline WignerGrid wigner_grid(const GaussianState& s, double k_sigma, std::size_t resolution) {
  const double sr = std::sqrt(s.sigma_rr), sp = std::sqrt(s.sigma_pp);
  return wigner_grid(s, AxisSpec{-k_sigma * sr, k_sigma * sr, resolution},
                     AxisSpec{-k_sigma * sp, k_sigma * sp, resolution});
}

}  // namespace trapctl
