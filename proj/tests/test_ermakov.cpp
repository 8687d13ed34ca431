#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracle.hpp"
#include "trapctl/ermakov.hpp"
#include "trapctl/errors.hpp"

using namespace trapctl;

TEST(ErmakovRhs, EquilibriumIsFixedPoint) {
  const auto r = ermakov_rhs({1.0, 0.0, 0.0}, 1.0, 1.0);
  EXPECT_EQ(r.db, 0.0);
  EXPECT_EQ(r.db_dot, 0.0);
}

TEST(ErmakovRhs, FreeAndInverted) {
  auto r = ermakov_rhs({1.0, 0.0, 0.0}, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(r.db_dot, 1.0);
  r = ermakov_rhs({2.0, 0.0, 0.0}, -1.0, 1.0);
  EXPECT_DOUBLE_EQ(r.db_dot, 2.125);
}

TEST(ErmakovRhs, RejectsNonPositiveB) {
  EXPECT_THROW(ermakov_rhs({0.0, 0.0, 0.0}, 1.0, 1.0), SingularStateError);
  EXPECT_THROW(ermakov_rhs({-1.0, 0.0, 0.0}, 1.0, 1.0), SingularStateError);
}

TEST(DeltaKick, CancelsRate) {
  const auto s = apply_delta_kick({2.0, 0.6, 0.3}, {0.3});
  EXPECT_EQ(s.b, 2.0);
  EXPECT_NEAR(s.b_dot, 0.0, 1e-16);
  EXPECT_EQ(s.t, 0.3);
  const auto id = apply_delta_kick({1.7, -0.4, 2.0}, {0.0});
  EXPECT_EQ(id.b_dot, -0.4);
  const auto tof = apply_delta_kick({std::sqrt(2.0), 1.0 / std::sqrt(2.0), 1.0}, {0.5});
  EXPECT_NEAR(tof.b_dot, 0.0, 2e-16);
}

TEST(DeltaKick, ExactRatioGivesZero) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ub(0.2, 5.0), uv(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    ScalingState s{ub(rng), uv(rng), 0.0};
    const auto k = apply_delta_kick(s, {s.b_dot / s.b});
    EXPECT_LE(std::abs(k.b_dot), 4e-16 * std::abs(s.b_dot) + 1e-300);
  }
}

TEST(ClosedForms, TofAndAdiabatic) {
  EXPECT_EQ(b_tof(0.0), 1.0);
  EXPECT_DOUBLE_EQ(b_tof(1.0), std::sqrt(2.0));
  EXPECT_NEAR(b_tof(1.5), 1.8027756377319946, 1e-15);
  EXPECT_DOUBLE_EQ(b_tof_rate(1.0), 1.0 / std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(b_adiabatic(1.0), 1.0);
  EXPECT_DOUBLE_EQ(b_adiabatic(0.25), 2.0);
  EXPECT_DOUBLE_EQ(b_adiabatic(0.5), std::sqrt(2.0));
  EXPECT_THROW(b_adiabatic(0.0), DomainError);
  EXPECT_THROW(b_adiabatic(-1.0), DomainError);
}

TEST(ClosedForms, PinneyBranches) {
  EXPECT_NEAR(b_const_freq(3.7, 1.0, 0.0, 1.0, 1.0).b, 1.0, 1e-15);
  // inverted expansion law
  for (double wI : {0.5, 1.0, 4.0})
    for (double s : {0.1, 0.5, 1.0}) {
      const double sh = std::sinh(wI * s);
      EXPECT_NEAR(b_const_freq(s, 1.0, 0.0, -wI * wI, 1.0).b,
                  std::sqrt(1.0 + (1.0 + 1.0 / (wI * wI)) * sh * sh), 1e-13);
    }
  // sudden quench oscillation between 1 and w0/w1
  const double w1 = 0.5;
  for (double s : {0.3, 1.0, 2.0, M_PI / w1 / 2}) {
    const double sn = std::sin(w1 * s);
    EXPECT_NEAR(b_const_freq(s, 1.0, 0.0, w1 * w1, 1.0).b,
                std::sqrt(1.0 + (1.0 / (w1 * w1) - 1.0) * sn * sn), 1e-14);
  }
  EXPECT_NEAR(b_const_freq(M_PI / (2 * w1), 1.0, 0.0, w1 * w1, 1.0).b, 1.0 / w1, 1e-14);
}

TEST(ClosedForms, InvertedValueAtUnitTime) {
  // b = sqrt(1 + 2 sinh^2 1); reference value from the formula itself
  const double expected = std::sqrt(1.0 + 2.0 * std::sinh(1.0) * std::sinh(1.0));
  EXPECT_NEAR(expected, 1.939638030943823, 1e-14);
  EXPECT_NEAR(b_const_freq(1.0, 1.0, 0.0, -1.0, 1.0).b, expected, 1e-14);
}

TEST(ClosedForms, FreeBranchMatchesTof) {
  for (double t = 0.0; t < 20.0; t += 0.37)
    EXPECT_NEAR(b_const_freq(t, 1.0, 0.0, 0.0, 1.0).b / b_tof(t), 1.0, 1e-12);
}

TEST(ClosedForms, PeriodicityAndDerivative) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ub(0.5, 3.0), uv(-2.0, 2.0), uw(-4.0, 4.0), us(0.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double b0 = ub(rng), v0 = uv(rng), w2 = uw(rng), s = us(rng);
    if (w2 > 0.05) {
      const double period = M_PI / std::sqrt(w2);
      EXPECT_NEAR(b_const_freq(s + period, b0, v0, w2, 1.0).b, b_const_freq(s, b0, v0, w2, 1.0).b,
                  1e-11 * b_const_freq(s, b0, v0, w2, 1.0).b);
    }
    // analytic rate vs numerical derivative of the closed form
    auto f = [&](double x) { return b_const_freq(x, b0, v0, w2, 1.0).b; };
    const double s1 = 0.01 + s;
    const double fd = oracle::derivative(f, s1, 1e-4);
    EXPECT_NEAR(b_const_freq(s1, b0, v0, w2, 1.0).b_dot, fd, 1e-6 * (1.0 + std::abs(fd)));
    // and the closed form satisfies the Ermakov equation
    const double b = f(s1);
    EXPECT_NEAR(oracle::second_derivative(f, s1, 1e-3), 1.0 / (b * b * b) - w2 * b,
                1e-5 * (1.0 + std::abs(w2 * b)));
  }
}

TEST(ClosedForms, Backward) {
  EXPECT_DOUBLE_EQ(b_const_freq_backward(2.0, 1.5, 3.0, 2.0, 1.0), 1.5);
  const double w = 0.25, bF = 2.0;
  for (double t : {0.0, 0.7, 1.9}) EXPECT_NEAR(b_const_freq_backward(t, bF, w, 2.0, 1.0), bF, 1e-14);
}

TEST(ClosedForms, BackwardFinitePulseContinuity) {
  // free flight then a pulse at w_k = 4 reaching (sqrt 2, 0); timing from an
  // independent evaluation of the two finite-pulse formulas
  const double bF = std::sqrt(2.0), wk = 4.0;
  const double tk = std::sqrt(bF * bF - 1.0 + (1.0 - bF * bF) / (bF * bF) / (wk * wk));
  const double tau = std::asin(std::sqrt((bF * bF - 1.0) / (bF * bF * bF * bF * wk * wk - 1.0))) / wk;
  EXPECT_NEAR(tk, 0.9842509842514766, 1e-13);
  EXPECT_NEAR(tau, 0.03158096578557044, 1e-13);
  const double back = b_const_freq_backward(tk, bF, wk, tk + tau, 1.0);
  EXPECT_NEAR(back, b_tof(tk), 1e-12);
  EXPECT_NEAR(back, 1.4031215200402283, 1e-12);
}

TEST(Invariant, Values) {
  EXPECT_DOUBLE_EQ(ermakov_invariant({1.0, 0.0, 0.0}, 1.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(ermakov_invariant({1.0, 0.0, 0.0}, -9.0, 1.0), 1.0 - 9.0);
  const double bF = 1.3, wk2 = 50.0;
  EXPECT_DOUBLE_EQ(ermakov_invariant({bF, 0.0, 0.0}, wk2, 1.0), wk2 * bF * bF + 1.0 / (bF * bF));
}

TEST(Integrate, FreeSegment) {
  FrequencySchedule s;
  s.segments.push_back(SegmentLaw::constant(0.0, 1.0));
  const auto traj = integrate(s, ScalingState{}, 1e-10);
  EXPECT_NEAR(traj.final_state().b, std::sqrt(2.0), 1e-9);
  for (std::size_t i = 1; i < traj.samples.size(); ++i)
    EXPECT_GT(traj.samples[i].t, traj.samples[i - 1].t);
}

TEST(Integrate, EquilibriumStaysPut) {
  FrequencySchedule s;
  s.segments.push_back(SegmentLaw::constant(1.0, 25.0));
  const auto traj = integrate(s, ScalingState{}, 1e-10);
  for (const auto& x : traj.samples) EXPECT_NEAR(x.b, 1.0, 1e-13);
}

TEST(Integrate, InvertedSegment) {
  FrequencySchedule s;
  s.segments.push_back(SegmentLaw::constant(-1.0, 1.0));
  const auto traj = integrate(s, ScalingState{}, 1e-10);
  EXPECT_NEAR(traj.final_state().b, 1.939638030943823, 1e-8);
}

TEST(Integrate, MatchesRk4Oracle) {
  FrequencySchedule s;
  s.segments = {SegmentLaw::constant(0.0, 0.7), SegmentLaw::constant(-2.0, 0.4),
                SegmentLaw::constant(3.0, 1.1)};
  s.kicks = {{1.1, {0.4}}};
  const auto traj = integrate(s, ScalingState{}, 1e-11);
  const auto ref = oracle::rk4_ermakov({{0.0, 0.7}, {-2.0, 0.4, 0.4}, {3.0, 1.1}}, 1.0, {});
  EXPECT_NEAR(traj.final_state().b, ref.b, 1e-9);
  EXPECT_NEAR(traj.final_state().b_dot, ref.v, 1e-9);
}

TEST(Integrate, SmoothSegmentMatchesRk4Oracle) {
  const auto seg = SegmentLaw::polynomial_sta(2.0, 2, 2.0);
  FrequencySchedule s;
  s.segments = {seg};
  const auto traj = integrate(s, ScalingState{}, 1e-11);
  const auto ref = oracle::rk4_ermakov_smooth([&](double t) { return seg.omega_sq_at(t, 1.0); }, 2.0, 1.0, {});
  EXPECT_NEAR(traj.final_state().b, ref.b, 1e-9);
  EXPECT_NEAR(traj.final_state().b_dot, ref.v, 1e-9);
  // the ansatz itself
  EXPECT_NEAR(ref.b, 2.0, 1e-9);
  EXPECT_NEAR(ref.v, 1.5, 1e-9);
}

TEST(Integrate, LandsOnBoundariesAndSamples) {
  FrequencySchedule s;
  s.segments = {SegmentLaw::constant(0.0, 0.3), SegmentLaw::constant(2.0, 0.45)};
  s.kicks = {{0.3, {0.2}}, {0.5, {-0.1}}};
  IntegrateOptions o;
  o.sample_times = {0.1, 0.6};
  o.record_steps = false;
  const auto traj = integrate(s, ScalingState{}, o);
  std::vector<double> ts;
  for (const auto& x : traj.samples) ts.push_back(x.t);
  const std::vector<double> expect{0.0, 0.1, 0.3, 0.5, 0.6, 0.75};
  ASSERT_EQ(ts.size(), expect.size());
  for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_DOUBLE_EQ(ts[i], expect[i]);
  const auto bounds = traj.segment_boundaries();
  EXPECT_EQ(bounds, (std::vector<double>{0.3, 0.5}));
  EXPECT_EQ(traj.alpha_log().size(), traj.samples.size());
  // kick events change only b_dot
  for (const auto& e : traj.events)
    if (e.kind == EventKind::kick) {
      EXPECT_EQ(e.before.b, e.after.b);
      EXPECT_NEAR(e.after.b_dot, e.before.b_dot - e.kappa * e.before.b, 1e-15);
    }
}

TEST(Integrate, KickAtTimeZero) {
  FrequencySchedule s;
  s.segments = {SegmentLaw::constant(1.0, 1.0)};
  s.kicks = {{0.0, {0.5}}};
  const auto traj = integrate(s, ScalingState{}, 1e-11);
  const auto cf = b_const_freq(1.0, 1.0, -0.5, 1.0, 1.0);
  EXPECT_NEAR(traj.final_state().b, cf.b, 1e-10);
}

TEST(Integrate, BelowFloorIsError) {
  FrequencySchedule s;
  s.segments = {SegmentLaw::constant(1.0, 10.0)};
  s.kicks = {{0.0, {1e6}}};  // enormous inward kick collapses the cloud
  IntegrateOptions o;
  o.b_floor = 1e-3;
  try {
    integrate(s, ScalingState{}, o);
    FAIL() << "expected SingularStateError";
  } catch (const SingularStateError& e) {
    EXPECT_GE(e.time(), 0.0);
    EXPECT_LT(e.time(), 1e-3);
  }
}

TEST(Integrate, OverflowIsError) {
  FrequencySchedule s;
  s.segments = {SegmentLaw::constant(-1e4, 100.0)};
  EXPECT_THROW(integrate(s, ScalingState{}, 1e-10), NumericOverflowError);
}

TEST(Integrate, RejectsBadInput) {
  FrequencySchedule s;
  s.segments = {SegmentLaw::constant(0.0, 1.0)};
  EXPECT_THROW(integrate(s, ScalingState{0.0, 0.0, 0.0}, 1e-10), SingularStateError);
  EXPECT_THROW(integrate(s, ScalingState{}, -1.0), DomainError);
  s.kicks = {{2.0, {0.1}}};
  EXPECT_THROW(integrate(s, ScalingState{}, 1e-10), DomainError);
  s.kicks.clear();
  s.segments = {SegmentLaw::constant(0.0, -1.0)};
  EXPECT_THROW(integrate(s, ScalingState{}, 1e-10), DomainError);
  s.segments = {SegmentLaw::polynomial_sta(2.0, 0, 1.0)};
  EXPECT_THROW(integrate(s, ScalingState{}, 1e-10), DomainError);
}

TEST(Integrate, TimeReversal) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ub(0.5, 3.0), uv(-2.0, 2.0), uw(-4.0, 4.0), us(0.1, 3.0);
  for (int i = 0; i < 25; ++i) {
    const double b0 = ub(rng), v0 = uv(rng), w2 = uw(rng), T = us(rng);
    FrequencySchedule s;
    s.segments = {SegmentLaw::constant(w2, T)};
    const auto fwd = integrate(s, ScalingState{b0, v0, 0.0}, 1e-11).final_state();
    const auto back = integrate(s, ScalingState{fwd.b, -fwd.b_dot, 0.0}, 1e-11).final_state();
    EXPECT_NEAR(back.b, b0, 1e-8 * b0);
    EXPECT_NEAR(-back.b_dot, v0, 1e-8 * (1.0 + std::abs(v0)));
  }
}

TEST(Schedule, RightContinuousOmega) {
  FrequencySchedule s;
  s.omega_final_sq = 0.25;
  s.segments = {SegmentLaw::constant(0.0, 1.0), SegmentLaw::constant(9.0, 0.5)};
  EXPECT_EQ(s.omega_sq_at(-0.1), 1.0);
  EXPECT_EQ(s.omega_sq_at(0.5), 0.0);
  EXPECT_EQ(s.omega_sq_at(1.0), 9.0);
  EXPECT_EQ(s.omega_sq_at(1.5), 0.25);
  EXPECT_DOUBLE_EQ(s.total_duration(), 1.5);
  EXPECT_TRUE(s.all_constant());
  const auto h = s.with_hold(2.0);
  EXPECT_DOUBLE_EQ(h.total_duration(), 3.5);
}

TEST(Schedule, ConstantMuLaw) {
  const auto seg = SegmentLaw::constant_mu(0.5, 4.0);
  EXPECT_DOUBLE_EQ(seg.omega_sq_at(0.0, 1.0), 1.0);
  EXPECT_NEAR(seg.omega_sq_at(4.0, 1.0), 0.25, 1e-15);
  // w'/w^2 is constant
  auto w = [&](double t) { return std::sqrt(seg.omega_sq_at(t, 1.0)); };
  const double mu0 = -oracle::derivative(w, 0.5) / (w(0.5) * w(0.5));
  const double mu1 = -oracle::derivative(w, 3.0) / (w(3.0) * w(3.0));
  EXPECT_NEAR(mu0, mu1, 1e-8);
  EXPECT_NEAR(mu0, (1.0 - 0.5) / (0.5 * 4.0), 1e-8);
}
