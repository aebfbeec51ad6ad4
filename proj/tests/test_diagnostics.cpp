#include <gtest/gtest.h>

#include <cmath>

#include "spi/diagnostics.hpp"

using namespace spi;

TEST(PoissonMap, IdentityStepHasZeroResidual) {
  const auto sys = maxwell_bloch();
  const Vec<double> y{0.3, 0.4, 0.5}, dw{0, 0};
  EXPECT_LE(poisson_map_residual(make_stepper("mb-splitting"), sys, y, 0.0, dw), 1e-15);
  EXPECT_LE(poisson_map_residual(make_stepper("heun"), sys, y, 0.0, dw), 1e-15);
}

TEST(PoissonMap, MidpointOnPendulum) {
  const auto sys = pendulum();
  const auto st = make_stepper("midpoint");
  double worst = 0.0;
  for (const auto& s : residual_samples(sys, 100, 0.1, 3)) {
    worst = std::max(worst, poisson_map_residual(st, sys, s.y, s.h, s.dw));
    EXPECT_LE(symplectic_residual(st, sys, s.y, s.h, s.dw), 1e-9);
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(PoissonMap, HeunOnMaxwellBlochIsNotPoisson) {
  const auto sys = maxwell_bloch();
  double worst = 0.0;
  for (const auto& s : residual_samples(sys, 100, 0.1, 3))
    worst = std::max(worst, poisson_map_residual(make_stepper("heun"), sys, s.y, 0.1, s.dw));
  EXPECT_GT(worst, 1e-6);
}

TEST(PoissonMap, CompositionBound) {
  const auto sys = maxwell_bloch(0.3, 0.2);
  const auto st = make_stepper("mb-splitting");
  const Vec<double> y{0.5, -0.2, 0.9}, dw1{0.1, -0.05}, dw2{0.02, 0.07};
  const auto y1 = step(st, sys, y, 0.1, dw1);
  const double r1 = poisson_map_residual(st, sys, y, 0.1, dw1);
  const double r2 = poisson_map_residual(st, sys, y1, 0.1, dw2);
  // composed map via chained Jacobians
  const auto j1 = step_jacobian(st, sys, y, 0.1, dw1);
  const auto j2 = step_jacobian(st, sys, y1, 0.1, dw2);
  const auto b0 = sys.structure<double>(y);
  const auto b2 = sys.structure<double>(j2.value);
  double p[3][3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) p[i][j] += j2.jacobian[i][k] * j1.jacobian[k][j];
  double res = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) s += p[i][k] * b0(k, l) * p[j][l];
      res = std::max(res, std::abs(s - b2(i, j)));
    }
  EXPECT_LE(res, r1 + r2 + 1e-13);
}

TEST(Drift, SplittingCasimirIsFlat) {
  const auto sys = maxwell_bloch();
  TrackRequest req;
  req.casimirs = true;
  const auto tr = integrate(sys, make_stepper("mb-splitting"), Vec<double>{1, 1, 1}, 0.1, 20000,
                            sample_increments({2, 0}, 0.1, 2, 20000), req);
  const auto s = functional_drift(tr, "casimir_0");
  EXPECT_LE(max_abs_deviation(s), 1e-12 * std::abs(tr.tracks.at("casimir_0")[0]));
}

TEST(Drift, MidpointBoundedHeunNot) {
  const auto sys = pendulum();
  const Vec<double> y0{1, 2};
  const auto inc = sample_increments({1, 0}, 0.1, 3, 20000);
  TrackRequest req;
  req.hamiltonian = true;
  req.keep_states = false;
  const auto mid = functional_drift(integrate(sys, make_stepper("midpoint"), y0, 0.1, 20000, inc, req), "hamiltonian");
  const auto heun = functional_drift(integrate(sys, make_stepper("heun"), y0, 0.1, 20000, inc, req), "hamiltonian");
  EXPECT_LE(envelope_slope(mid), 1e-5);
  EXPECT_GE(envelope_slope(heun), 10.0 * std::max(envelope_slope(mid), 1e-12));
}

TEST(Drift, UnknownFunctional) {
  const auto tr = integrate(pendulum(), make_stepper("midpoint"), Vec<double>{1, 2}, 0.1, 3,
                            sample_increments({1, 0}, 0.1, 3, 3));
  EXPECT_THROW(functional_drift(tr, "hamiltonian"), std::invalid_argument);
}

TEST(Drift, EnvelopeSlopeOfLine) {
  DriftSeries s;
  for (int i = 0; i <= 10; ++i) {
    s.t.push_back(i);
    s.values.push_back(-0.5 * i);
  }
  EXPECT_NEAR(envelope_slope(s), 0.5, 1e-14);
  s.values[3] = std::nan("");
  EXPECT_TRUE(std::isinf(envelope_slope(s)));
}

TEST(LogLog, RecoversPowerLaw) {
  const std::vector<double> x{0.1, 0.05, 0.025}, y{0.3 * std::pow(0.1, 1.5), 0.3 * std::pow(0.05, 1.5),
                                                   0.3 * std::pow(0.025, 1.5)};
  EXPECT_NEAR(fit_loglog(x, y).slope, 1.5, 1e-12);
}

TEST(DriftScaling, RejectsSingleStepSize) {
  EXPECT_THROW(drift_scaling_exponent(maxwell_bloch(), make_stepper("mb-splitting"), Vec<double>{1, 1, 1}, 10.0, {0.1}),
               std::invalid_argument);
}

TEST(DriftScaling, RoundingFloorRejected) {
  // no noise: the splitting conserves the per-step Hbar of a linear subflow exactly
  const auto sys = harmonic_oscillator({0.0});
  DriftScalingOptions opt;
  opt.n_paths = 4;
  EXPECT_THROW(drift_scaling_exponent(sys, make_stepper("midpoint"), Vec<double>{1, 0}, 10.0, {0.2, 0.1}, opt),
               std::runtime_error);
}

TEST(StrongOrder, MidpointOnProportionalPendulum) {
  OrderOptions opt;
  opt.n_paths = 200;
  const auto est = strong_order_estimate(pendulum({0.5, 0.5, 0.5}), make_stepper("midpoint"), Vec<double>{1, 2}, 1.0,
                                         {0.02, 0.01, 0.005}, opt);
  EXPECT_GE(est.slope, 0.9);
  EXPECT_LE(est.slope, 1.1);
}

TEST(StrongOrder, RejectsSingleStepSize) {
  EXPECT_THROW(strong_order_estimate(pendulum(), make_stepper("midpoint"), Vec<double>{1, 2}, 1.0, {0.01}),
               std::invalid_argument);
}
