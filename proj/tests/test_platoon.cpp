#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "h2coord/platoon.hpp"

using namespace h2coord;
using namespace h2coord::platoon;

namespace {

PlatoonSpec four_vehicles() {
  PlatoonSpec s;
  s.nu = 4;
  s.delta = Vec(4);
  s.delta << -3, -1, 1, 3;
  s.h = 0.2;
  s.q1 = 1.0;
  s.q2 = 0.5;
  return s;
}

sim::DisturbanceSpec gusts(int nu, int steps) {
  sim::disturbance::Waveform wf;
  for (int k = 0; k <= steps; ++k) {
    Mat w(1, nu);
    for (int i = 0; i < nu; ++i) w(0, i) = 0.5 * std::sin(0.02 * k * (i + 1) + i);
    wf.samples.push_back(w);
  }
  return wf;
}

}  // namespace

TEST(PlatoonModel, CompanionForm) {
  PlatoonSpec s = four_vehicles();
  s.kappa0 = 1.0;
  s.kappa1 = 2.0;
  const auto m = build_agent_model(s);
  Mat A(2, 2);
  A << 0, 1, -1, -2;
  EXPECT_EQ(m.A, A);
  EXPECT_EQ((m.Dzu.transpose() * m.Dzu)(0, 0), 1.0);
  s.q1 = s.q2 = 0.0;
  EXPECT_EQ(build_agent_model(s).Cz.topRows(2).cwiseAbs().maxCoeff(), 0.0);
  s.kappa0 = 0.0;
  EXPECT_THROW(build_agent_model(s), std::invalid_argument);
}

TEST(PlatoonSpec, RejectsBadOffsets) {
  PlatoonSpec s = four_vehicles();
  s.delta << -3, -1, 1, 4;
  EXPECT_THROW(s.check(), std::invalid_argument);
  s.delta << -1, -1, 1, 1;
  EXPECT_THROW(s.check(), std::invalid_argument);
  s.delta = Vec(3);
  EXPECT_THROW(s.check(), std::invalid_argument);
}

TEST(PlatoonDesign, OverridesA2AndReportsIt) {
  const auto d = design(four_vehicles());
  EXPECT_FALSE(d.report.get(Assumption::DisturbanceSquare).passed);
  EXPECT_TRUE(d.report.ok(true));
  EXPECT_TRUE(std::holds_alternative<SampledStatic>(d.local.controller));
}

TEST(References, AnalyticDerivatives) {
  const Reference refs[] = {reference::Constant{2.0}, reference::Ramp{1.0, 3.0},
                            reference::Sinusoid{0.5, 2.0, 1.3, 0.4}};
  for (const auto& r : refs) {
    const double t = 0.77, e = 1e-5;
    const auto a = evaluate(r, t - e), b = evaluate(r, t), c = evaluate(r, t + e);
    EXPECT_NEAR((c.r - a.r) / (2 * e), b.rd, 1e-8);
    EXPECT_NEAR((c.rd - a.rd) / (2 * e), b.rdd, 1e-8);
  }
}

TEST(AssembleThrust, PerfectTrackingNeedsOnlyReferenceAcceleration) {
  const PlatoonSpec s = four_vehicles();
  const auto d = design(s);
  const ReferenceSample ref{5.0, 1.0, 0.3};
  SampleHold held{Vec::Constant(4, 5.0) + s.delta, Vec::Constant(4, 1.0)};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(assemble_thrust(s, d, held, i, held.p(i), held.v(i), ref), ref.rdd, 1e-12);
  }
  EXPECT_THROW(assemble_thrust(s, d, SampleHold{}, 0, 0.0, 0.0, ref), std::invalid_argument);
}

TEST(RunPlatoon, ConvergesToFormation) {
  const PlatoonSpec s = four_vehicles();
  InitialState init;
  init.p = Vec(4);
  init.p << -3.5, -0.2, 1.3, 2.7;
  init.v = Vec::Zero(4);
  const auto run = run_platoon(s, {0.01, 30.0}, sim::disturbance::None{}, init);
  EXPECT_LT(run.report.back().max_formation_err, 1e-4);
  EXPECT_LT(std::abs(run.report.back().eps_bar), 1e-4);
  EXPECT_LE(run.thrust_identity_error, 1e-9);
  EXPECT_LE(run.u_residual, 1e-9);
}

TEST(RunPlatoon, EpsBarIndependentOfReference) {
  PlatoonSpec a = four_vehicles();
  a.reference = reference::Sinusoid{0.0, 2.0, 0.7, 0.3};
  PlatoonSpec b = a;
  b.reference = reference::Ramp{5.0, 1.5};
  const auto ra = evaluate(a.reference, 0.0), rb = evaluate(b.reference, 0.0);
  InitialState ia;
  ia.p = Vec(4);
  ia.p << -3.5, -0.2, 1.3, 2.7;
  ia.v = Vec::Constant(4, 0.1);
  InitialState ib{(ia.p.array() + (rb.r - ra.r)).matrix(), (ia.v.array() + (rb.rd - ra.rd)).matrix()};
  const auto dist = gusts(4, 2000);
  const auto runa = run_platoon(a, {0.01, 20.0}, dist, ia);
  const auto runb = run_platoon(b, {0.01, 20.0}, dist, ib);
  EXPECT_LE(eps_bar_gap(runa, runb), 1e-9);
}

TEST(RunPlatoon, ReducedModelReconstructsPositions) {
  PlatoonSpec s = four_vehicles();
  s.reference = reference::Sinusoid{1.0, 1.0, 0.5, 0.0};
  const auto dist = gusts(4, 2000);
  const auto run = run_platoon(s, {0.01, 20.0}, dist);
  EXPECT_LE(deviation_reconstruction_gap(s, {0.01, 20.0}, dist, run), 1e-8);
}

TEST(RunPlatoon, VelocityKickAndGridChecks) {
  const PlatoonSpec s = four_vehicles();
  EXPECT_THROW(run_platoon(s, {0.03, 3.0}, sim::disturbance::None{}), std::invalid_argument);
  EXPECT_THROW(run_platoon(s, {0.01, 3.0}, sim::disturbance::ImpulseChannel{0, 1, 0.0}),
               std::invalid_argument);
  const auto run = run_platoon(s, {0.01, 3.0}, sim::disturbance::ImpulseChannel{1, 0, 0.0});
  EXPECT_NEAR(run.v[0](1), 1.0, 1e-15);
}

TEST(RunPlatoon, MinimalTwoVehicles) {
  PlatoonSpec s;
  s.nu = 2;
  s.delta = Vec(2);
  s.delta << -0.5, 0.5;
  const auto run = run_platoon(s, {0.01, 5.0}, sim::disturbance::WhiteNoise{1, 0.1});
  EXPECT_LE(run.thrust_identity_error, 1e-9);
}

TEST(ReportCsv, Header) {
  const auto run = run_platoon(four_vehicles(), {0.1, 1.0}, sim::disturbance::None{});
  std::ostringstream os;
  write_report_csv(os, run);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,eps_bar,max_formation_err,mean_thrust,u_residual");
}
