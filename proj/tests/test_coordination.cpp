#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <random>

#include "golden_values.hpp"
#include "h2coord/coordination.hpp"
#include "h2coord/errors.hpp"
#include "random_models.hpp"

using namespace h2coord;
using testing_support::scalar_s1;
using testing_support::uniform_weights;

TEST(NormalizeWeights, UnitNormAndZeroDiagnostic) {
  Vec raw(3);
  raw << 1, 2, 2;
  EXPECT_NEAR(normalize_weights(raw).norm(), 1.0, 1e-15);
  raw << 1, 0, 2;
  try {
    normalize_weights(raw);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos);
  }
}

TEST(MakeProblem, RejectsBadInputs) {
  EXPECT_THROW(make_problem(scalar_s1(), Vec::Ones(1), constraint::Unconstrained{}),
               std::invalid_argument);
  EXPECT_THROW(make_problem(scalar_s1(), Vec::Ones(2), constraint::Unconstrained{}),
               std::invalid_argument);
  EXPECT_THROW(make_problem(scalar_s1(), uniform_weights(2), constraint::Delay{0.0}),
               std::invalid_argument);
  EXPECT_NO_THROW(make_problem(scalar_s1(), uniform_weights(2), constraint::Delay{0.2}));
}

TEST(Synthesize, FailsWithAssumptionReport) {
  auto m = scalar_s1();
  m.A(0, 0) = 1.0;
  const auto p = make_problem(m, uniform_weights(2), constraint::Unconstrained{});
  try {
    synthesize(p);
    FAIL() << "expected AssumptionError";
  } catch (const AssumptionError& e) {
    EXPECT_NE(std::string(e.what()).find("A1"), std::string::npos);
  }
}

TEST(Synthesize, CoefficientsAreRowsOfProjector) {
  std::mt19937_64 rng(2);
  const Vec mu = testing_support::random_weights(rng, 4);
  const auto p = make_problem(scalar_s1(), mu, constraint::Unconstrained{});
  const auto K = synthesize(p);
  Mat P(4, 4);
  for (int i = 0; i < 4; ++i) P.row(i) = K.coefficients(i);
  EXPECT_LT((P - (Mat::Identity(4, 4) - mu * mu.transpose())).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((P * mu).norm(), 1e-15);
  EXPECT_THROW(K.coefficients(4), std::out_of_range);
}

TEST(Costs, ScalarUniformThreeAgents) {
  const auto p = make_problem(scalar_s1(), uniform_weights(3), constraint::Unconstrained{});
  const auto local = solve(p.model, p.constraint);
  EXPECT_NEAR(total_cost(p, local), 2.0 * golden::kGammaOptSq + 0.5, 1e-13);
  EXPECT_NEAR(total_cost(p, local), 1.3284271247461903, 1e-13);
  EXPECT_NEAR(pairwise_cost(p, local, 0, 0), 0.42374538877608458, 1e-13);
  EXPECT_NEAR(pairwise_cost(p, local, 0, 1), 0.009531826402989428, 1e-13);
}

TEST(Costs, TwoAgentsWeightIndependentTotal) {
  Vec mu(2);
  mu << 0.6, 0.8;
  const auto p = make_problem(scalar_s1(), mu, constraint::Unconstrained{});
  const auto local = solve(p.model, p.constraint);
  EXPECT_NEAR(total_cost(p, local), golden::kGammaOptSq + 0.5, 1e-13);
}

TEST(Costs, MismatchedClassOrIndexThrows) {
  const auto p = make_problem(scalar_s1(), uniform_weights(3), constraint::Delay{0.5});
  const auto wrong = solve(p.model, constraint::Delay{0.4});
  EXPECT_THROW(total_cost(p, wrong), std::invalid_argument);
  const auto local = solve(p.model, p.constraint);
  EXPECT_THROW(agent_cost(p, local, 3), std::out_of_range);
  EXPECT_THROW(pairwise_cost(p, local, -1, 0), std::out_of_range);
}

TEST(CostProperty, IdentitiesOnRandomProblems) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> hdist(0.05, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int nu = 2 + trial % 5;
    const auto m = testing_support::random_model(rng, 1 + trial % 3, 1);
    const Vec mu = testing_support::random_weights(rng, nu);
    const ConstraintClass classes[] = {constraint::Unconstrained{}, constraint::Delay{hdist(rng)},
                                       constraint::SampledZoh{hdist(rng)},
                                       constraint::SampledOptimalHold{hdist(rng)}};
    const auto p = make_problem(m, mu, classes[trial % 4]);
    const auto local = solve(p.model, p.constraint);
    const auto r = cost_report(p, local);
    const double scale = r.gamma0_sq;
    // Rows of the pairwise matrix add to the agent costs, which add to the total.
    EXPECT_LT((r.pairwise_sq.rowwise().sum() - r.per_agent_sq).cwiseAbs().maxCoeff(), 1e-12 * scale);
    EXPECT_NEAR(r.per_agent_sq.sum(), r.total_sq, 1e-12 * scale * nu);
    // Agent cost = open-loop cost minus the benefit of cooperation.
    EXPECT_LT((r.per_agent_sq + r.benefit_of_cooperation - Vec::Constant(nu, r.gamma0_sq))
                  .cwiseAbs().maxCoeff(), 1e-12 * scale);
    for (int i = 0; i < nu; ++i) {
      EXPECT_GE(r.benefit_of_cooperation(i), -1e-12 * scale);
      EXPECT_GE(r.cost_of_coordination(i), -1e-12 * scale);
      EXPECT_LE(r.per_agent_sq(i), r.gamma0_sq + 1e-12 * scale);
      // Cost of coordination = agent cost - gamma_opt^2.
      EXPECT_NEAR(r.cost_of_coordination(i), r.per_agent_sq(i) - r.gammaOpt_sq, 1e-12 * scale);
    }
    EXPECT_TRUE(r.pairwise_sq.isApprox(r.pairwise_sq.transpose(), 1e-14));
  }
}

TEST(CostProperty, TotalInvariantUnderWeightPermutation) {
  std::mt19937_64 rng(12);
  const auto m = testing_support::random_model(rng, 2, 1);
  Vec mu = testing_support::random_weights(rng, 5);
  const auto p1 = make_problem(m, mu, constraint::Delay{0.3});
  std::reverse(mu.data(), mu.data() + mu.size());
  const auto p2 = make_problem(m, mu, constraint::Delay{0.3});
  const auto local = solve(m, constraint::Delay{0.3});
  EXPECT_NEAR(total_cost(p1, local), total_cost(p2, local), 1e-14);
  EXPECT_NEAR(agent_cost(p1, local, 0), agent_cost(p2, local, 4), 1e-14);
}
