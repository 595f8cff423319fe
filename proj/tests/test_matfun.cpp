#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "golden_values.hpp"
#include "h2coord/errors.hpp"
#include "h2coord/matfun.hpp"
#include "random_models.hpp"

using namespace h2coord;
using namespace h2coord::matfun;

namespace {

double max_abs(const Mat& M) { return M.cwiseAbs().maxCoeff(); }

Mat care_residual(const Mat& A, const Mat& Bu, const Mat& Cz, const Mat& D, const Mat& X) {
  const Mat R = D.transpose() * D;
  const Mat L = X * Bu + Cz.transpose() * D;
  return A.transpose() * X + X * A + Cz.transpose() * Cz - L * R.inverse() * L.transpose();
}

Mat dare_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& S, const Mat& R, const Mat& X) {
  const Mat L = A.transpose() * X * B + S;
  return A.transpose() * X * A - X + Q - L * (B.transpose() * X * B + R).inverse() * L.transpose();
}

}  // namespace

TEST(Expm, ScalarAndNilpotent) {
  EXPECT_NEAR(expm(Mat::Constant(1, 1, -1.0), 0.5)(0, 0), std::exp(-0.5), 1e-15);
  Mat N(2, 2);
  N << 0, 1, 0, 0;
  Mat expected(2, 2);
  expected << 1, 3, 0, 1;
  EXPECT_LT(max_abs(expm(N, 3.0) - expected), 1e-14);
}

TEST(Expm, SemigroupProperty) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat A = testing_support::random_model(rng, 4, 1).A;
    EXPECT_LT(max_abs(expm(A, 0.7) * expm(A, 0.3) - expm(A, 1.0)), 1e-12);
  }
}

TEST(DiscretizePair, ScalarClosedForm) {
  const auto d = discretize_pair(Mat::Constant(1, 1, -1.0), Mat::Ones(1, 1), 0.5);
  EXPECT_NEAR(d.Ahat(0, 0), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(d.Bhat(0, 0), 1.0 - std::exp(-0.5), 1e-15);
}

TEST(DiscretizePair, RejectsNonPositivePeriod) {
  EXPECT_THROW(discretize_pair(Mat::Constant(1, 1, -1.0), Mat::Ones(1, 1), 0.0),
               std::invalid_argument);
}

TEST(SampledCostGram, ScalarGoldens) {
  const auto s1 = testing_support::scalar_s1();
  const auto g = sampled_cost_gram(s1.A, s1.Bu, s1.Cz, s1.Dzu, 0.5);
  EXPECT_NEAR(g.Qhat(0, 0), golden::kQhat, 1e-14);
  EXPECT_NEAR(g.Shat(0, 0), golden::kShat, 1e-14);
  EXPECT_NEAR(g.Rhat(0, 0), golden::kRhat, 1e-14);
}

TEST(FiniteHorizonGram, MatchesSimpsonQuadrature) {
  std::mt19937_64 rng(11);
  const auto md = testing_support::random_model(rng, 3, 1);
  const Mat M = md.Cz.transpose() * md.Cz;
  const double h = 0.8;
  const int N = 400;
  Mat acc = Mat::Zero(3, 3);
  for (int k = 0; k <= N; ++k) {
    const double w = (k == 0 || k == N) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    const Mat E = expm(md.A, k * h / N);
    acc += w * E.transpose() * M * E;
  }
  acc *= h / (3.0 * N);
  EXPECT_LT(max_abs(finite_horizon_gram(md.A, M, h) - acc), 1e-9 * max_abs(acc));
}

TEST(Lyapunov, ResidualOnRandomStableMatrices) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto md = testing_support::random_model(rng, 1 + trial % 6, 1);
    const Mat Q = md.Cz.transpose() * md.Cz;
    const Mat X = lyap_continuous(md.A, Q);
    const Mat res = md.A.transpose() * X + X * md.A + Q;
    EXPECT_LT(max_abs(res), 1e-10 * (1.0 + max_abs(X)));
    EXPECT_LT(max_abs(X - X.transpose()), 1e-12 * (1.0 + max_abs(X)));
  }
}

TEST(Lyapunov, RejectsUnstable) {
  EXPECT_THROW(lyap_continuous(Mat::Constant(1, 1, 0.5), Mat::Ones(1, 1)), SolverError);
}

TEST(Care, ScalarClosedForm) {
  const auto s1 = testing_support::scalar_s1();
  const auto sol = care(s1.A, s1.Bu, s1.Cz, s1.Dzu);
  EXPECT_NEAR(sol.X(0, 0), std::sqrt(2.0) - 1.0, 1e-14);
  EXPECT_NEAR(sol.F(0, 0), 1.0 - std::sqrt(2.0), 1e-14);
}

TEST(Care, RandomResidualStabilityAndBounds) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto md = testing_support::random_model(rng, 1 + trial % 5, 1 + trial % 2);
    const auto sol = care(md.A, md.Bu, md.Cz, md.Dzu);
    EXPECT_LT(max_abs(care_residual(md.A, md.Bu, md.Cz, md.Dzu, sol.X)), 1e-9 * (1.0 + max_abs(sol.X)));
    EXPECT_LT(spectral_abscissa(md.A + md.Bu * sol.F), 0.0);
    const Mat Xbar = lyap_continuous(md.A, md.Cz.transpose() * md.Cz);
    EXPECT_GE(min_sym_eigenvalue(sol.X), -1e-10);
    EXPECT_GE(min_sym_eigenvalue(Xbar - sol.X), -1e-10);
  }
}

TEST(Care, UnstablePlantIsStabilized) {
  Mat A(2, 2), Bu(2, 1), Cz(3, 2), D(3, 1);
  A << 0.5, 1, 0, 0.2;
  Bu << 0, 1;
  Cz << 1, 0, 0, 1, 0, 0;
  D << 0, 0, 1;
  const auto sol = care(A, Bu, Cz, D);
  EXPECT_LT(spectral_abscissa(A + Bu * sol.F), 0.0);
  EXPECT_LT(max_abs(care_residual(A, Bu, Cz, D, sol.X)), 1e-9 * (1.0 + max_abs(sol.X)));
}

TEST(Dare, ScalarGolden) {
  const auto s1 = testing_support::scalar_s1();
  const auto d = discretize_pair(s1.A, s1.Bu, 0.5);
  const auto g = sampled_cost_gram(s1.A, s1.Bu, s1.Cz, s1.Dzu, 0.5);
  const auto sol = dare(d.Ahat, d.Bhat, g.Qhat, g.Shat, g.Rhat);
  EXPECT_NEAR(sol.X(0, 0), golden::kZohXhat, 1e-13);
  EXPECT_NEAR(sol.F(0, 0), golden::kZohFhat, 1e-13);
}

TEST(Dare, RandomResidualAndStability) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto md = testing_support::random_model(rng, 1 + trial % 4, 1 + trial % 2);
    const double h = 0.05 + 0.1 * trial;
    const auto d = discretize_pair(md.A, md.Bu, h);
    const auto g = sampled_cost_gram(md.A, md.Bu, md.Cz, md.Dzu, h);
    const auto sol = dare(d.Ahat, d.Bhat, g.Qhat, g.Shat, g.Rhat);
    EXPECT_LT(max_abs(dare_residual(d.Ahat, d.Bhat, g.Qhat, g.Shat, g.Rhat, sol.X)),
              1e-9 * (1.0 + max_abs(sol.X)));
    EXPECT_LT(spectral_radius(d.Ahat + d.Bhat * sol.F), 1.0);
  }
}

TEST(H2NormExact, ScalarOpenLoop) {
  const auto s1 = testing_support::scalar_s1();
  const LtiSystem sys{s1.A, s1.Bw, s1.Cz, Mat::Zero(2, 1)};
  EXPECT_NEAR(h2_norm_exact(sys), std::sqrt(0.5), 1e-15);
}

TEST(H2NormExact, RejectsFeedthroughAndInstability) {
  const auto s1 = testing_support::scalar_s1();
  EXPECT_THROW(h2_norm_exact({s1.A, s1.Bw, s1.Cz, Mat::Ones(2, 1)}), std::invalid_argument);
  EXPECT_THROW(h2_norm_exact({Mat::Ones(1, 1), s1.Bw, s1.Cz, Mat::Zero(2, 1)}), SolverError);
}
