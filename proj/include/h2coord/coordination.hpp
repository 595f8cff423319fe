#pragma once

// Multi-agent layer: the diagonal-plus-rank-one controller
//   K_opt = (I - mu mu') (x) K_alpha
// assembled from one local solution, and the closed-form cost calculus
// (total, per-agent, pairwise, benefit of cooperation, cost of coordination).

#include <Eigen/Dense>

#include "h2coord/local_synthesis.hpp"

namespace h2coord {

struct CoordinationProblem {
  AgentModel model;
  int nu = 0;
  Vec mu;
  ConstraintClass constraint;
};

/// mu = raw / ||raw||. Throws std::invalid_argument naming the first zero
/// entry (1-based); such an agent does not take part in the coordination.
Vec normalize_weights(const Vec& raw);

/// Builds and checks a problem: nu = mu.size() >= 2, |mu'mu - 1| <= 1e-12,
/// no zero weights, consistent model dimensions.
CoordinationProblem make_problem(AgentModel model, Vec mu, ConstraintClass constraint);

/// Factored controller: the local controller plus the weights. Agent i
/// applies the local controller to x_i - mu_i xbar, xbar = sum_j mu_j x_j.
/// The nu*m x nu*n operator is never formed here.
struct AggregateController {
  LocalController local;
  Vec mu;

  int nu() const { return static_cast<int>(mu.size()); }
  /// Row i of I - mu mu': u_i = K_alpha (sum_j coefficient(i)_j x_j).
  Eigen::RowVectorXd coefficients(int i) const;
};

struct SynthesisOptions {
  bool allow_singular_Bw = false;
};

/// Validates the problem, solves the local problem and assembles the
/// controller. Throws AssumptionError listing every failed assumption.
AggregateController synthesize(const CoordinationProblem& problem, SynthesisOptions options = {});
/// Assembles the controller from an existing local solution.
AggregateController synthesize(const CoordinationProblem& problem, const LocalSolution& local);

/// (nu - 1) gamma_alpha^2 + gamma_0^2.
double total_cost(const CoordinationProblem& problem, const LocalSolution& local);
/// ||T_{z_i w_j}||^2 = gamma_alpha^2 delta_ij + mu_i^2 mu_j^2 (gamma_0^2 - gamma_alpha^2).
/// Indices are 0-based.
double pairwise_cost(const CoordinationProblem& problem, const LocalSolution& local, int i, int j);
/// mu_i^2 gamma_0^2 + (1 - mu_i^2) gamma_alpha^2.
double agent_cost(const CoordinationProblem& problem, const LocalSolution& local, int i);
/// (1 - mu_i^2)(gamma_0^2 - gamma_alpha^2).
double benefit_of_cooperation(const CoordinationProblem& problem, const LocalSolution& local,
                              int i);
/// mu_i^2 (gamma_0^2 - gamma_opt^2) + (1 - mu_i^2)(gamma_alpha^2 - gamma_opt^2).
double cost_of_coordination(const CoordinationProblem& problem, const LocalSolution& local,
                            int i);

struct CostReport {
  double total_sq = 0.0;
  Vec per_agent_sq;
  Mat pairwise_sq;
  Vec benefit_of_cooperation;
  Vec cost_of_coordination;
  double gamma0_sq = 0.0;
  double gammaAlpha_sq = 0.0;
  double gammaOpt_sq = 0.0;
};

CostReport cost_report(const CoordinationProblem& problem, const LocalSolution& local);

}  // namespace h2coord
