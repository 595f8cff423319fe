#include "h2coord/coordination.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "h2coord/errors.hpp"

namespace h2coord {

namespace {

constexpr double kWeightTol = 1e-12;

void require_matching(const CoordinationProblem& problem, const LocalSolution& local) {
  if (!(problem.constraint == local.constraint)) {
    throw std::invalid_argument("local solution is for " + to_string(local.constraint) +
                                " but the problem uses " + to_string(problem.constraint));
  }
  if (problem.nu < 2 || problem.mu.size() != problem.nu) {
    throw std::invalid_argument("coordination requires nu >= 2 agents with one weight each");
  }
}

void require_index(const CoordinationProblem& problem, int i) {
  if (i < 0 || i >= problem.nu) {
    throw std::out_of_range("agent index " + std::to_string(i) + " outside [0, " +
                            std::to_string(problem.nu) + ")");
  }
}

double sq(double v) { return v * v; }

}  // namespace

Vec normalize_weights(const Vec& raw) {
  if (raw.size() == 0) throw std::invalid_argument("normalize_weights: empty weight vector");
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw(i))) {
      throw std::invalid_argument("normalize_weights: non-finite weight at index " +
                                  std::to_string(i + 1));
    }
    if (raw(i) == 0.0) {
      throw std::invalid_argument("normalize_weights: zero weight at index " +
                                  std::to_string(i + 1) +
                                  "; exclude that agent from the coordination problem");
    }
  }
  return raw / raw.norm();
}

CoordinationProblem make_problem(AgentModel model, Vec mu, ConstraintClass constraint) {
  model.check();
  if (mu.size() < 2) {
    throw std::invalid_argument("coordination requires nu >= 2 agents, got " +
                                std::to_string(mu.size()));
  }
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (mu(i) == 0.0 || !std::isfinite(mu(i))) {
      throw std::invalid_argument("weight at index " + std::to_string(i + 1) +
                                  " is zero or non-finite");
    }
  }
  if (std::abs(mu.squaredNorm() - 1.0) > kWeightTol) {
    throw std::invalid_argument("weights must satisfy mu'mu = 1 (use normalize_weights)");
  }
  if (const auto h = period_of(constraint); h && !(*h > 0.0)) {
    throw std::invalid_argument("constraint period must be positive");
  }
  const int nu = static_cast<int>(mu.size());
  return {std::move(model), nu, std::move(mu), std::move(constraint)};
}

Eigen::RowVectorXd AggregateController::coefficients(int i) const {
  if (i < 0 || i >= nu()) throw std::out_of_range("AggregateController: agent index");
  Eigen::RowVectorXd row = -mu(i) * mu.transpose();
  row(i) += 1.0;
  return row;
}

AggregateController synthesize(const CoordinationProblem& problem, SynthesisOptions options) {
  const AssumptionReport report = validate(problem.model, problem.mu, problem.constraint);
  if (!report.ok(options.allow_singular_Bw)) {
    throw AssumptionError("synthesis assumptions violated:\n" + report.summary());
  }
  return synthesize(problem, solve(problem.model, problem.constraint));
}

AggregateController synthesize(const CoordinationProblem& problem, const LocalSolution& local) {
  require_matching(problem, local);
  return {local.controller, problem.mu};
}

double total_cost(const CoordinationProblem& problem, const LocalSolution& local) {
  require_matching(problem, local);
  return (problem.nu - 1) * sq(local.gammaAlpha) + sq(local.gamma0);
}

double pairwise_cost(const CoordinationProblem& problem, const LocalSolution& local, int i, int j) {
  require_matching(problem, local);
  require_index(problem, i);
  require_index(problem, j);
  const double diag = i == j ? sq(local.gammaAlpha) : 0.0;
  return diag + sq(problem.mu(i)) * sq(problem.mu(j)) *
                    (sq(local.gamma0) - sq(local.gammaAlpha));
}

double agent_cost(const CoordinationProblem& problem, const LocalSolution& local, int i) {
  require_matching(problem, local);
  require_index(problem, i);
  const double w = sq(problem.mu(i));
  return w * sq(local.gamma0) + (1.0 - w) * sq(local.gammaAlpha);
}

double benefit_of_cooperation(const CoordinationProblem& problem, const LocalSolution& local,
                              int i) {
  require_matching(problem, local);
  require_index(problem, i);
  return (1.0 - sq(problem.mu(i))) * (sq(local.gamma0) - sq(local.gammaAlpha));
}

double cost_of_coordination(const CoordinationProblem& problem, const LocalSolution& local,
                            int i) {
  require_matching(problem, local);
  require_index(problem, i);
  const double w = sq(problem.mu(i));
  const double opt = sq(local.gammaOpt);
  return w * (sq(local.gamma0) - opt) + (1.0 - w) * (sq(local.gammaAlpha) - opt);
}

CostReport cost_report(const CoordinationProblem& problem, const LocalSolution& local) {
  require_matching(problem, local);
  const int nu = problem.nu;
  CostReport r;
  r.total_sq = total_cost(problem, local);
  r.per_agent_sq.resize(nu);
  r.pairwise_sq.resize(nu, nu);
  r.benefit_of_cooperation.resize(nu);
  r.cost_of_coordination.resize(nu);
  for (int i = 0; i < nu; ++i) {
    r.per_agent_sq(i) = agent_cost(problem, local, i);
    r.benefit_of_cooperation(i) = benefit_of_cooperation(problem, local, i);
    r.cost_of_coordination(i) = cost_of_coordination(problem, local, i);
    for (int j = 0; j < nu; ++j) r.pairwise_sq(i, j) = pairwise_cost(problem, local, i, j);
  }
  r.gamma0_sq = sq(local.gamma0);
  r.gammaAlpha_sq = sq(local.gammaAlpha);
  r.gammaOpt_sq = sq(local.gammaOpt);
  return r;
}

}  // namespace h2coord
