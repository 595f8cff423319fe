#include "h2coord/local_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>

#include "h2coord/errors.hpp"

namespace h2coord {

namespace {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;

constexpr double kWeightTol = 1e-12;
constexpr double kFeedthroughTol = 1e-12;
constexpr double kConditionBound = 1e12;
constexpr double kRankTol = 1e-10;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string fmt(cplx z) {
  if (z.imag() == 0.0) return fmt(z.real());
  return fmt(z.real()) + (z.imag() < 0 ? " - " : " + ") + fmt(std::abs(z.imag())) + "i";
}

double min_singular_value(const CMat& M) {
  Eigen::JacobiSVD<CMat> svd(M);
  const auto& sv = svd.singularValues();
  return sv.size() == 0 ? 0.0 : sv(sv.size() - 1);
}

bool needs_continuous_riccati(const ConstraintClass& c) {
  return !std::holds_alternative<constraint::SampledZoh>(c);
}

void require_positive_h(double h, const char* who) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw std::invalid_argument(std::string(who) + ": h must be positive and finite");
  }
}

void require_hurwitz_assumption(const AgentModel& model) {
  const Eigen::VectorXcd ev = matfun::eigenvalues(model.A);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i).real() >= -matfun::kStabilityMargin) {
      throw AssumptionError("A1 violated: A is not Hurwitz (eigenvalue " + fmt(ev(i)) + ")");
    }
  }
}

void require_normalized_feedthrough(const AgentModel& model) {
  const Mat R = model.Dzu.transpose() * model.Dzu;
  const double dev = (R - Mat::Identity(R.rows(), R.cols())).norm();
  if (dev > kFeedthroughTol) {
    throw AssumptionError("A6 violated: ||Dzu'Dzu - I|| = " + fmt(dev) +
                          " (use normalize_feedthrough first)");
  }
}

double tr_quad(const Mat& Bw, const Mat& X) { return (Bw.transpose() * X * Bw).trace(); }

double safe_sqrt(double v) { return std::sqrt(std::max(0.0, v)); }

// Shared part of every solve: open-loop Gramian and the continuous Riccati
// solution (when D'D is invertible).
struct Base {
  OpenLoopCost open;
  matfun::RiccatiSolution ric;
  double gamma_opt;
};

Base solve_base(const AgentModel& model) {
  model.check();
  require_hurwitz_assumption(model);
  Base b{gamma0(model), matfun::care(model.A, model.Bu, model.Cz, model.Dzu), 0.0};
  b.gamma_opt = safe_sqrt(tr_quad(model.Bw, b.ric.X));
  return b;
}

}  // namespace

void AgentModel::check() const {
  const auto bad = [](const std::string& msg) { throw std::invalid_argument("AgentModel: " + msg); };
  if (A.rows() == 0 || A.rows() != A.cols()) bad("A must be square and non-empty");
  if (Bw.rows() != n() || Bw.cols() == 0) bad("Bw must have n rows and at least one column");
  if (Bu.rows() != n() || Bu.cols() == 0) bad("Bu must have n rows and at least one column");
  if (Cz.cols() != n() || Cz.rows() == 0) bad("Cz must have n columns and at least one row");
  if (Dzu.rows() != p() || Dzu.cols() != m()) bad("Dzu must be p x m");
  for (const Mat* M : {&A, &Bw, &Bu, &Cz, &Dzu}) {
    if (!M->allFinite()) bad("entries must be finite");
  }
}

std::string to_string(const ConstraintClass& c) {
  return std::visit(
      overloaded{
          [](const constraint::Unconstrained&) { return std::string("unconstrained"); },
          [](const constraint::Delay& d) { return "delay(h=" + fmt(d.h) + ")"; },
          [](const constraint::SampledZoh& d) { return "zoh(h=" + fmt(d.h) + ")"; },
          [](const constraint::SampledOptimalHold& d) { return "opthold(h=" + fmt(d.h) + ")"; },
      },
      c);
}

std::optional<double> period_of(const ConstraintClass& c) {
  return std::visit(overloaded{
                        [](const constraint::Unconstrained&) -> std::optional<double> {
                          return std::nullopt;
                        },
                        [](const auto& d) -> std::optional<double> { return d.h; },
                    },
                    c);
}

ConstraintClass with_period(const ConstraintClass& c, double h) {
  return std::visit(overloaded{
                        [](const constraint::Unconstrained& u) -> ConstraintClass { return u; },
                        [h](auto d) -> ConstraintClass {
                          d.h = h;
                          return d;
                        },
                    },
                    c);
}

Eigen::MatrixXcd PiRealization::frequency_response(double omega) const {
  const cplx s(0.0, omega);
  CMat sI_A = -A.cast<cplx>();
  sI_A.diagonal().array() += s;
  const CMat num = Bu.cast<cplx>() - expAhBu.cast<cplx>() * std::exp(-s * h);
  return sI_A.partialPivLu().solve(num);
}

std::string_view label(Assumption a) {
  switch (a) {
    case Assumption::Hurwitz: return "A1";
    case Assumption::DisturbanceSquare: return "A2";
    case Assumption::Weights: return "A3";
    case Assumption::NoImaginaryAxisZeros: return "A5";
    case Assumption::NormalizedFeedthrough: return "A6";
    case Assumption::SampledRank: return "A7";
  }
  return "?";
}

std::string_view describe(Assumption a) {
  switch (a) {
    case Assumption::Hurwitz: return "A is Hurwitz";
    case Assumption::DisturbanceSquare: return "Bw is square and nonsingular";
    case Assumption::Weights: return "mu'mu = 1 and no entry of mu is zero";
    case Assumption::NoImaginaryAxisZeros:
      return "[A - jwI, Bu; Cz, Dzu] has full column rank for all real w";
    case Assumption::NormalizedFeedthrough: return "Dzu'Dzu = I";
    case Assumption::SampledRank: return "[A, Bu; Cz, Dzu] has full column rank";
  }
  return "?";
}

const AssumptionCheck& AssumptionReport::get(Assumption a) const {
  for (const auto& c : checks) {
    if (c.id == a) return c;
  }
  throw std::out_of_range("AssumptionReport: no check for " + std::string(label(a)));
}

bool AssumptionReport::ok(bool allow_singular_Bw) const {
  return std::all_of(checks.begin(), checks.end(), [&](const AssumptionCheck& c) {
    if (!c.required || c.passed) return true;
    return allow_singular_Bw && c.id == Assumption::DisturbanceSquare;
  });
}

std::string AssumptionReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << label(c.id) << " (" << describe(c.id) << "): " << (c.passed ? "pass" : "FAIL")
       << (c.required ? "" : " [not required]");
    if (!c.diagnostic.empty()) os << " - " << c.diagnostic;
    os << '\n';
  }
  return os.str();
}

AssumptionReport validate(const AgentModel& model, const Vec& mu,
                          const ConstraintClass& constraint) {
  model.check();
  AssumptionReport report;
  const Eigen::Index n = model.n();
  const Eigen::Index m = model.m();
  const Eigen::Index p = model.p();
  const bool continuous = needs_continuous_riccati(constraint);

  {
    AssumptionCheck c{Assumption::Hurwitz, true, true, {}};
    const Eigen::VectorXcd ev = matfun::eigenvalues(model.A);
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (ev(i).real() >= -matfun::kStabilityMargin) {
        c.passed = false;
        c.diagnostic = "eigenvalue " + fmt(ev(i));
        break;
      }
    }
    report.checks.push_back(c);
  }

  {
    AssumptionCheck c{Assumption::DisturbanceSquare, true, true, {}};
    if (model.Bw.rows() != model.Bw.cols()) {
      c.passed = false;
      c.diagnostic = "Bw is " + std::to_string(model.Bw.rows()) + "x" +
                     std::to_string(model.Bw.cols());
    } else {
      Eigen::JacobiSVD<Mat> svd(model.Bw);
      const auto& sv = svd.singularValues();
      const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
      if (!(cond <= kConditionBound)) {
        c.passed = false;
        c.diagnostic = "condition number " + fmt(cond);
      }
    }
    report.checks.push_back(c);
  }

  {
    AssumptionCheck c{Assumption::Weights, true, true, {}};
    if (mu.size() == 0) {
      c.passed = false;
      c.diagnostic = "empty weight vector";
    } else {
      for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (mu(i) == 0.0 || !std::isfinite(mu(i))) {
          c.passed = false;
          c.diagnostic = "zero entry at index " + std::to_string(i + 1);
          break;
        }
      }
      const double dev = std::abs(mu.squaredNorm() - 1.0);
      if (c.passed && dev > kWeightTol) {
        c.passed = false;
        c.diagnostic = "|mu'mu - 1| = " + fmt(dev);
      }
    }
    report.checks.push_back(c);
  }

  const Mat R = model.Dzu.transpose() * model.Dzu;
  {
    AssumptionCheck c{Assumption::NoImaginaryAxisZeros, continuous, true, {}};
    Mat rosen(n + p, n + m);
    rosen << model.A, model.Bu, model.Cz, model.Dzu;
    const double scale = std::max(1.0, rosen.norm());
    if (p < m) {
      c.passed = false;
      c.diagnostic = "fewer regulated outputs than inputs";
    } else {
      Eigen::LLT<Mat> llt(R);
      const bool invertible = llt.info() == Eigen::Success &&
                              matfun::min_sym_eigenvalue(R) > 1e-12 * std::max(1.0, R.norm());
      if (invertible) {
        // Eliminating u turns the invariant zeros into the unobservable
        // eigenvalues of (A - Bu R^{-1} Dzu'Cz, (I - Dzu R^{-1} Dzu') Cz).
        const Mat At = model.A - model.Bu * llt.solve(model.Dzu.transpose() * model.Cz);
        const Mat Pc = (Mat::Identity(p, p) - model.Dzu * llt.solve(model.Dzu.transpose())) *
                       model.Cz;
        const Eigen::VectorXcd ev = matfun::eigenvalues(At);
        for (Eigen::Index i = 0; i < ev.size() && c.passed; ++i) {
          if (std::abs(ev(i).real()) > matfun::kStabilityMargin * std::max(1.0, At.norm())) {
            continue;
          }
          CMat pbh(n + p, n);
          pbh.topRows(n) = At.cast<cplx>();
          pbh.topRows(n).diagonal().array() -= ev(i);
          pbh.bottomRows(p) = Pc.cast<cplx>();
          if (min_singular_value(pbh) <= kRankTol * scale) {
            c.passed = false;
            c.diagnostic = "invariant zero at " + fmt(ev(i));
          }
        }
      } else {
        c.diagnostic = "Dzu'Dzu singular: frequency-grid check only";
      }
      // Redundant grid sweep over omega in {0} U logspace(-3, 3).
      for (int k = -1; k <= 120 && c.passed; ++k) {
        const double omega = k < 0 ? 0.0 : std::pow(10.0, -3.0 + 6.0 * k / 120.0);
        CMat M = rosen.cast<cplx>();
        M.topLeftCorner(n, n).diagonal().array() -= cplx(0.0, omega);
        if (min_singular_value(M) <= kRankTol * scale) {
          c.passed = false;
          c.diagnostic = "rank drop at omega = " + fmt(omega);
        }
      }
    }
    report.checks.push_back(c);
  }

  {
    AssumptionCheck c{Assumption::NormalizedFeedthrough, continuous, true, {}};
    const double dev = (R - Mat::Identity(m, m)).norm();
    if (dev > kFeedthroughTol) {
      c.passed = false;
      c.diagnostic = "||Dzu'Dzu - I|| = " + fmt(dev);
    }
    report.checks.push_back(c);
  }

  {
    AssumptionCheck c{Assumption::SampledRank, !continuous, true, {}};
    Mat M(n + p, n + m);
    M << model.A, model.Bu, model.Cz, model.Dzu;
    if (p < m) {
      c.passed = false;
      c.diagnostic = "fewer regulated outputs than inputs";
    } else {
      Eigen::JacobiSVD<Mat> svd(M);
      const auto& sv = svd.singularValues();
      if (sv(sv.size() - 1) <= kRankTol * std::max(1.0, sv(0))) {
        c.passed = false;
        c.diagnostic = "smallest singular value " + fmt(sv(sv.size() - 1));
      }
    }
    report.checks.push_back(c);
  }
  return report;
}

OpenLoopCost gamma0(const AgentModel& model) {
  model.check();
  require_hurwitz_assumption(model);
  Mat Xbar = matfun::lyap_continuous(model.A, model.Cz.transpose() * model.Cz);
  return {safe_sqrt(tr_quad(model.Bw, Xbar)), std::move(Xbar)};
}

LocalSolution solve_unconstrained(const AgentModel& model) {
  require_normalized_feedthrough(model);
  Base b = solve_base(model);
  LocalSolution s{constraint::Unconstrained{},
                  b.open.gamma0,
                  b.gamma_opt,
                  b.gamma_opt,
                  b.open.Xbar,
                  b.ric.X,
                  std::nullopt,
                  b.ric.F,
                  std::nullopt,
                  StaticGain{b.ric.F}};
  return s;
}

LocalSolution solve_delay(const AgentModel& model, double h) {
  require_positive_h(h, "solve_delay");
  require_normalized_feedthrough(model);
  Base b = solve_base(model);
  const Mat E = matfun::expm(model.A, h);
  const double g0sq = tr_quad(model.Bw, b.open.Xbar);
  const double gsq = g0sq - tr_quad(E * model.Bw, b.open.Xbar - b.ric.X);
  DelayDtc dtc{b.ric.F, E, PiRealization{model.A, model.Bu, E * model.Bu, h}};
  return LocalSolution{constraint::Delay{h}, b.open.gamma0, safe_sqrt(gsq), b.gamma_opt,
                       b.open.Xbar,           b.ric.X,       std::nullopt,   b.ric.F,
                       std::nullopt,          std::move(dtc)};
}

LocalSolution solve_sampled_zoh(const AgentModel& model, double h) {
  require_positive_h(h, "solve_sampled_zoh");
  Base b = solve_base(model);
  const auto disc = matfun::discretize_pair(model.A, model.Bu, h);
  const auto cost = matfun::sampled_cost_gram(model.A, model.Bu, model.Cz, model.Dzu, h);
  const auto dric = matfun::dare(disc.Ahat, disc.Bhat, cost.Qhat, cost.Shat, cost.Rhat);
  const double g0sq = tr_quad(model.Bw, b.open.Xbar);
  const Mat gram = matfun::finite_horizon_gram(model.A, b.open.Xbar - dric.X, h);
  const double gsq = g0sq - tr_quad(model.Bw, gram) / h;
  return LocalSolution{constraint::SampledZoh{h},
                       b.open.gamma0,
                       safe_sqrt(gsq),
                       b.gamma_opt,
                       b.open.Xbar,
                       b.ric.X,
                       dric.X,
                       b.ric.F,
                       dric.F,
                       SampledStatic{dric.F, h}};
}

LocalSolution solve_sampled_opthold(const AgentModel& model, double h) {
  require_positive_h(h, "solve_sampled_opthold");
  require_normalized_feedthrough(model);
  Base b = solve_base(model);
  const double g0sq = tr_quad(model.Bw, b.open.Xbar);
  const Mat gram = matfun::finite_horizon_gram(model.A, b.open.Xbar - b.ric.X, h);
  const double gsq = g0sq - tr_quad(model.Bw, gram) / h;
  const Mat Acl = model.A + model.Bu * b.ric.F;
  return LocalSolution{constraint::SampledOptimalHold{h},
                       b.open.gamma0,
                       safe_sqrt(gsq),
                       b.gamma_opt,
                       b.open.Xbar,
                       b.ric.X,
                       b.ric.X,
                       b.ric.F,
                       std::nullopt,
                       SampledWaveformHold{b.ric.F, Acl, h}};
}

LocalSolution solve(const AgentModel& model, const ConstraintClass& constraint) {
  return std::visit(
      overloaded{
          [&](const constraint::Unconstrained&) { return solve_unconstrained(model); },
          [&](const constraint::Delay& d) { return solve_delay(model, d.h); },
          [&](const constraint::SampledZoh& d) { return solve_sampled_zoh(model, d.h); },
          [&](const constraint::SampledOptimalHold& d) {
            return solve_sampled_opthold(model, d.h);
          },
      },
      constraint);
}

NormalizedModel normalize_feedthrough(const AgentModel& model) {
  model.check();
  const Mat R = model.Dzu.transpose() * model.Dzu;
  Eigen::SelfAdjointEigenSolver<Mat> es(R);
  const Vec& lam = es.eigenvalues();
  if (lam.minCoeff() <= 1e-12 * std::max(1.0, lam.maxCoeff())) {
    throw AssumptionError("normalize_feedthrough: Dzu'Dzu is singular");
  }
  const Mat T = es.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal() *
                es.eigenvectors().transpose();
  AgentModel out = model;
  out.Bu = model.Bu * T;
  out.Dzu = model.Dzu * T;
  return {std::move(out), T};
}

Vec predictor(const AgentModel& model, const Vec& x_delayed, const std::vector<Vec>& inputs,
              double h) {
  model.check();
  if (x_delayed.size() != model.n()) throw std::invalid_argument("predictor: state size != n");
  if (h < 0.0) throw std::invalid_argument("predictor: h must be nonnegative");
  if (h == 0.0) return x_delayed;
  if (inputs.size() < 2) {
    throw std::invalid_argument("predictor: input history must cover [t-h, t] with >= 2 samples");
  }
  for (const auto& u : inputs) {
    if (u.size() != model.m()) throw std::invalid_argument("predictor: input size != m");
  }
  const int N = static_cast<int>(inputs.size()) - 1;
  const double dt = h / N;
  // inputs[k] is u(t - h + k dt); its weight is e^{A (h - k dt)} Bu.
  const Mat step = matfun::expm(model.A, dt);
  std::vector<Vec> terms(inputs.size());
  Mat kernel = model.Bu;  // e^{A (N - k) dt} Bu, walking k downward
  for (int k = N; k >= 0; --k) {
    terms[k] = kernel * inputs[k];
    kernel = step * kernel;
  }
  Vec integral = Vec::Zero(model.n());
  if (N == 1) {
    integral = 0.5 * dt * (terms[0] + terms[1]);
  } else {
    const int simpson_end = (N % 2 == 0) ? N : N - 3;
    for (int k = 0; k + 2 <= simpson_end; k += 2) {
      integral += dt / 3.0 * (terms[k] + 4.0 * terms[k + 1] + terms[k + 2]);
    }
    if (simpson_end != N) {
      const int k = simpson_end;
      integral += 3.0 * dt / 8.0 *
                  (terms[k] + 3.0 * terms[k + 1] + 3.0 * terms[k + 2] + terms[k + 3]);
    }
  }
  return matfun::expm(model.A, h) * x_delayed + integral;
}

}  // namespace h2coord
