#include "h2coord/oracle.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "h2coord/errors.hpp"
#include "h2coord/matfun.hpp"
#include <unsupported/Eigen/KroneckerProduct>

namespace h2coord::oracle {

namespace {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;

void require_expandable(const CoordinationProblem& problem) {
  if (!std::holds_alternative<constraint::Unconstrained>(problem.constraint)) {
    throw std::invalid_argument("brute-force expansion needs the delay-free class");
  }
  if (problem.nu > kMaxExpandedAgents) {
    throw std::invalid_argument("brute-force expansion limited to nu <= " +
                                std::to_string(kMaxExpandedAgents));
  }
}

// Dense Kronecker form of X -> A'X + XA, factored once.
class KroneckerLyapunov {
 public:
  explicit KroneckerLyapunov(const Mat& A) : N_(A.rows()) {
    const Mat I = Mat::Identity(N_, N_);
    Mat M = Mat::Zero(N_ * N_, N_ * N_);
    for (Eigen::Index a = 0; a < N_; ++a) {
      for (Eigen::Index b = 0; b < N_; ++b) {
        // block (a, b) of I (x) A' + A' (x) I
        M.block(a * N_, b * N_, N_, N_) = (a == b ? Mat(A.transpose()) : Mat::Zero(N_, N_)) +
                                          A(b, a) * I;
      }
    }
    lu_.compute(M);
  }

  Mat solve(const Mat& Q) const {
    const Vec q = Eigen::Map<const Vec>(Q.data(), Q.size());
    const Vec x = lu_.solve(-q);
    Mat X = Eigen::Map<const Mat>(x.data(), N_, N_);
    return 0.5 * (X + X.transpose());
  }

 private:
  Eigen::Index N_;
  Eigen::PartialPivLU<Mat> lu_;
};

void require_hurwitz(const Mat& A) {
  const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(A, false).eigenvalues();
  if (ev.real().maxCoeff() >= 0.0) throw SolverError("expanded closed loop is not stable");
}

Mat local_gain(const CoordinationProblem& problem) {
  const LocalSolution local = solve_unconstrained(problem.model);
  return std::get<StaticGain>(local.controller).F;
}

double max_abs(const Mat& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

Mat expanded_gain(const Vec& mu, const Mat& F) {
  const Eigen::Index nu = mu.size();
  const Mat P = Mat::Identity(nu, nu) - mu * mu.transpose();
  Mat K(nu * F.rows(), nu * F.cols());
  for (Eigen::Index i = 0; i < nu; ++i) {
    for (Eigen::Index j = 0; j < nu; ++j) {
      K.block(i * F.rows(), j * F.cols(), F.rows(), F.cols()) = P(i, j) * F;
    }
  }
  return K;
}

ExpandedLoop expand(const CoordinationProblem& problem, const Mat& K) {
  require_expandable(problem);
  const auto& md = problem.model;
  const Eigen::Index nu = problem.nu, n = md.n(), m = md.m(), r = md.r(), p = md.p();
  if (K.rows() != nu * m || K.cols() != nu * n) {
    throw std::invalid_argument("expanded gain must be nu m x nu n");
  }
  ExpandedLoop loop;
  Mat Ad = Mat::Zero(nu * n, nu * n), Bud = Mat::Zero(nu * n, nu * m);
  Mat Czd = Mat::Zero(nu * p, nu * n), Dd = Mat::Zero(nu * p, nu * m);
  loop.B = Mat::Zero(nu * n, nu * r);
  for (Eigen::Index i = 0; i < nu; ++i) {
    Ad.block(i * n, i * n, n, n) = md.A;
    Bud.block(i * n, i * m, n, m) = md.Bu;
    loop.B.block(i * n, i * r, n, r) = md.Bw;
    Czd.block(i * p, i * n, p, n) = md.Cz;
    Dd.block(i * p, i * m, p, m) = md.Dzu;
  }
  loop.A = Ad + Bud * K;
  loop.C = Czd + Dd * K;
  return loop;
}

ExpandedLoop expand(const CoordinationProblem& problem) {
  require_expandable(problem);
  return expand(problem, expanded_gain(problem.mu, local_gain(problem)));
}

double brute_force_total_h2(const CoordinationProblem& problem, const Mat& K) {
  const ExpandedLoop loop = expand(problem, K);
  require_hurwitz(loop.A);
  const Mat X = KroneckerLyapunov(loop.A).solve(loop.C.transpose() * loop.C);
  return std::sqrt(std::max(0.0, (loop.B.transpose() * X * loop.B).trace()));
}

double brute_force_total_h2(const CoordinationProblem& problem) {
  require_expandable(problem);
  return brute_force_total_h2(problem, expanded_gain(problem.mu, local_gain(problem)));
}

Mat brute_force_pairwise_matrix(const CoordinationProblem& problem) {
  const ExpandedLoop loop = expand(problem);
  require_hurwitz(loop.A);
  const auto& md = problem.model;
  const Eigen::Index r = md.r(), p = md.p();
  const int nu = problem.nu;
  const KroneckerLyapunov lyap(loop.A);
  Mat H(nu, nu);
  for (int i = 0; i < nu; ++i) {
    const Mat Ci = loop.C.middleRows(i * p, p);
    const Mat Xi = lyap.solve(Ci.transpose() * Ci);
    for (int j = 0; j < nu; ++j) {
      const Mat Bj = loop.B.middleCols(j * r, r);
      H(i, j) = (Bj.transpose() * Xi * Bj).trace();
    }
  }
  return H;
}

double brute_force_pairwise_h2(const CoordinationProblem& problem, int i, int j) {
  if (i < 0 || i >= problem.nu || j < 0 || j >= problem.nu) {
    throw std::out_of_range("pairwise index outside [0, nu)");
  }
  const ExpandedLoop loop = expand(problem);
  require_hurwitz(loop.A);
  const Eigen::Index r = problem.model.r(), p = problem.model.p();
  const Mat Ci = loop.C.middleRows(i * p, p);
  const Mat Bj = loop.B.middleCols(j * r, r);
  const Mat Xi = KroneckerLyapunov(loop.A).solve(Ci.transpose() * Ci);
  return std::sqrt(std::max(0.0, (Bj.transpose() * Xi * Bj).trace()));
}

Mat householder_u(const Vec& mu) {
  const Eigen::Index nu = mu.size();
  if (nu == 0 || std::abs(mu.norm() - 1.0) > 1e-12) {
    throw std::invalid_argument("householder_u needs a unit vector");
  }
  const double sgn = mu(0) >= 0.0 ? 1.0 : -1.0;
  Vec v = mu;
  v(0) += sgn;
  // I - 2 v v' / v'v maps mu to -sgn e_1.
  const Mat H = Mat::Identity(nu, nu) - 2.0 * v * v.transpose() / v.squaredNorm();
  return -sgn * H;
}

DecouplingReport decoupling_check(const CoordinationProblem& problem, const Mat& K, const Mat& F) {
  require_expandable(problem);
  const Eigen::Index nu = problem.nu, m = F.rows(), n = F.cols();
  if (K.rows() != nu * m || K.cols() != nu * n) {
    throw std::invalid_argument("expanded gain must be nu m x nu n");
  }
  const Mat U = householder_u(problem.mu);
  DecouplingReport rep;
  rep.orthogonality_error = max_abs(U.transpose() * U - Mat::Identity(nu, nu));
  Vec e1 = Vec::Zero(nu);
  e1(0) = 1.0;
  rep.alignment_error = max_abs(U * problem.mu - e1);

  const Mat Um = Eigen::kroneckerProduct(U, Mat::Identity(m, m));
  const Mat Un = Eigen::kroneckerProduct(U, Mat::Identity(n, n));
  const Mat Kt = Um * K * Un.transpose();
  Mat target = Mat::Zero(nu * m, nu * n);
  for (Eigen::Index i = 1; i < nu; ++i) target.block(i * m, i * n, m, n) = F;
  rep.structure_error = max_abs(Kt - target);
  rep.first_row_norm = max_abs(Kt.topRows(m));
  const double scale = std::max(1.0, max_abs(F));
  rep.passed = rep.orthogonality_error <= 1e-13 && rep.alignment_error <= 1e-13 &&
               rep.structure_error <= kDecouplingTol * scale &&
               rep.first_row_norm <= kDecouplingTol * scale;
  return rep;
}

DecouplingReport decoupling_check(const CoordinationProblem& problem) {
  require_expandable(problem);
  const Mat F = local_gain(problem);
  return decoupling_check(problem, expanded_gain(problem.mu, F), F);
}

Eigen::MatrixXcd pi_quadrature(const PiRealization& pi, double omega) {
  using GL = boost::math::quadrature::gauss<double, 20>;
  const auto& x = GL::abscissa();
  const auto& w = GL::weights();
  const double h = pi.h;
  const double anorm = pi.A.cwiseAbs().rowwise().sum().maxCoeff();
  const int panels = std::max(1, static_cast<int>(std::ceil((std::abs(omega) + anorm) * h / 2.0)));
  const double len = h / panels;
  CMat acc = CMat::Zero(pi.A.rows(), pi.A.cols());
  const auto add = [&](double t, double weight) {
    const CMat e = matfun::expm(pi.A, t).cast<cplx>();
    acc += weight * std::exp(cplx(0.0, -omega * t)) * e;
  };
  for (int k = 0; k < panels; ++k) {
    const double mid = (k + 0.5) * len, half = 0.5 * len;
    for (std::size_t q = 0; q < x.size(); ++q) {
      if (x[q] == 0.0) {
        add(mid, w[q] * half);
      } else {
        add(mid - half * x[q], w[q] * half);
        add(mid + half * x[q], w[q] * half);
      }
    }
  }
  return acc * pi.Bu.cast<cplx>();
}

FreqDomainH2 freq_domain_h2_delay(const CoordinationProblem& problem, const LocalSolution& local,
                                  double omega_max, int panels) {
  const auto* d = std::get_if<constraint::Delay>(&problem.constraint);
  const auto* dtc = std::get_if<DelayDtc>(&local.controller);
  if (!d || !dtc || !(problem.constraint == local.constraint)) {
    throw std::invalid_argument("freq_domain_h2_delay needs a delay-class problem and solution");
  }
  if (!(omega_max > 1e-2) || panels < 14) {
    throw std::invalid_argument("freq_domain_h2_delay: omega_max > 0.01 and panels >= 14 required");
  }
  const auto& md = problem.model;
  const Eigen::Index n = md.n(), m = md.m();
  const double h = d->h;
  const CMat A = md.A.cast<cplx>(), Bw = md.Bw.cast<cplx>(), Bu = md.Bu.cast<cplx>();
  const CMat Cz = md.Cz.cast<cplx>(), Dzu = md.Dzu.cast<cplx>();
  const CMat FE = (dtc->F * dtc->expAh).cast<cplx>();
  const CMat F = dtc->F.cast<cplx>();
  const CMat In = CMat::Identity(n, n), Im = CMat::Identity(m, m);

  const auto integrand = [&](double omega) {
    const cplx s(0.0, omega);
    const Eigen::PartialPivLU<CMat> res(s * In - A);
    const CMat G21 = res.solve(Bw);
    const CMat G22 = res.solve(Bu);
    const CMat G11 = Cz * G21;
    const CMat G12 = Cz * G22 + Dzu;
    const CMat Pi = dtc->pi.frequency_response(omega);
    const CMat K = (Im - F * Pi).partialPivLu().solve(FE) * std::exp(-s * h);
    const CMat T = G11 + G12 * K * (In - G22 * K).partialPivLu().solve(G21);
    return T.squaredNorm();
  };

  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  const auto integrate = [&](double a, double b) {
    // Keep every piece within a few periods of the e^{-j omega h} ripple.
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) * h / (4.0 * std::numbers::pi))));
    const double len = (b - a) / pieces;
    double sum = 0.0;
    for (int k = 0; k < pieces; ++k) {
      sum += GK::integrate(integrand, a + k * len, a + (k + 1) * len, 8, 1e-12);
    }
    return sum;
  };

  const double lo = 1e-3;
  const double decade = omega_max / 10.0;
  const int last = std::max(2, panels / 7);
  const int first = panels - last;
  double body = integrate(0.0, std::min(lo, decade));
  const auto geometric = [&](double a, double b, int count) {
    double sum = 0.0;
    if (b <= a) return sum;
    const double ratio = std::pow(b / a, 1.0 / count);
    double left = a;
    for (int k = 0; k < count; ++k) {
      const double right = k + 1 == count ? b : left * ratio;
      sum += integrate(left, right);
      left = right;
    }
    return sum;
  };
  body += geometric(lo, decade, first);
  const double tail_decade = geometric(decade, omega_max, last);
  body += tail_decade;
  // integrand ~ C / omega^2 beyond omega_max; C from the last decade.
  const double C = tail_decade / (1.0 / decade - 1.0 / omega_max);
  const double tail = C / omega_max;

  FreqDomainH2 out;
  out.single_agent_sq = (body + tail) / std::numbers::pi;
  out.tail = tail / std::numbers::pi;
  if (out.tail > 1e-2 * out.single_agent_sq) {
    throw SolverError("freq_domain_h2_delay: tail estimate exceeds the tolerance budget");
  }
  out.total = std::sqrt((problem.nu - 1) * out.single_agent_sq + local.gamma0 * local.gamma0);
  return out;
}

}  // namespace h2coord::oracle
