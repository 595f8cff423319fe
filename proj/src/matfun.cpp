#include "h2coord/matfun.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "h2coord/errors.hpp"

namespace h2coord::matfun {

namespace {

using CMat = Eigen::MatrixXcd;
using cplx = std::complex<double>;

constexpr double kLyapResidualTol = 1e-10;
constexpr double kRiccatiResidualTol = 1e-9;
constexpr int kMaxNewtonSteps = 4;

std::string dims(const Mat& M) {
  return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
}

void require_square(const Mat& M, const char* what) {
  if (M.rows() != M.cols() || M.rows() == 0) {
    throw std::invalid_argument(std::string(what) + " must be square and non-empty, got " +
                                dims(M));
  }
}

void require_rows(const Mat& M, Eigen::Index rows, const char* what) {
  if (M.rows() != rows) {
    throw std::invalid_argument(std::string(what) + " has " + std::to_string(M.rows()) +
                                " rows, expected " + std::to_string(rows));
  }
}

void require_finite(const Mat& M, const char* what) {
  if (!M.allFinite()) {
    throw std::invalid_argument(std::string(what) + " contains non-finite entries");
  }
}

Mat symmetrized(const Mat& M) { return 0.5 * (M + M.transpose()); }

std::string format_eigenvalue(cplx z) {
  std::ostringstream os;
  os.precision(10);
  os << z.real();
  if (z.imag() != 0.0) os << (z.imag() < 0 ? " - " : " + ") << std::abs(z.imag()) << "i";
  return os.str();
}

// Moves the eigenvalues accepted by `select` to the leading diagonal
// positions of a complex Schur form T = U* M U, updating T and U in place.
// Adjacent swaps use one Givens rotation each (as in LAPACK ztrexc).
int reorder_schur(CMat& T, CMat& U, const std::function<bool(cplx)>& select) {
  const Eigen::Index n = T.rows();
  int placed = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!select(T(k, k))) continue;
    for (Eigen::Index j = k; j > placed; --j) {
      const cplx t11 = T(j - 1, j - 1);
      const cplx t22 = T(j, j);
      Eigen::JacobiRotation<cplx> rot;
      rot.makeGivens(T(j - 1, j), t22 - t11);
      T.applyOnTheLeft(j - 1, j, rot.adjoint());
      T.applyOnTheRight(j - 1, j, rot);
      U.applyOnTheRight(j - 1, j, rot);
      T(j, j - 1) = 0.0;
      T(j - 1, j - 1) = t22;
      T(j, j) = t11;
    }
    ++placed;
  }
  return placed;
}

// X = U21 U11^{-1} from the leading n Schur vectors of a 2n x 2n pencil.
Mat riccati_from_subspace(const CMat& U, Eigen::Index n, const char* who) {
  const CMat U11 = U.topLeftCorner(n, n);
  const CMat U21 = U.bottomLeftCorner(n, n);
  Eigen::JacobiSVD<CMat> svd(U11);
  const auto& sv = svd.singularValues();
  if (sv(n - 1) <= 1e-12 * sv(0)) {
    throw SolverError(std::string(who) +
                      ": stable invariant subspace is not a graph (U11 singular); "
                      "no stabilizing solution");
  }
  const CMat X = U11.transpose().partialPivLu().solve(U21.transpose()).transpose();
  return symmetrized(X.real());
}

// Solves X - Phi' X Phi = W for Schur-stable Phi.
Mat stein(const Mat& Phi, const Mat& W) {
  const Eigen::Index n = Phi.rows();
  Eigen::ComplexSchur<CMat> schur(Phi.cast<cplx>());
  if (schur.info() != Eigen::Success) throw SolverError("stein: Schur decomposition failed");
  const CMat& T = schur.matrixT();
  const CMat& U = schur.matrixU();
  const CMat Wt = U.adjoint() * W.cast<cplx>() * U;
  const CMat Tadj = T.adjoint();
  CMat Y = CMat::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXcd rhs = Wt.col(j);
    if (j > 0) rhs += Tadj * (Y.leftCols(j) * T.col(j).head(j));
    CMat lhs = CMat::Identity(n, n) - T(j, j) * Tadj;
    Y.col(j) = lhs.triangularView<Eigen::Lower>().solve(rhs);
  }
  return symmetrized((U * Y * U.adjoint()).real());
}

}  // namespace

Eigen::VectorXcd eigenvalues(const Mat& M) {
  require_square(M, "eigenvalues: matrix");
  Eigen::EigenSolver<Mat> es(M, false);
  if (es.info() != Eigen::Success) throw SolverError("eigenvalue computation failed");
  return es.eigenvalues();
}

double spectral_abscissa(const Mat& M) { return eigenvalues(M).real().maxCoeff(); }

double spectral_radius(const Mat& M) { return eigenvalues(M).cwiseAbs().maxCoeff(); }

double min_sym_eigenvalue(const Mat& M) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void require_hurwitz(const Mat& A, std::string_view what) {
  const Eigen::VectorXcd ev = eigenvalues(A);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i).real() >= -kStabilityMargin) {
      throw SolverError(std::string(what) + " is not Hurwitz: eigenvalue " +
                        format_eigenvalue(ev(i)));
    }
  }
}

Mat expm(const Mat& M, double t) {
  require_square(M, "expm: matrix");
  require_finite(M, "expm: matrix");
  if (!std::isfinite(t) || t < 0.0) throw std::invalid_argument("expm: t must be finite and >= 0");
  const Mat Mt = M * t;
  return Mt.exp();
}

DiscretePair discretize_pair(const Mat& A, const Mat& B, double h) {
  require_square(A, "discretize_pair: A");
  require_rows(B, A.rows(), "discretize_pair: B");
  if (!(h > 0.0)) throw std::invalid_argument("discretize_pair: h must be positive");
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Mat aug = Mat::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = A;
  aug.topRightCorner(n, m) = B;
  const Mat E = expm(aug, h);
  return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

Mat finite_horizon_gram(const Mat& A, const Mat& M, double h) {
  require_square(A, "finite_horizon_gram: A");
  if (M.rows() != A.rows() || M.cols() != A.cols()) {
    throw std::invalid_argument("finite_horizon_gram: M must match A, got " + dims(M));
  }
  if (!(h > 0.0)) throw std::invalid_argument("finite_horizon_gram: h must be positive");
  const Eigen::Index n = A.rows();
  Mat vl = Mat::Zero(2 * n, 2 * n);
  vl.topLeftCorner(n, n) = -A.transpose();
  vl.topRightCorner(n, n) = M;
  vl.bottomRightCorner(n, n) = A;
  const Mat E = expm(vl, h);
  return symmetrized(E.bottomRightCorner(n, n).transpose() * E.topRightCorner(n, n));
}

SampledCost sampled_cost_gram(const Mat& A, const Mat& Bu, const Mat& Cz, const Mat& Dzu,
                              double h) {
  require_square(A, "sampled_cost_gram: A");
  require_rows(Bu, A.rows(), "sampled_cost_gram: Bu");
  if (Cz.cols() != A.cols()) throw std::invalid_argument("sampled_cost_gram: Cz columns != n");
  if (Dzu.rows() != Cz.rows() || Dzu.cols() != Bu.cols()) {
    throw std::invalid_argument("sampled_cost_gram: Dzu must be " + std::to_string(Cz.rows()) +
                                "x" + std::to_string(Bu.cols()) + ", got " + dims(Dzu));
  }
  if (!(h > 0.0)) throw std::invalid_argument("sampled_cost_gram: h must be positive");
  const Eigen::Index n = A.rows();
  const Eigen::Index m = Bu.cols();
  Mat F = Mat::Zero(n + m, n + m);
  F.topLeftCorner(n, n) = A;
  F.topRightCorner(n, m) = Bu;
  Mat CD(Cz.rows(), n + m);
  CD << Cz, Dzu;
  const Mat G = finite_horizon_gram(F, CD.transpose() * CD, h);
  return {G.topLeftCorner(n, n), G.topRightCorner(n, m), G.bottomRightCorner(m, m)};
}

Mat lyap_continuous(const Mat& A, const Mat& Q) {
  require_square(A, "lyap_continuous: A");
  if (Q.rows() != A.rows() || Q.cols() != A.cols()) {
    throw std::invalid_argument("lyap_continuous: Q must be " + dims(A) + ", got " + dims(Q));
  }
  require_finite(A, "lyap_continuous: A");
  require_finite(Q, "lyap_continuous: Q");
  require_hurwitz(A, "lyap_continuous: A");

  const Eigen::Index n = A.rows();
  Eigen::ComplexSchur<CMat> schur(A.cast<cplx>());
  if (schur.info() != Eigen::Success) throw SolverError("lyap_continuous: Schur failed");
  const CMat& T = schur.matrixT();
  const CMat& U = schur.matrixU();
  const CMat Qt = U.adjoint() * Q.cast<cplx>() * U;
  const CMat Tadj = T.adjoint();

  // T* Y + Y T = -Qt, column by column (T* is lower triangular).
  CMat Y = CMat::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXcd rhs = -Qt.col(j);
    if (j > 0) rhs -= Y.leftCols(j) * T.col(j).head(j);
    CMat lhs = Tadj;
    lhs.diagonal().array() += T(j, j);
    Y.col(j) = lhs.triangularView<Eigen::Lower>().solve(rhs);
  }
  const Mat X = symmetrized((U * Y * U.adjoint()).real());

  const double res = (A.transpose() * X + X * A + Q).norm();
  const double scale = A.norm() * X.norm() + Q.norm();
  if (res > kLyapResidualTol * scale) {
    throw SolverError("lyap_continuous: residual " + std::to_string(res) +
                      " exceeds tolerance");
  }
  return X;
}

RiccatiSolution care(const Mat& A, const Mat& Bu, const Mat& Cz, const Mat& Dzu) {
  require_square(A, "care: A");
  require_rows(Bu, A.rows(), "care: Bu");
  if (Cz.cols() != A.cols()) throw std::invalid_argument("care: Cz columns != n");
  if (Dzu.rows() != Cz.rows() || Dzu.cols() != Bu.cols()) {
    throw std::invalid_argument("care: Dzu has wrong dimensions " + dims(Dzu));
  }
  const Eigen::Index n = A.rows();

  const Mat R = Dzu.transpose() * Dzu;
  Eigen::LLT<Mat> Rllt(R);
  if (Rllt.info() != Eigen::Success || min_sym_eigenvalue(R) <= 1e-12 * std::max(1.0, R.norm())) {
    throw SolverError("care: Dzu'Dzu is singular; the continuous problem is singular");
  }
  const Mat S = Cz.transpose() * Dzu;
  const Mat Rinv_St = Rllt.solve(S.transpose());
  const Mat At = A - Bu * Rinv_St;
  const Mat Qt = symmetrized(Cz.transpose() * Cz - S * Rinv_St);
  const Mat G = symmetrized(Bu * Rllt.solve(Bu.transpose()));

  Mat H(2 * n, 2 * n);
  H << At, -G, -Qt, -At.transpose();
  Eigen::ComplexSchur<CMat> schur(H.cast<cplx>());
  if (schur.info() != Eigen::Success) throw SolverError("care: Schur decomposition failed");
  CMat T = schur.matrixT();
  CMat U = schur.matrixU();
  const double axis_tol = kStabilityMargin * std::max(1.0, H.norm());
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (std::abs(T(i, i).real()) <= axis_tol) {
      throw SolverError("care: Hamiltonian eigenvalue " + format_eigenvalue(T(i, i)) +
                        " on the imaginary axis; no stabilizing solution "
                        "(imaginary-axis invariant zero or unstabilizable mode)");
    }
  }
  const int stable = reorder_schur(T, U, [](cplx z) { return z.real() < 0.0; });
  if (stable != n) throw SolverError("care: Hamiltonian spectrum is not split n/n");
  Mat X = riccati_from_subspace(U, n, "care");

  const auto gain = [&](const Mat& Xc) -> Mat {
    return -Rllt.solve(Bu.transpose() * Xc + S.transpose());
  };
  const auto residual = [&](const Mat& Xc, double* scale) {
    const Mat XB = Xc * Bu + S;
    const Mat quad = XB * Rllt.solve(XB.transpose());
    *scale = 2.0 * A.norm() * Xc.norm() + (Cz.transpose() * Cz).norm() + quad.norm();
    return (A.transpose() * Xc + Xc * A + Cz.transpose() * Cz - quad).norm();
  };

  // Kleinman-Newton polishing; each step solves one Lyapunov equation.
  double scale = 1.0;
  double res = residual(X, &scale);
  for (int step = 0; step < kMaxNewtonSteps && res > 1e-14 * scale; ++step) {
    const Mat F = gain(X);
    const Mat Acl = A + Bu * F;
    if (spectral_abscissa(Acl) >= -kStabilityMargin) break;
    const Mat Ccl = Cz + Dzu * F;
    const Mat Xn = lyap_continuous(Acl, Ccl.transpose() * Ccl);
    double scale_n = 1.0;
    const double res_n = residual(Xn, &scale_n);
    if (!(res_n < res)) break;
    X = Xn;
    res = res_n;
    scale = scale_n;
  }
  if (res > kRiccatiResidualTol * scale) {
    throw SolverError("care: residual " + std::to_string(res) + " exceeds tolerance");
  }

  Mat F = gain(X);
  require_hurwitz(A + Bu * F, "care: closed loop A + Bu F");

  if (spectral_abscissa(A) < -kStabilityMargin) {
    const Mat Xbar = lyap_continuous(A, Cz.transpose() * Cz);
    const double tol = 1e-9 * std::max(1.0, Xbar.norm());
    if (min_sym_eigenvalue(X) < -tol || min_sym_eigenvalue(Xbar - X) < -tol) {
      throw SolverError("care: solution violates 0 <= X <= Xbar");
    }
  }
  return {X, F};
}

RiccatiSolution dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& S, const Mat& R) {
  require_square(A, "dare: A");
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  require_rows(B, n, "dare: B");
  if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("dare: Q must be n x n");
  if (S.rows() != n || S.cols() != m) throw std::invalid_argument("dare: S must be n x m");
  if (R.rows() != m || R.cols() != m) throw std::invalid_argument("dare: R must be m x m");

  Eigen::LLT<Mat> Rllt(symmetrized(R));
  if (Rllt.info() != Eigen::Success || min_sym_eigenvalue(R) <= 1e-14 * std::max(1.0, R.norm())) {
    throw SolverError("dare: R is singular or indefinite");
  }
  const Mat Rinv_St = Rllt.solve(S.transpose());
  const Mat At = A - B * Rinv_St;
  const Mat Qt = symmetrized(Q - S * Rinv_St);
  const Mat G = symmetrized(B * Rllt.solve(B.transpose()));
  const Mat I = Mat::Identity(n, n);

  Mat X;
  Eigen::JacobiSVD<Mat> svdA(At);
  const double rcond = svdA.singularValues()(n - 1) / std::max(svdA.singularValues()(0), 1e-300);
  if (rcond > 1e-10) {
    // Laub's Schur method on the symplectic matrix.
    const Mat AitT = At.transpose().partialPivLu().inverse();
    Mat Z(2 * n, 2 * n);
    Z << At + G * AitT * Qt, -G * AitT, -AitT * Qt, AitT;
    Eigen::ComplexSchur<CMat> schur(Z.cast<cplx>());
    if (schur.info() != Eigen::Success) throw SolverError("dare: Schur decomposition failed");
    CMat T = schur.matrixT();
    CMat U = schur.matrixU();
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
      if (std::abs(std::abs(T(i, i)) - 1.0) <= 1e-14) {
        throw SolverError("dare: symplectic eigenvalue " + format_eigenvalue(T(i, i)) +
                          " on the unit circle; no stabilizing solution");
      }
    }
    const int stable = reorder_schur(T, U, [](cplx z) { return std::abs(z) < 1.0; });
    if (stable != n) throw SolverError("dare: symplectic spectrum is not split n/n");
    X = riccati_from_subspace(U, n, "dare");
  } else {
    // Structure-preserving doubling; does not need At invertible.
    Mat Ak = At, Gk = G, Hk = Qt;
    for (int it = 0; it < 200; ++it) {
      const Eigen::PartialPivLU<Mat> W(I + Gk * Hk);
      const Mat WA = W.solve(Ak);
      const Mat An = Ak * WA;
      const Mat Gn = symmetrized(Gk + Ak * W.solve(Gk * Ak.transpose()));
      const Mat Hn = symmetrized(Hk + Ak.transpose() * Hk * WA);
      const double delta = (Hn - Hk).norm();
      Ak = An;
      Gk = Gn;
      Hk = Hn;
      if (delta <= 1e-15 * std::max(1.0, Hk.norm())) break;
    }
    X = Hk;
  }

  const auto gain = [&](const Mat& Xc) -> Mat {
    const Mat lhs = B.transpose() * Xc * B + R;
    return -lhs.ldlt().solve(B.transpose() * Xc * A + S.transpose());
  };
  const auto residual = [&](const Mat& Xc, double* scale) {
    const Mat L = A.transpose() * Xc * B + S;
    const Mat quad = L * (B.transpose() * Xc * B + R).ldlt().solve(L.transpose());
    const Mat AXA = A.transpose() * Xc * A;
    *scale = AXA.norm() + Xc.norm() + Q.norm() + quad.norm();
    return (AXA - Xc + Q - quad).norm();
  };

  // Hewer-Newton polishing; each step solves one Stein equation.
  double scale = 1.0;
  double res = residual(X, &scale);
  for (int step = 0; step < kMaxNewtonSteps && res > 1e-14 * scale; ++step) {
    const Mat F = gain(X);
    const Mat Phi = A + B * F;
    if (spectral_radius(Phi) >= 1.0 - kStabilityMargin) break;
    const Mat W = symmetrized(Q + S * F + F.transpose() * S.transpose() +
                              F.transpose() * R * F);
    const Mat Xn = stein(Phi, W);
    double scale_n = 1.0;
    const double res_n = residual(Xn, &scale_n);
    if (!(res_n < res)) break;
    X = Xn;
    res = res_n;
    scale = scale_n;
  }
  if (res > kRiccatiResidualTol * scale) {
    throw SolverError("dare: residual " + std::to_string(res) + " exceeds tolerance");
  }

  const Mat F = gain(X);
  const double rho = spectral_radius(A + B * F);
  if (rho >= 1.0 - kStabilityMargin) {
    throw SolverError("dare: closed loop is not Schur stable (spectral radius " +
                      std::to_string(rho) + ")");
  }
  if (min_sym_eigenvalue(X) < -1e-9 * std::max(1.0, X.norm())) {
    throw SolverError("dare: solution is not positive semidefinite");
  }
  return {X, F};
}

double h2_norm_exact(const LtiSystem& sys) {
  require_square(sys.A, "h2_norm_exact: A");
  require_rows(sys.B, sys.A.rows(), "h2_norm_exact: B");
  if (sys.C.cols() != sys.A.cols()) throw std::invalid_argument("h2_norm_exact: C columns != n");
  if (sys.D.size() != 0) {
    if (sys.D.rows() != sys.C.rows() || sys.D.cols() != sys.B.cols()) {
      throw std::invalid_argument("h2_norm_exact: D has wrong dimensions " + dims(sys.D));
    }
    if (sys.D.cwiseAbs().maxCoeff() != 0.0) {
      throw std::invalid_argument("h2_norm_exact: D must be zero (H2 norm is unbounded)");
    }
  }
  const Mat X = lyap_continuous(sys.A, sys.C.transpose() * sys.C);
  return std::sqrt(std::max(0.0, (sys.B.transpose() * X * sys.B).trace()));
}

}  // namespace h2coord::matfun
