#pragma once

// Dense real-matrix functions used by the synthesis and the cost calculus:
// matrix exponentials and exponential integrals, Lyapunov and Riccati
// solvers, and exact H2 norms of finite-dimensional LTI systems.
//
// All routines are pure; they either return a certified result or throw.
// Dimension and argument errors raise std::invalid_argument, numerical
// failures (instability, no stabilizing solution, residual too large)
// raise h2coord::SolverError.

#include <Eigen/Dense>

#include <string_view>

namespace h2coord::matfun {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Eigenvalues whose real part (continuous) or modulus minus one (discrete)
/// lies within this margin of the stability boundary are rejected.
inline constexpr double kStabilityMargin = 1e-8;

struct LtiSystem {
  Mat A;
  Mat B;
  Mat C;
  Mat D;
};

/// e^{M t}.
Mat expm(const Mat& M, double t = 1.0);

struct DiscretePair {
  Mat Ahat;  // e^{A h}
  Mat Bhat;  // int_0^h e^{A t} dt B
};

/// Zero-order-hold discretization via one augmented exponential.
DiscretePair discretize_pair(const Mat& A, const Mat& B, double h);

/// Blocks of int_0^h Phi(t)' [Cz Dzu]' [Cz Dzu] Phi(t) dt, where
/// Phi(t) = exp([[A, Bu], [0, 0]] t).
struct SampledCost {
  Mat Qhat;
  Mat Shat;
  Mat Rhat;
};

SampledCost sampled_cost_gram(const Mat& A, const Mat& Bu, const Mat& Cz,
                              const Mat& Dzu, double h);

/// int_0^h e^{A' t} M e^{A t} dt, computed exactly (Van Loan).
Mat finite_horizon_gram(const Mat& A, const Mat& M, double h);

/// Solves A' X + X A + Q = 0 for Hurwitz A (complex Schur, Bartels-Stewart).
Mat lyap_continuous(const Mat& A, const Mat& Q);

struct RiccatiSolution {
  Mat X;
  Mat F;
};

/// Stabilizing solution of
///   A'X + XA + Cz'Cz - (XBu + Cz'Dzu) R^{-1} (Bu'X + Dzu'Cz) = 0,
/// R = Dzu'Dzu, with F = -R^{-1}(Bu'X + Dzu'Cz). When A is Hurwitz the
/// bound 0 <= X <= Xbar (Xbar the observability Gramian) is verified.
RiccatiSolution care(const Mat& A, const Mat& Bu, const Mat& Cz,
                     const Mat& Dzu);

/// Stabilizing solution of
///   X = A'XA + Q - (A'XB + S)(B'XB + R)^{-1}(B'XA + S'),
/// with F = -(B'XB + R)^{-1}(B'XA + S').
RiccatiSolution dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& S,
                     const Mat& R);

/// sqrt(tr(B' X B)) with X the observability Gramian; requires D = 0.
double h2_norm_exact(const LtiSystem& sys);

// Small spectral helpers shared by the other modules.

Eigen::VectorXcd eigenvalues(const Mat& M);
double spectral_abscissa(const Mat& M);
double spectral_radius(const Mat& M);
/// Smallest eigenvalue of the symmetric part of M.
double min_sym_eigenvalue(const Mat& M);

/// Throws SolverError naming `what` and the offending eigenvalue when some
/// eigenvalue of A has real part >= -kStabilityMargin.
void require_hurwitz(const Mat& A, std::string_view what);

}  // namespace h2coord::matfun
