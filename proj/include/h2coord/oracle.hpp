#pragma once

// Brute-force cross-checks that share no cost path with the closed forms:
// the expanded nu-agent loop solved as one big Lyapunov equation, the
// Householder decoupling of the aggregate gain, and frequency-domain
// quadrature of the delay-class single-agent loop.

#include <Eigen/Dense>

#include "h2coord/coordination.hpp"

namespace h2coord::oracle {

/// Aggregate delay-free closed loop x' = A x + B w, z = C x with
/// x = (x_1..x_nu), w = (w_1..w_nu), z = (z_1..z_nu).
struct ExpandedLoop {
  Mat A;  // nu n x nu n
  Mat B;  // nu n x nu r
  Mat C;  // nu p x nu n
};

inline constexpr int kMaxExpandedAgents = 8;

/// (I - mu mu') (x) F.
Mat expanded_gain(const Vec& mu, const Mat& F);

/// Builds the loop for an arbitrary nu m x nu n static gain K.
ExpandedLoop expand(const CoordinationProblem& problem, const Mat& K);
/// Builds the loop for the synthesized unconstrained controller.
ExpandedLoop expand(const CoordinationProblem& problem);

/// ||T_zw||_2 of the expanded loop (not squared).
double brute_force_total_h2(const CoordinationProblem& problem);
double brute_force_total_h2(const CoordinationProblem& problem, const Mat& K);

/// ||T_{z_i w_j}||_2 (not squared), 0-based indices.
double brute_force_pairwise_h2(const CoordinationProblem& problem, int i, int j);
/// Matrix of squared pairwise norms ||T_{z_i w_j}||_2^2.
Mat brute_force_pairwise_matrix(const CoordinationProblem& problem);

/// Orthogonal U with U mu = e_1 (Householder reflector, sign chosen to
/// avoid cancellation).
Mat householder_u(const Vec& mu);

struct DecouplingReport {
  bool passed = false;
  double orthogonality_error = 0.0;  // ||U'U - I||_max
  double alignment_error = 0.0;      // ||U mu - e_1||_max
  double structure_error = 0.0;      // ||(U(x)I) K (U'(x)I) - (I - e1 e1')(x)F||_max
  double first_row_norm = 0.0;       // ||first m rows of the transformed gain||_max
};

inline constexpr double kDecouplingTol = 1e-11;

/// Checks the transformed synthesized gain against (I - e1 e1') (x) F.
DecouplingReport decoupling_check(const CoordinationProblem& problem);
/// Same check for an arbitrary expanded gain K against the local gain F.
DecouplingReport decoupling_check(const CoordinationProblem& problem, const Mat& K, const Mat& F);

/// Pi(j omega) = int_0^h e^{A t} e^{-j omega t} dt Bu by Gauss-Legendre
/// quadrature, independent of the resolvent form.
Eigen::MatrixXcd pi_quadrature(const PiRealization& pi, double omega);

struct FreqDomainH2 {
  double single_agent_sq = 0.0;  // (1/pi) int_0^inf tr(T'T) d omega
  double tail = 0.0;             // analytic part beyond omega_max
  double total = 0.0;            // sqrt((nu - 1) single + gamma_0^2)
};

/// Delay class. Integrates tr(T(j w)^H T(j w)) of the single-agent loop
/// closed by (I - F Pi)^{-1} F e^{Ah} e^{-sh} over [0, omega_max] on
/// `panels` geometric panels, then adds a C / omega_max tail with C fitted
/// over the last decade. Throws SolverError when the tail exceeds 1% of the
/// value.
FreqDomainH2 freq_domain_h2_delay(const CoordinationProblem& problem, const LocalSolution& local,
                                  double omega_max = 1e4, int panels = 200);

}  // namespace h2coord::oracle
