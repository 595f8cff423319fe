#pragma once

// Stand-alone agent synthesis: the local H2 state-feedback problem whose
// solution, replicated through a rank-one correction, solves the
// coordination problem for any number of agents.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "h2coord/matfun.hpp"

namespace h2coord {

using matfun::Mat;
using matfun::Vec;

/// Local plant  x' = A x + Bw w + Bu u,  z = Cz x + Dzu u.
struct AgentModel {
  Mat A;
  Mat Bw;
  Mat Bu;
  Mat Cz;
  Mat Dzu;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return Bu.cols(); }
  Eigen::Index r() const { return Bw.cols(); }
  Eigen::Index p() const { return Cz.rows(); }

  /// Throws std::invalid_argument on inconsistent dimensions or non-finite entries.
  void check() const;
};

namespace constraint {

struct Unconstrained {
  bool operator==(const Unconstrained&) const = default;
};
/// Inter-agent information arrives with a dead time h.
struct Delay {
  double h;
  bool operator==(const Delay&) const = default;
};
/// Inter-agent information is sampled with period h; zero-order hold.
struct SampledZoh {
  double h;
  bool operator==(const SampledZoh&) const = default;
};
/// Sampled with period h; the hold waveform is designed as well.
struct SampledOptimalHold {
  double h;
  bool operator==(const SampledOptimalHold&) const = default;
};

}  // namespace constraint

using ConstraintClass = std::variant<constraint::Unconstrained, constraint::Delay,
                                     constraint::SampledZoh, constraint::SampledOptimalHold>;

std::string to_string(const ConstraintClass& c);
/// The period / dead time, or nullopt for the unconstrained class.
std::optional<double> period_of(const ConstraintClass& c);
/// Same class with a different h (no-op for the unconstrained class).
ConstraintClass with_period(const ConstraintClass& c, double h);

/// State-space data of the finite-impulse-response compensator
///   Pi(s) = (sI - A)^{-1} (Bu - e^{Ah} Bu e^{-sh}),
/// realized as  chi' = A chi + Bu u(t) - e^{Ah} Bu u(t - h).
struct PiRealization {
  Mat A;
  Mat Bu;
  Mat expAhBu;
  double h = 0.0;

  /// Pi(j omega) from the closed form above.
  Eigen::MatrixXcd frequency_response(double omega) const;
};

struct StaticGain {
  Mat F;
};
/// Dead-time compensator: u = F (e^{Ah} x(t-h) + chi(t)).
struct DelayDtc {
  Mat F;
  Mat expAh;
  PiRealization pi;
};
/// u(kh + tau) = Fhat x(kh).
struct SampledStatic {
  Mat Fhat;
  double h = 0.0;
};
/// u(kh + tau) = F e^{Acl tau} x(kh).
struct SampledWaveformHold {
  Mat F;
  Mat Acl;
  double h = 0.0;
};

using LocalController = std::variant<StaticGain, DelayDtc, SampledStatic, SampledWaveformHold>;

enum class Assumption {
  Hurwitz,                // A1
  DisturbanceSquare,      // A2
  Weights,                // A3
  NoImaginaryAxisZeros,   // A5
  NormalizedFeedthrough,  // A6
  SampledRank,            // A7
};

std::string_view label(Assumption a);
std::string_view describe(Assumption a);

struct AssumptionCheck {
  Assumption id;
  bool required = true;
  bool passed = false;
  std::string diagnostic;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;

  const AssumptionCheck& get(Assumption a) const;
  /// True when every required assumption passes; a failing A2 is tolerated
  /// when `allow_singular_Bw` is set.
  bool ok(bool allow_singular_Bw = false) const;
  std::string summary() const;
};

/// Runs every assumption check relevant to the constraint class. Never
/// throws for assumption failures; the report carries them.
AssumptionReport validate(const AgentModel& model, const Vec& mu,
                          const ConstraintClass& constraint);

struct LocalSolution {
  ConstraintClass constraint;
  double gamma0 = 0.0;
  double gammaAlpha = 0.0;
  double gammaOpt = 0.0;
  Mat Xbar;
  Mat Xalpha;
  std::optional<Mat> XalphaHat;  // sampled classes
  Mat Falpha;
  std::optional<Mat> FalphaHat;  // zero-order hold only
  LocalController controller;
};

struct OpenLoopCost {
  double gamma0;
  Mat Xbar;
};

/// Open-loop cost sqrt(tr(Bw' Xbar Bw)), Xbar the observability Gramian of (A, Cz).
OpenLoopCost gamma0(const AgentModel& model);

LocalSolution solve_unconstrained(const AgentModel& model);
LocalSolution solve_delay(const AgentModel& model, double h);
LocalSolution solve_sampled_zoh(const AgentModel& model, double h);
LocalSolution solve_sampled_opthold(const AgentModel& model, double h);
LocalSolution solve(const AgentModel& model, const ConstraintClass& constraint);

/// Rescales (Bu, Dzu) so that Dzu'Dzu = I. The original input is
/// u = input_map * u_normalized.
struct NormalizedModel {
  AgentModel model;
  Mat input_map;
};
NormalizedModel normalize_feedthrough(const AgentModel& model);

/// State prediction
///   xhat(t) = e^{Ah} x(t-h) + int_{t-h}^{t} e^{A(t-s)} Bu u(s) ds
/// from the delayed state and the input samples u(t-h), ..., u(t) taken on a
/// uniform grid (composite Simpson; a 3/8 panel closes an odd count).
Vec predictor(const AgentModel& model, const Vec& x_delayed, const std::vector<Vec>& inputs,
              double h);

}  // namespace h2coord
