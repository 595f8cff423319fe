#pragma once

// Fixed-step (classical RK4) simulation of the nu-agent closed loop for
// every constraint class. Delay and sample instants must fall on the grid
// (h / dt integer), so the discontinuities introduced by the delay and by
// the sample/hold operators never sit inside a step.
//
// Delayed signals are read from a ring buffer of past steps through the
// third-order continuous extension of RK4, so the scheme keeps fourth-order
// accuracy with the dead-time compensator in the loop.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "h2coord/coordination.hpp"

namespace h2coord::sim {

struct SimConfig {
  double dt = 1e-2;
  double T = 10.0;
};

namespace disturbance {

struct None {};
/// Unit impulse on channel `channel` of agent `agent` (0-based) at a grid
/// time; realized as the state kick x_agent += Bw e_channel.
struct ImpulseChannel {
  int agent = 0;
  int channel = 0;
  double time = 0.0;
};
/// Piecewise-constant Gaussian noise, resampled every step, with
/// E[w w'] = intensity / dt per step.
struct WhiteNoise {
  std::uint64_t seed = 0;
  double intensity = 1.0;
};
/// samples[k] is the r x nu disturbance at t = k dt; linear in between,
/// zero past the end of the table.
struct Waveform {
  std::vector<Mat> samples;
};

}  // namespace disturbance

using DisturbanceSpec = std::variant<disturbance::None, disturbance::ImpulseChannel,
                                     disturbance::WhiteNoise, disturbance::Waveform>;

/// Stage-time disturbance values w(t_g + half dt / 2), r x nu. White noise
/// is drawn once per step, so steps must be visited in order.
class DisturbanceSource {
 public:
  DisturbanceSource(const DisturbanceSpec& spec, Eigen::Index r, int nu, double dt);
  Mat at(int g, int half);

 private:
  DisturbanceSpec spec_;
  Eigen::Index r_;
  int nu_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  double noise_scale_ = 0.0;
  int noise_step_ = -1;
  Mat noise_;
};

struct Trajectory {
  int nu = 0;
  double dt = 0.0;
  Eigen::Index n = 0, m = 0, p = 0;
  std::vector<double> t;
  /// Per grid time, one column per agent.
  std::vector<Mat> x, u, z;
  std::vector<Vec> ubar;  // sum_i mu_i u_i, with the problem's weights
  std::vector<Vec> xbar;  // sum_i mu_i x_i
  /// Delay class only: predictor e^{Ah} x_i(t-h) + chi_i(t) per grid time.
  std::vector<Mat> xhat;
  /// Delay class only: control at each step midpoint and left limit at the
  /// step end (u holds right limits); used for quadrature cross-checks.
  std::vector<Mat> u_mid, u_left;
  /// Per-agent int ||z_i||^2 dt over the run.
  Vec energy;
};

/// Simulates the closed loop. `initial_states` (one n-vector per agent) may
/// be empty for a zero initial condition. The controller's weights define
/// the control law; the problem's weights define ubar (a mismatch is how a
/// structure-broken controller is produced).
Trajectory simulate(const CoordinationProblem& problem, const AggregateController& controller,
                    const SimConfig& config, const DisturbanceSpec& disturbance,
                    const std::vector<Vec>& initial_states = {});

struct EmpiricalH2Options {
  int threads = 1;
  /// Stop once the state energy stays below this fraction of its peak.
  double decay_fraction = 1e-8;
};

/// Impulse-energy H2 estimate: sum over all nu*r unit state kicks Bw e_k of
/// int ||z||^2, with an exponential tail correction; sampled classes are
/// additionally averaged over the h/dt kick phases in [0, h) (trapezoid in
/// the phase, the kick at a sample instant counted half before and half
/// after the sample). Returns the
/// square root. config.T caps the horizon; failing to decay by then throws.
double empirical_h2(const CoordinationProblem& problem, const AggregateController& controller,
                    const SimConfig& config, EmpiricalH2Options options = {});

/// max_t ||ubar||_inf / max_t max_i ||u_i||_inf (0 for an all-zero run).
double constraint_residual(const Trajectory& traj);

/// Delay class: impulse on agent 0 channel 0 at t = 0, then
/// max over t >= h and agents of ||xhat_i(t) - x_i(t)||.
double predictor_check(const CoordinationProblem& problem, const AggregateController& controller,
                       const SimConfig& config);

/// Delay class: largest gap between the simulated control (realized through
/// chi) and the same law evaluated with the distributed-delay integral
///   int_0^h e^{A s} Bu u(t - s) ds
/// computed by per-step Simpson quadrature over the recorded input.
double dtc_quadrature_gap(const CoordinationProblem& problem, const AggregateController& controller,
                          const Trajectory& traj);

/// CSV export: header `t,agent,x1..xn,u1..um,z1..zp,ubar1..ubarm`, one row per
/// (t, agent). `comment`, when non-empty, is written first as a `# ` line.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj,
                          const std::string& comment = {});

}  // namespace h2coord::sim
