#include "h2coord/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "h2coord/errors.hpp"

namespace h2coord::sim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;

enum class Kind { Static, Delay, Zoh, OptHold };

// Continuous extension of classical RK4 evaluated at theta in {0, 1/2, 1}.
struct DenseWeights {
  double b1, b2, b3, b4;
};
constexpr DenseWeights kDense[3] = {
    {0.0, 0.0, 0.0, 0.0},
    {5.0 / 24.0, 1.0 / 6.0, 1.0 / 6.0, -1.0 / 24.0},
    {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0},
};

// Stage offsets inside a step are c in {0, 1/2, 1}; `half` = 2c throughout.

int grid_ratio(double value, double dt, const char* what) {
  const double ratio = value / dt;
  const long k = std::lround(ratio);
  if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9 * std::max(1.0, ratio)) {
    throw std::invalid_argument(std::string(what) + " must be a positive integer multiple of dt");
  }
  return static_cast<int>(k);
}

void check_config(const SimConfig& config) {
  if (!(config.dt > 0.0) || !std::isfinite(config.dt)) {
    throw std::invalid_argument("SimConfig: dt must be positive");
  }
  grid_ratio(config.T, config.dt, "SimConfig: T");
}

// The per-agent control law extracted from a LocalController.
struct Law {
  Kind kind = Kind::Static;
  Mat F;
  Mat E;    // e^{Ah}
  Mat EBu;  // e^{Ah} Bu
  int H = 0;
  std::vector<Mat> hold_exp;  // e^{Acl q dt / 2}, q = 0..2H
};

Law make_law(const AggregateController& controller, const CoordinationProblem& problem,
             double dt) {
  Law law;
  std::visit(overloaded{
                 [&](const StaticGain& k) {
                   if (!std::holds_alternative<constraint::Unconstrained>(problem.constraint)) {
                     throw std::invalid_argument("controller class does not match the problem");
                   }
                   law.kind = Kind::Static;
                   law.F = k.F;
                 },
                 [&](const DelayDtc& k) {
                   const auto* d = std::get_if<constraint::Delay>(&problem.constraint);
                   if (!d || d->h != k.pi.h) {
                     throw std::invalid_argument("controller class does not match the problem");
                   }
                   law.kind = Kind::Delay;
                   law.F = k.F;
                   law.E = k.expAh;
                   law.EBu = k.pi.expAhBu;
                   law.H = grid_ratio(k.pi.h, dt, "delay h");
                 },
                 [&](const SampledStatic& k) {
                   const auto* d = std::get_if<constraint::SampledZoh>(&problem.constraint);
                   if (!d || d->h != k.h) {
                     throw std::invalid_argument("controller class does not match the problem");
                   }
                   law.kind = Kind::Zoh;
                   law.F = k.Fhat;
                   law.H = grid_ratio(k.h, dt, "sampling period h");
                 },
                 [&](const SampledWaveformHold& k) {
                   const auto* d =
                       std::get_if<constraint::SampledOptimalHold>(&problem.constraint);
                   if (!d || d->h != k.h) {
                     throw std::invalid_argument("controller class does not match the problem");
                   }
                   law.kind = Kind::OptHold;
                   law.F = k.F;
                   law.H = grid_ratio(k.h, dt, "sampling period h");
                   law.hold_exp.reserve(2 * law.H + 1);
                   for (int q = 0; q <= 2 * law.H; ++q) {
                     law.hold_exp.push_back(matfun::expm(k.Acl, 0.5 * q * dt));
                   }
                 },
             },
             controller.local);
  if (controller.mu.size() != problem.nu) {
    throw std::invalid_argument("controller weights do not match the number of agents");
  }
  return law;
}

struct Kick {
  int step;
  int agent;
  Vec dx;
  bool after_sample = false;
};

// One closed-loop run. State layout: [x_1 .. x_nu | chi_1 .. chi_nu (delay) | energy_1 .. energy_nu].
class Engine {
 public:
  Engine(const CoordinationProblem& problem, const AggregateController& controller, double dt)
      : model_(problem.model),
        mu_ctrl_(controller.mu),
        law_(make_law(controller, problem, dt)),
        dt_(dt),
        nu_(problem.nu),
        n_(model_.n()),
        m_(model_.m()),
        r_(model_.r()),
        dyn_(law_.kind == Kind::Delay ? 2 * n_ * nu_ : n_ * nu_),
        s_(Vec::Zero(dyn_ + nu_)),
        held_(Mat::Zero(law_.kind == Kind::OptHold ? n_ : m_, nu_)) {
    if (law_.kind == Kind::Delay) {
      capacity_ = 2 * law_.H + 2;
      ring_.assign(capacity_, Segment{Vec::Zero(dyn_), {Vec(), Vec(), Vec(), Vec()}});
    }
  }

  void set_initial(const std::vector<Vec>& x0) {
    if (x0.empty()) return;
    if (static_cast<int>(x0.size()) != nu_) {
      throw std::invalid_argument("initial_states must have one entry per agent");
    }
    for (int i = 0; i < nu_; ++i) {
      if (x0[i].size() != n_) throw std::invalid_argument("initial state has wrong size");
      s_.segment(i * n_, n_) = x0[i];
    }
  }

  void set_disturbance(const DisturbanceSpec& spec) {
    source_.emplace(spec, r_, nu_, dt_);
  }

  void add_kick(int step, int agent, int channel, bool after_sample = false) {
    if (agent < 0 || agent >= nu_ || channel < 0 || channel >= r_) {
      throw std::invalid_argument("impulse agent/channel index out of range");
    }
    kicks_.push_back({step, agent, model_.Bw.col(channel), after_sample});
  }

  int step_index() const { return g_; }
  double time() const { return g_ * dt_; }
  const Vec& state() const { return s_; }
  Kind kind() const { return law_.kind; }
  const Law& law() const { return law_; }

  CMapMat X(const Vec& s) const { return CMapMat(s.data(), n_, nu_); }
  CMapMat Chi(const Vec& s) const { return CMapMat(s.data() + n_ * nu_, n_, nu_); }
  Vec energy() const { return s_.tail(nu_); }
  double state_norm_sq() const { return s_.head(dyn_).squaredNorm(); }

  // Applies pending kicks and takes a sample when g is a sampling instant.
  // Must be called once at every node before step() or controls_now().
  void begin_node() {
    for (const auto& k : kicks_) {
      if (k.step == g_ && !k.after_sample) s_.segment(k.agent * n_, n_) += k.dx;
    }
    if ((law_.kind == Kind::Zoh || law_.kind == Kind::OptHold) && g_ % law_.H == 0) {
      const CMapMat Xs = X(s_);
      const Vec xbar = Xs * mu_ctrl_;
      const Mat dev = Xs - xbar * mu_ctrl_.transpose();
      held_ = law_.kind == Kind::Zoh ? Mat(law_.F * dev) : dev;
      sample_step_ = g_;
    }
    for (const auto& k : kicks_) {
      if (k.step == g_ && k.after_sample) s_.segment(k.agent * n_, n_) += k.dx;
    }
  }

  Mat controls_now() const { return controls(g_, 0, s_); }

  // Predictor e^{Ah} x(t - h) + chi(t) at the current node (delay class).
  Mat predictor_now() const {
    return law_.E * hist_x(g_ - law_.H, 0) + Chi(s_);
  }

  struct StepRecord {
    Mat u_right, u_mid, u_left, z_right;
  };

  void step(StepRecord* rec = nullptr) {
    Mat U1;
    const Vec k1 = deriv(g_, 0, s_, &U1);
    const Vec k2 = deriv(g_, 1, s_ + 0.5 * dt_ * k1, nullptr);
    const Vec k3 = deriv(g_, 1, s_ + 0.5 * dt_ * k2, nullptr);
    const Vec k4 = deriv(g_, 2, s_ + dt_ * k3, nullptr);
    Vec next = s_ + dt_ / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (law_.kind == Kind::Delay) {
      Segment& seg = ring_[g_ % capacity_];
      seg.node = s_.head(dyn_);
      seg.k[0] = k1.head(dyn_);
      seg.k[1] = k2.head(dyn_);
      seg.k[2] = k3.head(dyn_);
      seg.k[3] = k4.head(dyn_);
      stored_ = g_;
    }
    last_power_ = (model_.Cz * X(s_) + model_.Dzu * U1).squaredNorm();
    if (rec) {
      rec->u_right = U1;
      if (law_.kind == Kind::Delay) {
        Vec mid = s_;
        mid.head(dyn_) = dense(g_, 1);
        rec->u_mid = controls(g_, 1, mid);
        rec->u_left = controls(g_, 2, next);
      }
    }
    s_ = std::move(next);
    ++g_;
  }

  double last_power() const { return last_power_; }


 private:
  struct Segment {
    Vec node;
    Vec k[4];
  };

  // Dense output of the (x, chi) block of segment `seg` at theta = half / 2.
  Vec dense(int seg, int half) const {
    if (seg < 0) return Vec::Zero(dyn_);
    if (seg > stored_ || stored_ - seg >= capacity_) {
      throw std::logic_error("delay history lookup outside the ring buffer");
    }
    const Segment& s = ring_[seg % capacity_];
    if (half == 0) return s.node;
    const DenseWeights& b = kDense[half];
    return s.node + dt_ * (b.b1 * s.k[0] + b.b2 * s.k[1] + b.b3 * s.k[2] + b.b4 * s.k[3]);
  }

  Mat hist_x(int seg, int half) const {
    if (seg < 0) return Mat::Zero(n_, nu_);
    const Vec d = dense(seg, half);
    return CMapMat(d.data(), n_, nu_);
  }

  Mat hist_chi(int seg, int half) const {
    if (seg < 0) return Mat::Zero(n_, nu_);
    const Vec d = dense(seg, half);
    return CMapMat(d.data() + n_ * nu_, n_, nu_);
  }

  Mat deviation(const Mat& Xm) const {
    const Vec xbar = Xm * mu_ctrl_;
    return Xm - xbar * mu_ctrl_.transpose();
  }

  // Control of every agent at stage time t_g + (half / 2) dt.
  Mat controls(int g, int half, const Vec& s) const {
    switch (law_.kind) {
      case Kind::Static:
        return law_.F * deviation(X(s));
      case Kind::Delay:
        return law_.F * (law_.E * deviation(hist_x(g - law_.H, half)) + Chi(s));
      case Kind::Zoh:
        return held_;
      case Kind::OptHold: {
        const int q = 2 * (g - sample_step_) + half;
        return law_.F * (law_.hold_exp[q] * held_);
      }
    }
    return {};
  }

  // Control applied h earlier, rebuilt from the stored history (delay class).
  Mat delayed_controls(int g, int half) const {
    const int seg = g - law_.H;
    if (seg < 0) return Mat::Zero(m_, nu_);
    return law_.F * (law_.E * deviation(hist_x(seg - law_.H, half)) + hist_chi(seg, half));
  }

  Vec deriv(int g, int half, const Vec& s, Mat* u_out) {
    const Mat U = controls(g, half, s);
    const Mat W = source_ ? source_->at(g, half) : Mat::Zero(r_, nu_);
    const CMapMat Xs = X(s);
    Vec ds(s.size());
    MapMat dX(ds.data(), n_, nu_);
    dX = model_.A * Xs + model_.Bw * W + model_.Bu * U;
    if (law_.kind == Kind::Delay) {
      MapMat dChi(ds.data() + n_ * nu_, n_, nu_);
      dChi = model_.A * Chi(s) + model_.Bu * U - law_.EBu * delayed_controls(g, half);
    }
    const Mat Z = model_.Cz * Xs + model_.Dzu * U;
    ds.tail(nu_) = Z.colwise().squaredNorm().transpose();
    if (u_out) *u_out = U;
    return ds;
  }

  const AgentModel& model_;
  Vec mu_ctrl_;
  Law law_;
  double dt_;
  int nu_;
  Eigen::Index n_, m_, r_;
  Eigen::Index dyn_;
  Vec s_;
  int g_ = 0;

  Mat held_;
  int sample_step_ = 0;

  int capacity_ = 0;
  int stored_ = -1;
  std::vector<Segment> ring_;

  std::vector<Kick> kicks_;
  std::optional<DisturbanceSource> source_;
  double last_power_ = 0.0;
};

void record_node(Trajectory& traj, const Engine& eng, const CoordinationProblem& problem,
                 const Mat& U) {
  const CMapMat Xs = eng.X(eng.state());
  traj.t.push_back(eng.time());
  traj.x.push_back(Xs);
  traj.u.push_back(U);
  traj.z.push_back(problem.model.Cz * Xs + problem.model.Dzu * U);
  traj.ubar.push_back(U * problem.mu);
  traj.xbar.push_back(Xs * problem.mu);
  if (eng.kind() == Kind::Delay) traj.xhat.push_back(eng.predictor_now());
}

// Slowest decay rate of the closed loop (center of mass included).
double slowest_rate(const CoordinationProblem& problem, const Law& law, double dt) {
  const auto& md = problem.model;
  double rate = -matfun::spectral_abscissa(md.A);
  switch (law.kind) {
    case Kind::Static:
    case Kind::Delay:
    case Kind::OptHold:
      rate = std::min(rate, -matfun::spectral_abscissa(md.A + md.Bu * law.F));
      break;
    case Kind::Zoh: {
      const double h = law.H * dt;
      const auto disc = matfun::discretize_pair(md.A, md.Bu, h);
      const double rho = matfun::spectral_radius(disc.Ahat + disc.Bhat * law.F);
      rate = std::min(rate, -std::log(rho) / h);
      break;
    }
  }
  return rate;
}

}  // namespace

DisturbanceSource::DisturbanceSource(const DisturbanceSpec& spec, Eigen::Index r, int nu, double dt)
    : spec_(spec), r_(r), nu_(nu) {
  if (const auto* wn = std::get_if<disturbance::WhiteNoise>(&spec_)) {
    if (!(wn->intensity >= 0.0)) throw std::invalid_argument("noise intensity must be nonnegative");
    rng_.seed(wn->seed);
    noise_scale_ = std::sqrt(wn->intensity / dt);
  }
  if (const auto* wf = std::get_if<disturbance::Waveform>(&spec_)) {
    for (const Mat& w : wf->samples) {
      if (w.rows() != r_ || w.cols() != nu_) {
        throw std::invalid_argument("waveform sample must be r x nu");
      }
    }
  }
}

Mat DisturbanceSource::at(int g, int half) {
  return std::visit(
      overloaded{
          [&](const disturbance::WhiteNoise&) -> Mat {
            if (noise_step_ != g) {
              if (g != noise_step_ + 1) throw std::logic_error("noise must be drawn step by step");
              noise_ = Mat(r_, nu_);
              for (Eigen::Index j = 0; j < nu_; ++j) {
                for (Eigen::Index i = 0; i < r_; ++i) noise_(i, j) = normal_(rng_) * noise_scale_;
              }
              noise_step_ = g;
            }
            return noise_;
          },
          [&](const disturbance::Waveform& wf) -> Mat {
            const auto sample = [&](int k) -> Mat {
              if (k < 0 || k >= static_cast<int>(wf.samples.size())) return Mat::Zero(r_, nu_);
              return wf.samples[k];
            };
            if (half == 0) return sample(g);
            if (half == 2) return sample(g + 1);
            return 0.5 * (sample(g) + sample(g + 1));
          },
          [&](const auto&) -> Mat { return Mat::Zero(r_, nu_); },
      },
      spec_);
}

Trajectory simulate(const CoordinationProblem& problem, const AggregateController& controller,
                    const SimConfig& config, const DisturbanceSpec& disturbance,
                    const std::vector<Vec>& initial_states) {
  check_config(config);
  Engine eng(problem, controller, config.dt);
  eng.set_initial(initial_states);
  eng.set_disturbance(disturbance);
  const int N = grid_ratio(config.T, config.dt, "SimConfig: T");
  if (const auto* imp = std::get_if<disturbance::ImpulseChannel>(&disturbance)) {
    const double ratio = imp->time / config.dt;
    const long k = std::lround(ratio);
    if (imp->time < 0.0 || k > N || std::abs(ratio - static_cast<double>(k)) > 1e-9 * std::max(1.0, ratio)) {
      throw std::invalid_argument("impulse time must be a grid point within the horizon");
    }
    eng.add_kick(static_cast<int>(k), imp->agent, imp->channel);
  }

  Trajectory traj;
  traj.nu = problem.nu;
  traj.dt = config.dt;
  traj.n = problem.model.n();
  traj.m = problem.model.m();
  traj.p = problem.model.p();
  traj.t.reserve(N + 1);
  const bool delay = eng.kind() == Kind::Delay;
  Engine::StepRecord rec;
  for (int g = 0; g < N; ++g) {
    eng.begin_node();
    record_node(traj, eng, problem, eng.controls_now());
    eng.step(delay ? &rec : nullptr);
    if (delay) {
      traj.u_mid.push_back(std::move(rec.u_mid));
      traj.u_left.push_back(std::move(rec.u_left));
    }
  }
  eng.begin_node();
  record_node(traj, eng, problem, eng.controls_now());
  traj.energy = eng.energy();
  return traj;
}

double empirical_h2(const CoordinationProblem& problem, const AggregateController& controller,
                    const SimConfig& config, EmpiricalH2Options options) {
  check_config(config);
  const Law law = make_law(controller, problem, config.dt);
  const int N = grid_ratio(config.T, config.dt, "SimConfig: T");
  const bool sampled = law.kind == Kind::Zoh || law.kind == Kind::OptHold;
  // Kick phases 0..H-1; for sampled classes one more phase (index H) is the
  // kick at t = 0 landing just after the sample. The energy is periodic in
  // the phase with a jump at the sample instant, so the two t = 0 variants
  // share half weight (trapezoid over one period).
  const int phases = sampled ? law.H + 1 : 1;
  const int window = law.kind == Kind::Delay ? 2 * law.H + 1 : sampled ? law.H : 1;
  const double sigma = slowest_rate(problem, law, config.dt);
  if (!(sigma > 0.0)) throw SolverError("empirical_h2: closed loop is not stable");

  const int r = static_cast<int>(problem.model.r());
  const int jobs = phases * problem.nu * r;
  std::vector<double> energy(jobs, 0.0);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto run_job = [&](int job) {
    const int phase = job / (problem.nu * r);
    const int agent = (job / r) % problem.nu;
    const int channel = job % r;
    Engine eng(problem, controller, config.dt);
    const bool late = sampled && phase == law.H;
    const int kick_step = late ? 0 : phase;
    eng.add_kick(kick_step, agent, channel, late);
    double peak = 0.0;
    int last_above = 0;
    for (int g = 0;; ++g) {
      if (g >= N) {
        throw SolverError("empirical_h2: response did not decay within T = " +
                          std::to_string(config.T));
      }
      eng.begin_node();
      const double nsq = eng.state_norm_sq();
      peak = std::max(peak, nsq);
      if (nsq > options.decay_fraction * peak) last_above = g;
      if (g > kick_step && g - last_above >= window) break;
      eng.step();
    }
    const Mat U = eng.controls_now();
    const double power =
        (problem.model.Cz * eng.X(eng.state()) + problem.model.Dzu * U).squaredNorm();
    energy[job] = eng.energy().sum() + power / (2.0 * sigma);
  };

  const auto worker = [&] {
    for (int job = next++; job < jobs; job = next++) {
      try {
        run_job(job);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(options.threads, 1, std::max(1, jobs));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  double total = 0.0;
  const int per_phase = problem.nu * r;
  for (int job = 0; job < jobs; ++job) {
    const int phase = job / per_phase;
    const double weight = sampled && (phase == 0 || phase == law.H) ? 0.5 : 1.0;
    total += weight * energy[job];
  }
  return std::sqrt(total / (sampled ? law.H : 1));
}

double constraint_residual(const Trajectory& traj) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < traj.u.size(); ++k) {
    num = std::max(num, traj.ubar[k].lpNorm<Eigen::Infinity>());
    den = std::max(den, traj.u[k].lpNorm<Eigen::Infinity>());
  }
  return den > 0.0 ? num / den : 0.0;
}

double predictor_check(const CoordinationProblem& problem, const AggregateController& controller,
                       const SimConfig& config) {
  const auto* d = std::get_if<constraint::Delay>(&problem.constraint);
  if (!d) throw std::invalid_argument("predictor_check requires the delay class");
  const Trajectory traj = simulate(problem, controller, config, disturbance::ImpulseChannel{});
  const int H = grid_ratio(d->h, config.dt, "delay h");
  double worst = 0.0;
  for (std::size_t g = H; g < traj.x.size(); ++g) {
    worst = std::max(worst, (traj.xhat[g] - traj.x[g]).colwise().norm().maxCoeff());
  }
  return worst;
}

double dtc_quadrature_gap(const CoordinationProblem& problem, const AggregateController& controller,
                          const Trajectory& traj) {
  const Law law = make_law(controller, problem, traj.dt);
  if (law.kind != Kind::Delay) throw std::invalid_argument("dtc_quadrature_gap requires the delay class");
  if (traj.u_mid.size() + 1 != traj.u.size()) {
    throw std::invalid_argument("trajectory lacks the delay-class records");
  }
  const int H = law.H;
  const double dt = traj.dt;
  const auto& md = problem.model;
  std::vector<Mat> w(2 * H + 1);
  for (int q = 0; q <= 2 * H; ++q) w[q] = matfun::expm(md.A, 0.5 * q * dt) * md.Bu;

  const Vec& mu = controller.mu;
  double worst = 0.0;
  const int N = static_cast<int>(traj.u.size()) - 1;
  for (int g = 0; g <= N; ++g) {
    Mat integral = Mat::Zero(md.n(), traj.nu);
    for (int j = std::max(0, g - H); j < g; ++j) {
      const int q = 2 * (g - j);
      integral += dt / 6.0 * (w[q] * traj.u[j] + 4.0 * w[q - 1] * traj.u_mid[j] +
                              w[q - 2] * traj.u_left[j]);
    }
    Mat dev = Mat::Zero(md.n(), traj.nu);
    if (g >= H) {
      const Mat& xd = traj.x[g - H];
      dev = xd - (xd * mu) * mu.transpose();
    }
    const Mat u = law.F * (law.E * dev + integral);
    worst = std::max(worst, (u - traj.u[g]).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const std::string& comment) {
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "t,agent";
  for (Eigen::Index k = 0; k < traj.n; ++k) os << ",x" << k + 1;
  for (Eigen::Index k = 0; k < traj.m; ++k) os << ",u" << k + 1;
  for (Eigen::Index k = 0; k < traj.p; ++k) os << ",z" << k + 1;
  for (Eigen::Index k = 0; k < traj.m; ++k) os << ",ubar" << k + 1;
  os << '\n';
  const auto old_precision = os.precision(17);
  for (std::size_t g = 0; g < traj.t.size(); ++g) {
    for (int i = 0; i < traj.nu; ++i) {
      os << traj.t[g] << ',' << i + 1;
      for (Eigen::Index k = 0; k < traj.n; ++k) os << ',' << traj.x[g](k, i);
      for (Eigen::Index k = 0; k < traj.m; ++k) os << ',' << traj.u[g](k, i);
      for (Eigen::Index k = 0; k < traj.p; ++k) os << ',' << traj.z[g](k, i);
      for (Eigen::Index k = 0; k < traj.m; ++k) os << ',' << traj.ubar[g](k);
      os << '\n';
    }
  }
  os.precision(old_precision);
}

}  // namespace h2coord::sim
