#include "h2coord/platoon.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "h2coord/errors.hpp"

namespace h2coord::platoon {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

int grid_steps(double value, double dt, const char* what) {
  const double ratio = value / dt;
  const long k = std::lround(ratio);
  if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9 * std::max(1.0, ratio)) {
    throw std::invalid_argument(std::string(what) + " must be a positive integer multiple of dt");
  }
  return static_cast<int>(k);
}

InitialState resolve_initial(const PlatoonSpec& spec, const InitialState& initial) {
  const ReferenceSample r0 = evaluate(spec.reference, 0.0);
  InitialState out = initial;
  if (out.p.size() == 0) out.p = Vec::Constant(spec.nu, r0.r) + spec.delta;
  if (out.v.size() == 0) out.v = Vec::Constant(spec.nu, r0.rd);
  if (out.p.size() != spec.nu || out.v.size() != spec.nu) {
    throw std::invalid_argument("initial positions and speeds need one entry per vehicle");
  }
  return out;
}

}  // namespace

ReferenceSample evaluate(const Reference& ref, double t) {
  return std::visit(overloaded{
                        [](const reference::Constant& c) { return ReferenceSample{c.value, 0.0, 0.0}; },
                        [t](const reference::Ramp& r) {
                          return ReferenceSample{r.start + r.speed * t, r.speed, 0.0};
                        },
                        [t](const reference::Sinusoid& s) {
                          const double arg = s.frequency * t + s.phase;
                          const double w = s.frequency;
                          return ReferenceSample{s.offset + s.amplitude * std::sin(arg),
                                                 s.amplitude * w * std::cos(arg),
                                                 -s.amplitude * w * w * std::sin(arg)};
                        },
                    },
                    ref);
}

void PlatoonSpec::check() const {
  if (nu < 2) throw std::invalid_argument("platoon needs at least two vehicles");
  if (!(kappa0 > 0.0) || !(kappa1 > 0.0)) {
    throw std::invalid_argument("platoon gains kappa0 and kappa1 must be positive");
  }
  if (!(q1 >= 0.0) || !(q2 >= 0.0)) throw std::invalid_argument("platoon weights must be nonnegative");
  if (!(h > 0.0)) throw std::invalid_argument("platoon sampling period must be positive");
  if (delta.size() != nu) {
    throw std::invalid_argument("delta must have " + std::to_string(nu) + " entries");
  }
  const double scale = std::max(1.0, delta.cwiseAbs().maxCoeff());
  if (std::abs(delta.sum()) > 1e-12 * scale) {
    throw std::invalid_argument("formation offsets must sum to zero (sum = " +
                                std::to_string(delta.sum()) + ")");
  }
  for (int i = 0; i < nu; ++i) {
    for (int j = i + 1; j < nu; ++j) {
      if (delta(i) == delta(j)) {
        throw std::invalid_argument("formation offsets " + std::to_string(i + 1) + " and " +
                                    std::to_string(j + 1) + " coincide");
      }
    }
  }
}

AgentModel build_agent_model(const PlatoonSpec& spec) {
  if (!(spec.kappa0 > 0.0) || !(spec.kappa1 > 0.0)) {
    throw std::invalid_argument("platoon gains kappa0 and kappa1 must be positive");
  }
  if (!(spec.q1 >= 0.0) || !(spec.q2 >= 0.0)) {
    throw std::invalid_argument("platoon weights must be nonnegative");
  }
  AgentModel m;
  m.A = Mat(2, 2);
  m.A << 0.0, 1.0, -spec.kappa0, -spec.kappa1;
  m.Bw = Mat(2, 1);
  m.Bw << 0.0, 1.0;
  m.Bu = m.Bw;
  m.Cz = Mat(3, 2);
  m.Cz << std::sqrt(spec.q1), 0.0, 0.0, std::sqrt(spec.q2), -spec.kappa0, -spec.kappa1;
  m.Dzu = Mat(3, 1);
  m.Dzu << 0.0, 0.0, 1.0;
  return m;
}

PlatoonDesign design(const PlatoonSpec& spec) {
  spec.check();
  PlatoonDesign d;
  const Vec mu = Vec::Constant(spec.nu, 1.0 / std::sqrt(static_cast<double>(spec.nu)));
  d.problem = make_problem(build_agent_model(spec), mu, constraint::SampledZoh{spec.h});
  d.report = validate(d.problem.model, mu, d.problem.constraint);
  if (!d.report.ok(/*allow_singular_Bw=*/true)) {
    throw AssumptionError("platoon synthesis assumptions violated:\n" + d.report.summary());
  }
  d.local = solve(d.problem.model, d.problem.constraint);
  d.controller = synthesize(d.problem, d.local);
  const Mat& F = std::get<SampledStatic>(d.local.controller).Fhat;
  d.f1 = F(0, 0);
  d.f2 = F(0, 1);
  return d;
}

double assemble_thrust(const PlatoonSpec& spec, const PlatoonDesign& design, const SampleHold& held,
                       int i, double p_i, double v_i, const ReferenceSample& ref) {
  if (held.p.size() != spec.nu || held.v.size() != spec.nu) {
    throw std::invalid_argument("assemble_thrust: missing sample at the last sampling instant");
  }
  const double pbar = held.p.mean(), vbar = held.v.mean();
  return ref.rdd + (spec.kappa0 - design.f1) * spec.delta(i) - spec.kappa0 * (p_i - ref.r) -
         spec.kappa1 * (v_i - ref.rd) + design.f1 * (held.p(i) - pbar) +
         design.f2 * (held.v(i) - vbar);
}

PlatoonRun run_platoon(const PlatoonSpec& spec, const sim::SimConfig& config,
                       const sim::DisturbanceSpec& disturbance, const InitialState& initial) {
  PlatoonRun run;
  run.design = design(spec);
  const PlatoonDesign& d = run.design;
  const auto& md = d.problem.model;
  const int nu = spec.nu;
  const double dt = config.dt;
  if (!(dt > 0.0)) throw std::invalid_argument("SimConfig: dt must be positive");
  const int N = grid_steps(config.T, dt, "SimConfig: T");
  const int H = grid_steps(spec.h, dt, "platoon sampling period h");
  const InitialState init = resolve_initial(spec, initial);
  const Mat& Fhat = std::get<SampledStatic>(d.local.controller).Fhat;
  const Vec& mu = d.problem.mu;

  int kick_step = -1, kick_agent = 0;
  if (const auto* imp = std::get_if<sim::disturbance::ImpulseChannel>(&disturbance)) {
    if (imp->agent < 0 || imp->agent >= nu || imp->channel != 0) {
      throw std::invalid_argument("impulse agent/channel index out of range");
    }
    kick_step = static_cast<int>(std::lround(imp->time / dt));
    if (imp->time < 0.0 || kick_step > N) throw std::invalid_argument("impulse time outside horizon");
    kick_agent = imp->agent;
  }
  sim::DisturbanceSource source(disturbance, 1, nu, dt);

  // State [p | v | energy].
  Vec s(3 * nu);
  s << init.p, init.v, Vec::Zero(nu);
  SampleHold held;
  Vec u_held = Vec::Zero(nu);

  const auto deviation_state = [&](const Vec& state, const ReferenceSample& ref) {
    Mat Y(2, nu);
    Y.row(0) = (state.head(nu).array() - ref.r - spec.delta.array()).matrix().transpose();
    Y.row(1) = (state.segment(nu, nu).array() - ref.rd).matrix().transpose();
    return Y;
  };
  const auto thrusts = [&](const Vec& state, const ReferenceSample& ref) {
    Vec tau(nu);
    for (int i = 0; i < nu; ++i) {
      tau(i) = assemble_thrust(spec, d, held, i, state(i), state(nu + i), ref);
    }
    return tau;
  };
  const auto deriv = [&](int g, int half, const Vec& state) {
    const ReferenceSample ref = evaluate(spec.reference, (g + 0.5 * half) * dt);
    const Vec tau = thrusts(state, ref);
    const Mat W = source.at(g, half);
    Vec ds(3 * nu);
    ds.head(nu) = state.segment(nu, nu);
    ds.segment(nu, nu) = tau + W.row(0).transpose();
    const Mat Z = md.Cz * deviation_state(state, ref) + md.Dzu * u_held.transpose();
    ds.tail(nu) = Z.colwise().squaredNorm().transpose();
    return ds;
  };

  sim::Trajectory& traj = run.deviation;
  traj.nu = nu;
  traj.dt = dt;
  traj.n = 2;
  traj.m = 1;
  traj.p = 3;
  double thrust_scale = 1.0, identity_err = 0.0, u_max = 0.0, ubar_max = 0.0;

  for (int g = 0;; ++g) {
    if (g == kick_step) s(nu + kick_agent) += 1.0;
    if (g % H == 0) {
      held.p = s.head(nu);
      held.v = s.segment(nu, nu);
      const Mat Y = deviation_state(s, evaluate(spec.reference, g * dt));
      const Vec ybar = Y * mu;
      u_held = (Fhat * (Y - ybar * mu.transpose())).transpose();
    }
    const double t = g * dt;
    const ReferenceSample ref = evaluate(spec.reference, t);
    const Vec tau = thrusts(s, ref);
    const Vec p = s.head(nu), v = s.segment(nu, nu);
    if (!p.allFinite() || !v.allFinite() || p.cwiseAbs().maxCoeff() > 1e12) {
      throw SolverError("platoon simulation diverged at t = " + std::to_string(t));
    }

    ReportRow row;
    row.t = t;
    row.eps_bar = p.mean() - ref.r;
    row.max_formation_err = (p.array() - p.mean() - spec.delta.array()).abs().maxCoeff();
    row.mean_thrust = tau.mean();
    row.u_residual = std::abs(u_held.sum());
    row.tau_bar = ref.rdd - spec.kappa1 * (v.mean() - ref.rd) - spec.kappa0 * row.eps_bar;
    run.report.push_back(row);
    thrust_scale = std::max(thrust_scale, tau.cwiseAbs().maxCoeff());
    identity_err = std::max(identity_err, std::abs(row.mean_thrust - row.tau_bar));
    u_max = std::max(u_max, u_held.cwiseAbs().maxCoeff());
    ubar_max = std::max(ubar_max, row.u_residual);

    run.t.push_back(t);
    run.p.push_back(p);
    run.v.push_back(v);
    run.tau.push_back(tau);
    const Mat Y = deviation_state(s, ref);
    const Mat U = u_held.transpose();
    traj.t.push_back(t);
    traj.x.push_back(Y);
    traj.u.push_back(U);
    traj.z.push_back(md.Cz * Y + md.Dzu * U);
    traj.ubar.push_back(U * mu);
    traj.xbar.push_back(Y * mu);

    if (g == N) break;
    const Vec k1 = deriv(g, 0, s);
    const Vec k2 = deriv(g, 1, s + 0.5 * dt * k1);
    const Vec k3 = deriv(g, 1, s + 0.5 * dt * k2);
    const Vec k4 = deriv(g, 2, s + dt * k3);
    s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  traj.energy = s.tail(nu);
  run.thrust_identity_error = identity_err / thrust_scale;
  run.u_residual = u_max > 0.0 ? ubar_max / u_max : 0.0;
  return run;
}

double eps_bar_gap(const PlatoonRun& a, const PlatoonRun& b) {
  if (a.report.size() != b.report.size()) throw std::invalid_argument("runs use different grids");
  double gap = 0.0;
  for (std::size_t k = 0; k < a.report.size(); ++k) {
    gap = std::max(gap, std::abs(a.report[k].eps_bar - b.report[k].eps_bar));
  }
  return gap;
}

double deviation_reconstruction_gap(const PlatoonSpec& spec, const sim::SimConfig& config,
                                    const sim::DisturbanceSpec& disturbance, const PlatoonRun& full,
                                    const InitialState& initial) {
  const InitialState init = resolve_initial(spec, initial);
  const ReferenceSample r0 = evaluate(spec.reference, 0.0);
  std::vector<Vec> y0(spec.nu);
  for (int i = 0; i < spec.nu; ++i) {
    y0[i] = Vec(2);
    y0[i] << init.p(i) - r0.r - spec.delta(i), init.v(i) - r0.rd;
  }
  const sim::Trajectory reduced = sim::simulate(full.design.problem, full.design.controller, config,
                                                disturbance, y0);
  if (reduced.t.size() != full.t.size()) throw std::invalid_argument("runs use different grids");
  double gap = 0.0;
  for (std::size_t k = 0; k < reduced.t.size(); ++k) {
    const ReferenceSample ref = evaluate(spec.reference, reduced.t[k]);
    const Vec p = (reduced.x[k].row(0).transpose().array() + ref.r + spec.delta.array()).matrix();
    gap = std::max(gap, (p - full.p[k]).cwiseAbs().maxCoeff());
  }
  return gap;
}

void write_report_csv(std::ostream& os, const PlatoonRun& run, const std::string& comment) {
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "t,eps_bar,max_formation_err,mean_thrust,u_residual\n";
  const auto old_precision = os.precision(17);
  for (const auto& r : run.report) {
    os << r.t << ',' << r.eps_bar << ',' << r.max_formation_err << ',' << r.mean_thrust << ','
       << r.u_residual << '\n';
  }
  os.precision(old_precision);
}

}  // namespace h2coord::platoon
