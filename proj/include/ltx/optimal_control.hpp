#pragma once

#include <Eigen/Core>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ltx/astro.hpp"
#include "ltx/constants.hpp"
#include "ltx/integrate.hpp"
#include "ltx/optimize.hpp"
#include "ltx/problem.hpp"
#include "ltx/rng.hpp"

namespace ltx::optctl {

using Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec14 = Eigen::Matrix<double, 14, 1>;

/// Rendezvous accuracy that counts as "reached": position and velocity
/// mismatch at the final time below these values.
inline constexpr double rendezvous_pos_tol_m = 1e6;
inline constexpr double rendezvous_vel_tol_ms = 1.0;

enum class TransferLabel { optimal, homotopy_failed, infeasible };

inline const char* to_string(TransferLabel label) {
  switch (label) {
    case TransferLabel::optimal: return "Optimal";
    case TransferLabel::homotopy_failed: return "HomotopyFailed";
    case TransferLabel::infeasible: return "Infeasible";
  }
  return "Unknown";
}

inline TransferLabel label_from_string(const std::string& s) {
  if (s == "Optimal") return TransferLabel::optimal;
  if (s == "HomotopyFailed") return TransferLabel::homotopy_failed;
  if (s == "Infeasible") return TransferLabel::infeasible;
  throw std::invalid_argument("unknown transfer label: " + s);
}

// ---------------------------------------------------------------------------
// Nondimensional problem
// ---------------------------------------------------------------------------

/// Transfer problem expressed in the solver's unit system (length = 1 au,
/// mu = 1, mass = m0).  All solver internals work on this form.
struct ScaledProblem {
  Vector3d r0, v0;  // chaser state at departure
  Vector3d rf, vf;  // rendezvous state at arrival
  double tf = 0.0;
  double thrust = 0.0;   // max thrust acceleration at unit mass
  double exhaust = 0.0;  // effective exhaust velocity
  double m_dry = 0.0;    // dry mass fraction
  double pos_tol = 0.0;  // rendezvous tolerances in scaled units
  double vel_tol = 0.0;
  double lam_tol = 1e-4;    // transversality tolerance on lambda_m(tf)
  double norm_tol = 1e-6;   // tolerance on the costate normalization defect
  double radius_floor = 0.02;  // abort below this heliocentric distance
  ScaleSet scales;
  double m0_kg = 0.0;
};

inline ScaledProblem scale_problem(const TransferProblem& p) {
  p.validate();
  ScaledProblem sp;
  sp.scales = heliocentric_scales(p.m0_kg);
  const double vu = sp.scales.velocity();
  const astro::CartesianState s0 = p.initial_state();
  sp.r0 = s0.r / sp.scales.length;
  sp.v0 = s0.v / vu;
  sp.rf = p.target_r / sp.scales.length;
  sp.vf = p.target_v / vu;
  sp.tf = p.dt_s / sp.scales.time;
  sp.thrust = p.craft.tmax_n / sp.scales.force();
  sp.exhaust = p.craft.exhaust_velocity() / vu;
  sp.m_dry = p.craft.dry_mass_kg / p.m0_kg;
  sp.pos_tol = rendezvous_pos_tol_m / sp.scales.length;
  sp.vel_tol = rendezvous_vel_tol_ms / vu;
  sp.m0_kg = p.m0_kg;
  return sp;
}

// ---------------------------------------------------------------------------
// Control law
// ---------------------------------------------------------------------------

/// Throttle that minimizes the smoothed Hamiltonian for a given switching
/// value.  eps = 0 is the bang-bang limit; eps > 0 inserts the linear ramp.
inline double throttle_level(double rho, double eps) {
  if (eps > 0.0) {
    if (rho > eps) return 0.0;
    if (rho < -eps) return 1.0;
    return std::clamp((eps - rho) / (2.0 * eps), 0.0, 1.0);
  }
  return rho > 0.0 ? 0.0 : 1.0;
}

/// Switching function.  Costates and mass in the solver's nondimensional
/// units; requires lambda0 > 0.
inline double switching_function(const Vector3d& lambda_v, double lambda_m,
                                 double lambda0, double mass, double exhaust) {
  return 1.0 - exhaust * lambda_v.norm() / (lambda0 * mass) - lambda_m / lambda0;
}

struct ControlDecision {
  double u = 0.0;
  Vector3d direction = Vector3d::Zero();  // unit thrust direction
  bool singular = false;                  // ||lambda_v|| = 0: direction undefined
};

/// Pointwise optimal control.  A vanishing primer vector leaves the thrust
/// direction undefined; those points are flagged and treated as coasting.
inline ControlDecision control_law(const Vector3d& lambda_v, double lambda_m,
                                   double lambda0, double mass, double eps,
                                   double exhaust) {
  if (!(lambda0 > 0.0)) throw std::domain_error("control_law: lambda0 must be positive");
  ControlDecision d;
  const double lvn = lambda_v.norm();
  if (lvn == 0.0) {
    d.singular = true;
    return d;
  }
  d.u = throttle_level(switching_function(lambda_v, lambda_m, lambda0, mass, exhaust),
                       eps);
  d.direction = -lambda_v / lvn;
  return d;
}

/// Two-body acceleration plus throttled thrust, and the matching mass flow
/// (SI units; mainly a test surface for the equations of motion).
inline void thrust_dynamics(const Vector3d& r_m, const Vector3d& v_ms, double m_kg,
                            double u, const Vector3d& direction,
                            const SpacecraftConfig& craft, Vector3d& accel_out,
                            double& mdot_out, double mu = constants::mu_sun) {
  (void)v_ms;
  const double rn = r_m.norm();
  if (!(rn > 0.0) || !(m_kg > 0.0))
    throw std::domain_error("thrust_dynamics: invalid state");
  accel_out = -mu / (rn * rn * rn) * r_m + (craft.tmax_n * u / m_kg) * direction;
  mdot_out = -craft.tmax_n * u / craft.exhaust_velocity();
}

// ---------------------------------------------------------------------------
// Extremal integration
// ---------------------------------------------------------------------------

enum class SegmentMode { coast, intermediate, full };

/// State layout: [r(3), v(3), m, lambda_r(3), lambda_v(3), lambda_m].
struct ExtremalRhs {
  double thrust = 0.0;
  double exhaust = 1.0;
  double eps = 0.0;
  double lambda0 = 1.0;
  SegmentMode mode = SegmentMode::coast;
  bool force_full = false;  // max-thrust probe: throttle pinned at 1
  mutable bool singular = false;

  double rho(const Vec14& y) const {
    return 1.0 - exhaust * y.segment<3>(10).norm() / (lambda0 * y[6]) -
           y[13] / lambda0;
  }

  double throttle(const Vec14& y) const {
    if (force_full) return 1.0;
    switch (mode) {
      case SegmentMode::coast: return 0.0;
      case SegmentMode::full: return 1.0;
      case SegmentMode::intermediate:
        return std::clamp((eps - rho(y)) / (2.0 * eps), 0.0, 1.0);
    }
    return 0.0;
  }

  void operator()(double, const Vec14& y, Vec14& dy) const {
    const Vector3d r = y.segment<3>(0);
    const Vector3d v = y.segment<3>(3);
    const double m = y[6];
    const Vector3d lr = y.segment<3>(7);
    const Vector3d lv = y.segment<3>(10);

    const double r2 = r.squaredNorm();
    const double rn = std::sqrt(r2);
    const double inv_r3 = 1.0 / (r2 * rn);
    const double lvn = lv.norm();

    double u = throttle(y);
    Vector3d alpha = Vector3d::Zero();
    if (lvn > 0.0) {
      alpha = -lv / lvn;
    } else if (u > 0.0) {
      singular = true;
      u = 0.0;
    }

    dy.segment<3>(0) = v;
    dy.segment<3>(3) = -inv_r3 * r + (thrust * u / m) * alpha;
    dy[6] = -thrust * u / exhaust;
    dy.segment<3>(7) = inv_r3 * lv - (3.0 * r.dot(lv) * inv_r3 / r2) * r;
    dy.segment<3>(10) = -lr;
    dy[13] = -thrust * u * lvn / (m * m);
  }
};

/// Smoothed running cost plus the costate inner products; constant along an
/// extremal of this autonomous system, which makes it a sharp integration
/// and convergence diagnostic.
inline double hamiltonian(const ExtremalRhs& rhs, const Vec14& y, double u) {
  const Vector3d r = y.segment<3>(0);
  const Vector3d v = y.segment<3>(3);
  const double m = y[6];
  const Vector3d lr = y.segment<3>(7);
  const Vector3d lv = y.segment<3>(10);
  const double rn = r.norm();
  const double lvn = lv.norm();
  const double t_over_c = rhs.thrust / rhs.exhaust;
  return lr.dot(v) - lv.dot(r) / (rn * rn * rn) - rhs.thrust * u / m * lvn -
         y[13] * t_over_c * u +
         rhs.lambda0 * t_over_c * (u - rhs.eps * u * (1.0 - u));
}

enum class TrajFail { none, mass_floor, radius_floor, step_underflow, step_budget };

struct TrajectoryPoint {
  double t = 0.0;
  double u = 0.0;
  double rho = 0.0;
  Vec14 y = Vec14::Zero();
};

struct TrajectoryOutcome {
  bool completed = false;
  TrajFail fail = TrajFail::none;
  double t_end = 0.0;
  Vec14 y_end = Vec14::Zero();
  double burn_time = 0.0;  // integral of the throttle over the trajectory
  int switches = 0;
  bool singular = false;
  bool depleted = false;  // probe only: ran down to the dry mass and coasted
  long steps = 0;
  std::vector<TrajectoryPoint> grid;  // filled only when recording
};

namespace detail {

/// Bisect a sign change of `g` over one dense-output step.  `t_lo` is on the
/// known side, `t_hi` on the other side; returns the crossing time.
template <class G>
double locate_crossing(const DenseStep<14>& dense, G&& g, double t_lo, double t_hi) {
  const double g_lo = g(dense.eval(t_lo));
  for (int i = 0; i < 80; ++i) {
    const double tm = 0.5 * (t_lo + t_hi);
    if (tm == t_lo || tm == t_hi) break;
    const double gm = g(dense.eval(tm));
    if ((gm > 0.0) == (g_lo > 0.0))
      t_lo = tm;
    else
      t_hi = tm;
  }
  return t_hi;  // first point on the far side
}

inline SegmentMode mode_from_rho(double rho, double eps) {
  if (eps > 0.0) {
    if (rho > eps) return SegmentMode::coast;
    if (rho < -eps) return SegmentMode::full;
    return SegmentMode::intermediate;
  }
  return rho > 0.0 ? SegmentMode::coast : SegmentMode::full;
}

}  // namespace detail

/// Integrate the state/costate system over [0, tf] with event-located
/// control switches.  The throttle expression is frozen between events, and
/// every boundary crossing of the switching function (and of the dry-mass
/// floor) is located by bisection on the dense output, so the right-hand
/// side stays smooth within each accepted step.
///
/// `probe_mode` turns the dry-mass floor into a thrust cutoff (deplete and
/// coast) instead of a failure.
inline TrajectoryOutcome integrate_arcs(const ScaledProblem& sp, ExtremalRhs& rhs,
                                        const Vec14& y0, const IntegratorOptions& opts,
                                        bool record, bool probe_mode) {
  TrajectoryOutcome out;
  const double tf = sp.tf;

  // Event channels: 0 -> rho - eps, 1 -> rho + eps (smoothed problems only),
  // 2 -> m - m_dry.  Channel 0 doubles as plain rho when eps == 0.
  const bool track_rho = !rhs.force_full;
  const bool two_rho_channels = track_rho && rhs.eps > 0.0;
  const auto channel_value = [&](int ch, const Vec14& y) -> double {
    if (ch == 0) return rhs.rho(y) - rhs.eps;
    if (ch == 1) return rhs.rho(y) + rhs.eps;
    return y[6] - sp.m_dry;
  };
  int side[3] = {0, 0, 0};

  if (track_rho) {
    const double rho0 = rhs.rho(y0);
    rhs.mode = detail::mode_from_rho(rho0, rhs.eps);
    side[0] = (rho0 - rhs.eps) >= 0.0 ? 1 : -1;
    side[1] = (rho0 + rhs.eps) >= 0.0 ? 1 : -1;
  }
  side[2] = 1;  // m0 > m_dry is a precondition

  Dopri5<14, ExtremalRhs> stepper(rhs, opts);
  stepper.init(0.0, y0, tf);

  double prev_t = 0.0;
  double prev_u = rhs.throttle(y0);
  if (record) out.grid.push_back({0.0, prev_u, track_rho ? rhs.rho(y0) : 0.0, y0});

  const auto push_point = [&](double t, double u, const Vec14& y) {
    out.burn_time += 0.5 * (prev_u + u) * (t - prev_t);
    prev_t = t;
    prev_u = u;
    if (record) out.grid.push_back({t, u, track_rho ? rhs.rho(y) : 0.0, y});
  };

  DenseStep<14> dense;
  while (!stepper.finished()) {
    const StepStatus st = stepper.step(dense);
    out.steps = stepper.steps_taken();
    if (st != StepStatus::ok) {
      out.fail = st == StepStatus::step_budget ? TrajFail::step_budget
                                               : TrajFail::step_underflow;
      out.t_end = stepper.time();
      out.y_end = stepper.state();
      return out;
    }

    // Find the earliest channel crossing inside the accepted step, if any.
    const double t_hi = stepper.time();
    const Vec14& y_hi = stepper.state();
    int crossed = -1;
    double t_event = t_hi;
    for (int ch = two_rho_channels ? 1 : 0; ch >= 0 && track_rho; --ch) {
      const double g = channel_value(ch, y_hi);
      if ((g >= 0.0 ? 1 : -1) != side[ch]) {
        const double tc = detail::locate_crossing(
            dense, [&](const Vec14& y) { return channel_value(ch, y); }, dense.t, t_hi);
        if (crossed < 0 || tc < t_event) {
          t_event = tc;
          crossed = ch;
        }
      }
    }
    {
      const double g = channel_value(2, y_hi);
      if ((g >= 0.0 ? 1 : -1) != side[2]) {
        const double tc = detail::locate_crossing(
            dense, [&](const Vec14& y) { return channel_value(2, y); }, dense.t, t_hi);
        if (crossed < 0 || tc < t_event) {
          t_event = tc;
          crossed = 2;
        }
      }
    }

    if (crossed < 0) {
      push_point(t_hi, rhs.throttle(y_hi), y_hi);
      if (y_hi.segment<3>(0).norm() < sp.radius_floor) {
        out.fail = TrajFail::radius_floor;
        out.t_end = t_hi;
        out.y_end = y_hi;
        return out;
      }
      continue;
    }

    Vec14 y_event = dense.eval(t_event);
    push_point(t_event, rhs.throttle(y_event), y_event);  // closes the old segment

    if (crossed == 2) {
      if (!probe_mode) {
        out.fail = TrajFail::mass_floor;
        out.t_end = t_event;
        out.y_end = y_event;
        return out;
      }
      out.depleted = true;
      y_event[6] = sp.m_dry;  // pin to the floor; thrust is off from here on
      rhs.force_full = false;
      rhs.mode = SegmentMode::coast;
      side[2] = -1;
    } else {
      side[crossed] = -side[crossed];
      ++out.switches;
      if (rhs.eps > 0.0) {
        if (crossed == 0)
          rhs.mode = side[0] > 0 ? SegmentMode::coast : SegmentMode::intermediate;
        else
          rhs.mode = side[1] > 0 ? SegmentMode::intermediate : SegmentMode::full;
      } else {
        rhs.mode = side[0] > 0 ? SegmentMode::coast : SegmentMode::full;
      }
    }

    prev_u = rhs.throttle(y_event);  // reopen the segment with the new mode
    if (record) {
      out.grid.push_back({t_event, prev_u, track_rho ? rhs.rho(y_event) : 0.0, y_event});
    }
    stepper.reset(t_event, y_event);
  }

  out.completed = true;
  out.t_end = stepper.time();
  out.y_end = stepper.state();
  out.singular = rhs.singular;
  if (record && (out.grid.empty() || out.grid.back().t != out.t_end)) {
    out.grid.push_back(
        {out.t_end, rhs.throttle(out.y_end), track_rho ? rhs.rho(out.y_end) : 0.0,
         out.y_end});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shooting
// ---------------------------------------------------------------------------

/// Result of one evaluation of the boundary map.  `residual` is scaled so
/// that every component at magnitude <= 1 means "within tolerance": position
/// and velocity by the rendezvous tolerances, then the transversality and
/// normalization defects.
struct ShootOutput {
  Vec8 residual = Vec8::Constant(std::numeric_limits<double>::infinity());
  double pos_err = std::numeric_limits<double>::infinity();  // scaled units
  double vel_err = std::numeric_limits<double>::infinity();
  double lam_m_f = 0.0;
  double norm_defect = 0.0;
  double final_mass = 0.0;  // fraction of m0
  bool blown = false;
  TrajectoryOutcome traj;

  bool converged() const {
    return !blown && residual.lpNorm<Eigen::Infinity>() <= 1.0;
  }
};

/// Integrate the extremal defined by the initial costates
/// x = [lambda_r, lambda_v, lambda_m, lambda0] and report the boundary
/// residual.  Inadmissible trajectories (mass floor, radius floor, stiffness
/// blow-up, lambda0 <= 0) yield a penalty residual that grows the earlier
/// the failure happened, which gives the global search a usable gradient.
inline ShootOutput shoot(const ScaledProblem& sp, const Vec8& x, double eps,
                         const IntegratorOptions& opts, bool record = false) {
  ShootOutput out;
  const double lambda0 = x[7];
  if (!(lambda0 > 1e-12)) {
    out.residual.setConstant(1e9);
    out.blown = true;
    return out;
  }

  ExtremalRhs rhs;
  rhs.thrust = sp.thrust;
  rhs.exhaust = sp.exhaust;
  rhs.eps = eps;
  rhs.lambda0 = lambda0;

  Vec14 y0;
  y0.segment<3>(0) = sp.r0;
  y0.segment<3>(3) = sp.v0;
  y0[6] = 1.0;
  y0.segment<3>(7) = x.segment<3>(0);
  y0.segment<3>(10) = x.segment<3>(3);
  y0[13] = x[6];

  out.traj = integrate_arcs(sp, rhs, y0, opts, record, false);
  if (!out.traj.completed) {
    const double remaining = std::max(0.0, (sp.tf - out.traj.t_end) / sp.tf);
    out.residual.setConstant(1e8 * (1.0 + remaining));
    out.blown = true;
    return out;
  }

  const Vec14& yf = out.traj.y_end;
  const Vector3d dr = yf.segment<3>(0) - sp.rf;
  const Vector3d dv = yf.segment<3>(3) - sp.vf;
  out.pos_err = dr.norm();
  out.vel_err = dv.norm();
  out.lam_m_f = yf[13];
  out.norm_defect = x.norm() - 1.0;
  out.final_mass = yf[6];
  out.residual.segment<3>(0) = dr / sp.pos_tol;
  out.residual.segment<3>(3) = dv / sp.vel_tol;
  out.residual[6] = out.lam_m_f / sp.lam_tol;
  out.residual[7] = out.norm_defect / sp.norm_tol;
  out.blown = false;
  return out;
}

/// Search-phase merit: rendezvous error in tolerance units plus a loosely
/// weighted transversality defect.  The normalization row is omitted because
/// candidates are normalized before evaluation.
inline double shoot_merit(const ShootOutput& s) {
  if (s.blown) return s.residual[0];
  const double lam = s.lam_m_f / 1e-2;
  return std::sqrt(s.residual.segment<6>(0).squaredNorm() + lam * lam);
}

// ---------------------------------------------------------------------------
// Global search + local refinement
// ---------------------------------------------------------------------------

struct SolveOptions {
  opt::DeOptions de = [] {
    opt::DeOptions d;
    d.population = 40;
    d.max_generations = 200;
    d.weight = 0.8;
    d.crossover = 0.9;
    d.stall_generations = 40;
    d.min_generations = 60;
    d.stall_tolerance = 1e-2;
    return d;
  }();
  opt::LmOptions lm = [] {
    opt::LmOptions l;
    l.max_iterations = 50;
    l.fd_step = 1e-7;
    l.done_inf_norm = 1e-2;
    return l;
  }();
  // Primary search: damped-restart chains of the local refiner from random
  // points of the unit costate sphere.  Differential evolution only runs as
  // a fallback when every chain stalls.
  int lm_starts = 10;
  int lm_rounds = 4;
  // Hand the DE best to the local refiner every `refine_every` generations
  // once its merit is below `refine_threshold`.
  int refine_every = 10;
  double refine_threshold = 3e4;
  // Integration accuracy tiers: loose during the global search, tight for
  // refinement, tightest for the final verification pass.
  IntegratorOptions search_tol{3e-8, 3e-8, 0.0,
                               std::numeric_limits<double>::infinity(), 40000};
  IntegratorOptions refine_tol{1e-11, 1e-11, 0.0,
                               std::numeric_limits<double>::infinity(), 400000};
  IntegratorOptions verify_tol{1e-12, 1e-12, 0.0,
                               std::numeric_limits<double>::infinity(), 2000000};
  // Smoothing continuation schedule after the eps = 1 solve, with adaptive
  // bisection between consecutive targets down to `min_eps_step`.
  std::vector<double> eps_schedule{0.8, 0.6, 0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.0};
  double min_eps_step = 1e-4;
};

struct SolveStats {
  long shoot_evaluations = 0;
  int de_generations = 0;
  int lm_iterations = 0;
  int homotopy_steps = 0;
};

/// Fold a raw search vector onto the admissible unit sphere: unit norm with
/// lambda0 >= 0.
inline std::optional<Vec8> normalized_costates(const Eigen::VectorXd& raw) {
  if (raw.size() != 8) throw std::invalid_argument("normalized_costates: need 8 values");
  const double n = raw.norm();
  if (!(n > 1e-10)) return std::nullopt;
  Vec8 x = raw / n;
  x[7] = std::abs(x[7]);
  return x;
}

struct EnergyAttempt {
  bool converged = false;
  Vec8 costates = Vec8::Zero();
  ShootOutput verified;  // at verify_tol when converged
  SolveStats stats;
  // Set when several independent refiner chains stall at the same residual
  // floor well above tolerance: the strongest signature of an unreachable
  // target, where further costate search is futile.
  bool futile = false;
};

/// Refine costates at a fixed smoothing level with the tight integration
/// tier.  Returns the LM result; convergence means every scaled residual
/// component is within tolerance.
inline opt::LmResult refine_costates(const ScaledProblem& sp, const Vec8& x0, double eps,
                                     const SolveOptions& so, SolveStats& stats) {
  const auto residual_fn = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    ++stats.shoot_evaluations;
    Vec8 x8 = x;
    return shoot(sp, x8, eps, so.refine_tol).residual;
  };
  opt::LmOptions lm = so.lm;
  lm.done_inf_norm = std::min(lm.done_inf_norm, 1e-2);
  opt::LmResult res = opt::levenberg_marquardt(residual_fn, Eigen::VectorXd(x0), lm);
  stats.lm_iterations += res.iterations;
  return res;
}

/// Solve the smoothed (eps = 1) two-point boundary value problem from a cold
/// start.  The primary search chains the local refiner from random points of
/// the unit costate sphere (each restart resets the damping); differential
/// evolution with periodic refinement only runs when every chain stalls.
/// Success always means a verification pass at the tightest tier.
inline EnergyAttempt solve_energy_optimal(const ScaledProblem& sp, std::uint64_t seed,
                                          const SolveOptions& so) {
  EnergyAttempt attempt;
  Rng rng(seed);

  const auto merit_fn = [&](const Eigen::VectorXd& raw) -> double {
    const auto x = normalized_costates(raw);
    if (!x) return 1e10;
    ++attempt.stats.shoot_evaluations;
    return shoot_merit(shoot(sp, *x, 1.0, so.search_tol));
  };

  const auto try_refine = [&](const Eigen::VectorXd& raw) -> double {
    const auto x = normalized_costates(raw);
    if (!x) return std::numeric_limits<double>::infinity();
    Vec8 xc = *x;
    opt::LmResult lm;
    double inf_prev = std::numeric_limits<double>::infinity();
    for (int round = 0; round < std::max(1, so.lm_rounds); ++round) {
      lm = refine_costates(sp, xc, 1.0, so, attempt.stats);
      xc = lm.x;
      if (lm.inf_norm <= so.lm.done_inf_norm) break;
      if (lm.inf_norm > 0.9 * inf_prev) break;  // chain no longer making progress
      inf_prev = lm.inf_norm;
    }
    if (lm.inf_norm > 1.0) return lm.inf_norm;
    const ShootOutput verified = shoot(sp, xc, 1.0, so.verify_tol);
    ++attempt.stats.shoot_evaluations;
    if (!verified.converged()) return lm.inf_norm;
    attempt.converged = true;
    attempt.costates = xc;
    attempt.verified = verified;
    return lm.inf_norm;
  };

  std::vector<double> floors;
  for (int s = 0; s < so.lm_starts; ++s) {
    Eigen::VectorXd raw(8);
    for (int j = 0; j < 8; ++j) raw[j] = rng.normal();
    const double floor = try_refine(raw);
    if (attempt.converged) return attempt;
    if (std::isfinite(floor)) floors.push_back(floor);
    const std::size_t n = floors.size();
    if (n >= 3) {
      const double lo = std::min({floors[n - 3], floors[n - 2], floors[n - 1]});
      const double hi = std::max({floors[n - 3], floors[n - 2], floors[n - 1]});
      if (lo > 10.0 && hi <= 1.05 * lo) {
        attempt.futile = true;
        return attempt;
      }
    }
  }

  double last_refined_merit = std::numeric_limits<double>::infinity();
  const auto on_generation = [&](int gen, const Eigen::VectorXd& best,
                                 double best_value) -> bool {
    attempt.stats.de_generations = gen;
    if (gen % so.refine_every != 0) return false;
    if (best_value >= so.refine_threshold) return false;
    if (best_value >= 0.98 * last_refined_merit) return false;
    last_refined_merit = best_value;
    return try_refine(best);
  };

  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(8, -1.0);
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(8, 1.0);
  const opt::DeResult de =
      differential_evolution(merit_fn, lower, upper, rng, so.de, on_generation);
  attempt.stats.de_generations = de.generations;

  if (!attempt.converged && de.best_value < so.refine_threshold) try_refine(de.best);
  return attempt;
}

struct HomotopyOutcome {
  bool success = false;
  Vec8 costates = Vec8::Zero();
  ShootOutput verified;  // at eps = 0 when successful
  double eps_reached = 1.0;
  SolveStats stats;
};

/// Continue a converged eps = 1 extremal down the smoothing schedule to the
/// bang-bang problem.  A failed step is bisected against the last converged
/// level; the path is abandoned once the step falls below `min_eps_step`.
inline HomotopyOutcome continue_to_bang_bang(const ScaledProblem& sp,
                                             const Vec8& from_energy,
                                             const SolveOptions& so) {
  HomotopyOutcome out;
  Vec8 x = from_energy;
  double eps_prev = 1.0;

  std::deque<double> targets(so.eps_schedule.begin(), so.eps_schedule.end());
  while (!targets.empty()) {
    const double eps_t = targets.front();
    ++out.stats.homotopy_steps;
    if (out.stats.homotopy_steps > 400) break;  // defensive cap

    const opt::LmResult lm = refine_costates(sp, x, eps_t, so, out.stats);
    if (lm.inf_norm <= 1.0) {
      x = lm.x;
      eps_prev = eps_t;
      targets.pop_front();
      continue;
    }
    if (eps_prev - eps_t <= so.min_eps_step) {
      out.eps_reached = eps_prev;
      return out;
    }
    targets.push_front(0.5 * (eps_prev + eps_t));
  }

  out.eps_reached = eps_prev;
  if (eps_prev != 0.0) return out;

  const ShootOutput verified = shoot(sp, x, 0.0, so.verify_tol);
  ++out.stats.shoot_evaluations;
  if (!verified.converged()) return out;
  out.success = true;
  out.costates = x;
  out.verified = verified;
  return out;
}

// ---------------------------------------------------------------------------
// Max-thrust reachability probe
// ---------------------------------------------------------------------------

struct ProbeOutcome {
  bool reaches = false;
  double pos_err_m = std::numeric_limits<double>::infinity();
  double vel_err_ms = std::numeric_limits<double>::infinity();
  Vec6 costates = Vec6::Zero();
  bool depleted = false;
  SolveStats stats;
};

namespace detail {

inline Eigen::VectorXd probe_residual(const ScaledProblem& sp, const Vec6& x,
                                      const IntegratorOptions& opts,
                                      TrajectoryOutcome* traj_out = nullptr) {
  ExtremalRhs rhs;
  rhs.thrust = sp.thrust;
  rhs.exhaust = sp.exhaust;
  rhs.force_full = true;

  Vec14 y0;
  y0.segment<3>(0) = sp.r0;
  y0.segment<3>(3) = sp.v0;
  y0[6] = 1.0;
  y0.segment<3>(7) = x.segment<3>(0);
  y0.segment<3>(10) = x.segment<3>(3);
  y0[13] = 0.0;

  TrajectoryOutcome traj = integrate_arcs(sp, rhs, y0, opts, false, true);
  Eigen::VectorXd r(7);
  if (!traj.completed) {
    r.setConstant(1e8 * (1.0 + std::max(0.0, (sp.tf - traj.t_end) / sp.tf)));
  } else {
    r.segment<3>(0) = (traj.y_end.segment<3>(0) - sp.rf) / sp.pos_tol;
    r.segment<3>(3) = (traj.y_end.segment<3>(3) - sp.vf) / sp.vel_tol;
    r[6] = (x.norm() - 1.0) / sp.norm_tol;
  }
  if (traj_out) *traj_out = std::move(traj);
  return r;
}

}  // namespace detail

/// Best-effort rendezvous at full throttle: search the 6-dimensional primer
/// direction sphere for the thrust program that minimizes the terminal
/// error, with the tank running dry forcing a terminal coast.  If even this
/// program misses the target by more than the rendezvous tolerances, no
/// admissible control reaches it.
inline ProbeOutcome max_thrust_probe(const ScaledProblem& sp, std::uint64_t seed,
                                     const SolveOptions& so) {
  ProbeOutcome out;
  Rng rng(seed);

  const auto normalize6 = [](const Eigen::VectorXd& raw) -> std::optional<Vec6> {
    const double n = raw.norm();
    if (!(n > 1e-10)) return std::nullopt;
    return Vec6(raw / n);
  };

  const auto merit_fn = [&](const Eigen::VectorXd& raw) -> double {
    const auto x = normalize6(raw);
    if (!x) return 1e10;
    ++out.stats.shoot_evaluations;
    const Eigen::VectorXd r = detail::probe_residual(sp, *x, so.search_tol);
    return r.segment<6>(0).norm();
  };

  Vec6 best_x = Vec6::Zero();
  double best_err2 = std::numeric_limits<double>::infinity();
  bool have_best = false;

  const auto polish = [&](const Eigen::VectorXd& raw) -> bool {
    const auto x0 = normalize6(raw);
    if (!x0) return false;
    const auto residual_fn = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      ++out.stats.shoot_evaluations;
      Vec6 x6 = x;
      return detail::probe_residual(sp, x6, so.refine_tol);
    };
    Vec6 xc = *x0;
    opt::LmResult lm;
    double inf_prev = std::numeric_limits<double>::infinity();
    for (int round = 0; round < std::max(1, so.lm_rounds); ++round) {
      lm = opt::levenberg_marquardt(residual_fn, Eigen::VectorXd(xc), so.lm);
      out.stats.lm_iterations += lm.iterations;
      xc = lm.x;
      if (lm.inf_norm <= so.lm.done_inf_norm) break;
      if (lm.inf_norm > 0.9 * inf_prev) break;
      inf_prev = lm.inf_norm;
    }

    TrajectoryOutcome traj;
    const Eigen::VectorXd rv = detail::probe_residual(sp, xc, so.verify_tol, &traj);
    ++out.stats.shoot_evaluations;
    if (!traj.completed) return false;
    const double err2 = rv.segment<6>(0).squaredNorm();
    if (!have_best || err2 < best_err2) {
      have_best = true;
      best_err2 = err2;
      best_x = xc;
      out.pos_err_m = rv.segment<3>(0).norm() * sp.pos_tol * sp.scales.length;
      out.vel_err_ms = rv.segment<3>(3).norm() * sp.vel_tol * sp.scales.velocity();
      out.depleted = traj.depleted;
      out.reaches = rv.segment<3>(0).norm() <= 1.0 && rv.segment<3>(3).norm() <= 1.0;
    }
    return out.reaches;
  };

  for (int s = 0; s < so.lm_starts && !out.reaches; ++s) {
    Eigen::VectorXd raw(6);
    for (int j = 0; j < 6; ++j) raw[j] = rng.normal();
    polish(raw);
  }
  if (out.reaches) {
    out.costates = best_x;
    return out;
  }

  double last_polished = std::numeric_limits<double>::infinity();
  const auto on_generation = [&](int gen, const Eigen::VectorXd& best,
                                 double best_value) -> bool {
    out.stats.de_generations = gen;
    if (gen % so.refine_every != 0) return false;
    if (best_value >= 0.98 * last_polished) return false;
    last_polished = best_value;
    return polish(best);
  };

  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(6, -1.0);
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(6, 1.0);
  const opt::DeResult de =
      differential_evolution(merit_fn, lower, upper, rng, so.de, on_generation);
  out.stats.de_generations = de.generations;

  if (!out.reaches) polish(de.best);
  out.costates = best_x;
  return out;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// One point of the optimal control history, in SI units.
struct ControlPoint {
  double t_s = 0.0;
  double throttle = 0.0;
  Vector3d direction = Vector3d::Zero();
  double switching = 0.0;
  double hamiltonian = 0.0;  // nondimensional
  double mass_kg = 0.0;
};

/// A verified fuel-optimal extremal.
struct ExtremalSolution {
  Vec8 costates0 = Vec8::Zero();  // [lambda_r, lambda_v, lambda_m, lambda0], unit norm
  double final_mass_kg = 0.0;
  double pos_residual_m = 0.0;
  double vel_residual_ms = 0.0;
  double lambda_m_final = 0.0;
  double norm_defect = 0.0;
  double burn_time_s = 0.0;          // total thrusting time
  double fuel_quadrature_kg = 0.0;   // Tmax/(Isp*g0) * burn time
  int switches = 0;
  std::vector<ControlPoint> history;
};

struct ClassifyOptions {
  SolveOptions solve;
  int attempts = 3;  // cold-start tries before giving up on the extremal
};

struct TransferOutcome {
  TransferLabel label = TransferLabel::infeasible;
  std::optional<ExtremalSolution> solution;  // present iff label == optimal
  double mf_max_kg = std::numeric_limits<double>::quiet_NaN();
  int attempts_used = 0;
  bool energy_converged = false;  // some attempt solved the smoothed problem
  std::optional<ProbeOutcome> probe;
  SolveStats stats;
};

namespace detail {

inline ExtremalSolution build_solution(const ScaledProblem& sp, const Vec8& x,
                                       const ShootOutput& verified) {
  ExtremalSolution sol;
  sol.costates0 = x;
  sol.final_mass_kg = verified.final_mass * sp.scales.mass;
  sol.pos_residual_m = verified.pos_err * sp.scales.length;
  sol.vel_residual_ms = verified.vel_err * sp.scales.velocity();
  sol.lambda_m_final = verified.lam_m_f;
  sol.norm_defect = verified.norm_defect;
  sol.burn_time_s = verified.traj.burn_time * sp.scales.time;
  sol.fuel_quadrature_kg =
      sp.thrust / sp.exhaust * verified.traj.burn_time * sp.scales.mass;
  sol.switches = verified.traj.switches;

  ExtremalRhs rhs;
  rhs.thrust = sp.thrust;
  rhs.exhaust = sp.exhaust;
  rhs.eps = 0.0;
  rhs.lambda0 = x[7];
  sol.history.reserve(verified.traj.grid.size());
  for (const TrajectoryPoint& p : verified.traj.grid) {
    ControlPoint c;
    c.t_s = p.t * sp.scales.time;
    c.throttle = p.u;
    const Vector3d lv = p.y.segment<3>(10);
    const double lvn = lv.norm();
    if (lvn > 0.0) c.direction = -lv / lvn;
    c.switching = p.rho;
    c.hamiltonian = hamiltonian(rhs, p.y, p.u);
    c.mass_kg = p.y[6] * sp.scales.mass;
    sol.history.push_back(c);
  }
  return sol;
}

}  // namespace detail

/// Label a transfer problem.  Up to `attempts` cold-started global solves of
/// the smoothed problem, each continued toward bang-bang on success.  When
/// no fuel-optimal extremal is found, the max-thrust probe separates targets
/// that are unreachable outright (infeasible) from solver failures worth a
/// retry with different seeds (homotopy_failed).
///
/// `warm_start`, when given, is tried first directly on the bang-bang
/// problem; sweeps over slowly varying parameters use it to ride a known
/// solution branch instead of re-running the global search at every point.
inline TransferOutcome classify_transfer(const TransferProblem& problem,
                                         std::uint64_t seed,
                                         const ClassifyOptions& co = {},
                                         const Vec8* warm_start = nullptr) {
  const ScaledProblem sp = scale_problem(problem);
  TransferOutcome out;

  const auto accept = [&](const Vec8& x, const ShootOutput& verified) {
    out.label = TransferLabel::optimal;
    out.solution = detail::build_solution(sp, x, verified);
    out.mf_max_kg = out.solution->final_mass_kg;
  };

  if (warm_start) {
    SolveStats stats;
    const opt::LmResult lm = refine_costates(sp, *warm_start, 0.0, co.solve, stats);
    out.stats.shoot_evaluations += stats.shoot_evaluations;
    out.stats.lm_iterations += stats.lm_iterations;
    if (lm.inf_norm <= 1.0) {
      Vec8 x = lm.x;
      const ShootOutput verified = shoot(sp, x, 0.0, co.solve.verify_tol, true);
      ++out.stats.shoot_evaluations;
      if (verified.converged()) {
        accept(x, verified);
        return out;
      }
    }
  }

  int futile_attempts = 0;
  for (int k = 0; k < co.attempts; ++k) {
    out.attempts_used = k + 1;
    const EnergyAttempt energy =
        solve_energy_optimal(sp, derive_seed(seed, static_cast<std::uint64_t>(k)),
                             co.solve);
    out.stats.shoot_evaluations += energy.stats.shoot_evaluations;
    out.stats.de_generations += energy.stats.de_generations;
    out.stats.lm_iterations += energy.stats.lm_iterations;
    if (energy.futile && ++futile_attempts >= 2) break;
    if (!energy.converged) continue;
    out.energy_converged = true;

    HomotopyOutcome path = continue_to_bang_bang(sp, energy.costates, co.solve);
    out.stats.shoot_evaluations += path.stats.shoot_evaluations;
    out.stats.lm_iterations += path.stats.lm_iterations;
    out.stats.homotopy_steps += path.stats.homotopy_steps;
    if (!path.success) continue;

    const ShootOutput recorded = shoot(sp, path.costates, 0.0, co.solve.verify_tol, true);
    ++out.stats.shoot_evaluations;
    if (!recorded.converged()) continue;
    accept(path.costates, recorded);
    return out;
  }

  if (out.energy_converged) {
    // The smoothed problem is solvable, so the target is reachable; only the
    // continuation failed.  Callers treat this as a retryable failure.
    out.label = TransferLabel::homotopy_failed;
    return out;
  }

  const ProbeOutcome probe =
      max_thrust_probe(sp, derive_seed(seed, 1000), co.solve);
  out.stats.shoot_evaluations += probe.stats.shoot_evaluations;
  out.stats.de_generations += probe.stats.de_generations;
  out.stats.lm_iterations += probe.stats.lm_iterations;
  out.probe = probe;
  out.label = probe.reaches ? TransferLabel::homotopy_failed : TransferLabel::infeasible;
  return out;
}

/// Fraction of the transfer spent at intermediate throttle (between 1% and
/// 99%); a converged bang-bang solution should spend essentially none.
inline double intermediate_throttle_fraction(const ExtremalSolution& sol) {
  if (sol.history.size() < 2) return 0.0;
  double mid = 0.0;
  const double total = sol.history.back().t_s - sol.history.front().t_s;
  if (!(total > 0.0)) return 0.0;
  // Event boundaries appear twice in the history (pre/post throttle), so the
  // throttle at the left endpoint is exact over each interval.
  for (std::size_t i = 0; i + 1 < sol.history.size(); ++i) {
    const double u = sol.history[i].throttle;
    if (u > 0.01 && u < 0.99) mid += sol.history[i + 1].t_s - sol.history[i].t_s;
  }
  return mid / total;
}

/// Largest relative deviation of the Hamiltonian from its trajectory mean.
inline double hamiltonian_drift(const ExtremalSolution& sol) {
  if (sol.history.empty()) return 0.0;
  double mean = 0.0, mean_abs = 0.0;
  for (const ControlPoint& p : sol.history) {
    mean += p.hamiltonian;
    mean_abs += std::abs(p.hamiltonian);
  }
  mean /= static_cast<double>(sol.history.size());
  mean_abs /= static_cast<double>(sol.history.size());
  double worst = 0.0;
  for (const ControlPoint& p : sol.history)
    worst = std::max(worst, std::abs(p.hamiltonian - mean));
  return worst / std::max(mean_abs, 1e-12);
}

}  // namespace ltx::optctl
