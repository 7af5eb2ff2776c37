#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ltx/constants.hpp"
#include "ltx/problem.hpp"

namespace ltx::lambert {

using Eigen::Vector3d;

/// Transfer geometry too close to a 180-degree transfer angle: the orbit
/// plane is undefined there, so the caller should draw a different target.
struct DegenerateGeometry : std::domain_error {
  using std::domain_error::domain_error;
};

/// Root search on the time-of-flight equation failed to meet tolerance.
struct NoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Direction { prograde, retrograde };

struct LambertSolution {
  Vector3d v1 = Vector3d::Zero();  // departure velocity [m/s]
  Vector3d v2 = Vector3d::Zero();  // arrival velocity [m/s]
  double transfer_angle = 0.0;     // [rad], in (0, 2*pi)
  int iterations = 0;
};

namespace detail {

/// Stumpff functions C(z) and S(z); series expansion near zero keeps them
/// smooth through the parabolic boundary.
inline void stumpff(double z, double& c, double& s) {
  if (std::abs(z) < 1e-6) {
    c = 1.0 / 2.0 - z / 24.0 + z * z / 720.0 - z * z * z / 40320.0;
    s = 1.0 / 6.0 - z / 120.0 + z * z / 5040.0 - z * z * z / 362880.0;
  } else if (z > 0.0) {
    const double sq = std::sqrt(z);
    c = (1.0 - std::cos(sq)) / z;
    s = (sq - std::sin(sq)) / (sq * z);
  } else {
    const double sq = std::sqrt(-z);
    c = (std::cosh(sq) - 1.0) / (-z);
    s = (std::sinh(sq) - sq) / (sq * (-z));
  }
}

}  // namespace detail

/// Zero-revolution Lambert solver, universal-variable formulation.  Works in
/// units scaled by ||r1|| so the root search is well conditioned, and
/// bisects the monotone time-of-flight curve in z, which is slower than a
/// pure Newton iteration but immune to the flat/steep ends of the curve.
/// Tolerance is 1e-10 (relative) on the nondimensional time of flight.
inline LambertSolution lambert_solve(const Vector3d& r1_m, const Vector3d& r2_m,
                                     double dt_s, Direction dir = Direction::prograde,
                                     double mu = constants::mu_sun) {
  if (!(dt_s > 0.0)) throw std::invalid_argument("lambert_solve: dt must be positive");
  const double r1n_m = r1_m.norm();
  const double r2n_m = r2_m.norm();
  if (!(r1n_m > 0.0) || !(r2n_m > 0.0))
    throw std::invalid_argument("lambert_solve: zero-length position");

  // Transfer angle from the requested motion sense.  The chord form of
  // 1 - cos keeps the geometry factor accurate for small angles.
  const Vector3d u1 = r1_m / r1n_m;
  const Vector3d u2 = r2_m / r2n_m;
  const Vector3d cross = u1.cross(u2);
  double dnu = std::atan2(cross.norm(), u1.dot(u2));
  double sin_dnu = cross.norm();
  if (dir == Direction::prograde ? (cross.z() < 0.0) : (cross.z() >= 0.0)) {
    dnu = constants::two_pi - dnu;
    sin_dnu = -sin_dnu;
  }
  if (std::abs(dnu - constants::pi) < 1e-6)
    throw DegenerateGeometry("lambert_solve: transfer angle within 1e-6 of pi");
  const double one_minus_cos = 0.5 * (u1 - u2).squaredNorm();
  if (!(one_minus_cos > 0.0))
    throw DegenerateGeometry("lambert_solve: coincident positions");

  // Scale lengths by ||r1|| and time so that mu = 1.
  const double lu = r1n_m;
  const double tu = std::sqrt(lu * lu * lu / mu);
  const double r1 = 1.0;
  const double r2 = r2n_m / lu;
  const double t_flight = dt_s / tu;

  const double a_geom = sin_dnu * std::sqrt(r1 * r2 / one_minus_cos);
  if (!(std::abs(a_geom) > 0.0))
    throw DegenerateGeometry("lambert_solve: coincident positions");

  double y = 0.0;
  const auto tof = [&](double z) {
    double c, s;
    detail::stumpff(z, c, s);
    // c underflows to zero only against the full-revolution pole, where the
    // flight time diverges to +infinity for every geometry
    if (!(c > 0.0)) return t_flight;
    y = r1 + r2 + a_geom * (z * s - 1.0) / std::sqrt(c);
    if (!(y > 0.0)) return -t_flight;  // below the valid domain: reads as "too fast"
    return std::pow(y / c, 1.5) * s + a_geom * std::sqrt(y) - t_flight;
  };

  // The flight time is monotone increasing in z on the valid domain, with a
  // pole at z = 4*pi^2 (one full revolution).  Bracket, then bisect.
  double z_hi = 4.0 * constants::pi * constants::pi * (1.0 - 1e-12);
  double z_lo = -4.0 * constants::pi * constants::pi;
  int iterations = 0;
  while (tof(z_lo) > 0.0) {
    z_lo *= 2.0;
    if (++iterations > 60 || z_lo < -1e8)
      throw NoConvergence("lambert_solve: could not bracket the flight time");
  }
  if (tof(z_hi) < 0.0)
    throw NoConvergence("lambert_solve: flight time exceeds the zero-revolution range");

  double z = 0.0, f = 0.0;
  for (int it = 0; it < 220; ++it) {
    z = 0.5 * (z_lo + z_hi);
    f = tof(z);
    ++iterations;
    if (std::abs(f) <= 1e-12 * std::max(1.0, t_flight) ||
        (z_hi - z_lo) <= 1e-15 * std::max(1.0, std::abs(z)))
      break;
    (f < 0.0 ? z_lo : z_hi) = z;
  }
  f = tof(z);  // refresh y for the selected root
  if (std::abs(f) > 1e-10 * std::max(1.0, t_flight))
    throw NoConvergence("lambert_solve: time-of-flight residual above tolerance");

  // Lagrange coefficients give both terminal velocities.
  const double f_lag = 1.0 - y / r1;
  const double g_lag = a_geom * std::sqrt(y);
  const double gdot_lag = 1.0 - y / r2;
  if (!(std::abs(g_lag) > 0.0))
    throw NoConvergence("lambert_solve: vanishing Lagrange g coefficient");

  const Vector3d r1s = r1_m / lu;
  const Vector3d r2s = r2_m / lu;
  const double vu = lu / tu;
  LambertSolution sol;
  sol.v1 = (r2s - f_lag * r1s) / g_lag * vu;
  sol.v2 = (gdot_lag * r2s - r1s) / g_lag * vu;
  sol.transfer_angle = dnu;
  sol.iterations = iterations;
  return sol;
}

/// Total impulsive cost of the two-burn rendezvous that shadows a low-thrust
/// transfer problem: match the Lambert arc at departure and the target
/// velocity at arrival.
inline double lambert_delta_v(const TransferProblem& problem,
                              double mu = constants::mu_sun) {
  const astro::CartesianState s0 = problem.initial_state();
  const LambertSolution arc =
      lambert_solve(s0.r, problem.target_r, problem.dt_s, Direction::prograde, mu);
  return (arc.v1 - s0.v).norm() + (problem.target_v - arc.v2).norm();
}

/// Rocket-equation mass remaining after an impulsive budget `dv_ms`.
inline double impulsive_final_mass(double m0_kg, double dv_ms, double isp_s) {
  if (!(m0_kg > 0.0)) throw std::invalid_argument("impulsive_final_mass: bad mass");
  if (dv_ms < 0.0) throw std::invalid_argument("impulsive_final_mass: negative dv");
  return m0_kg * std::exp(-dv_ms / (isp_s * constants::g0));
}

/// Impulsive feasibility heuristic: the budget must not exceed a fraction c
/// of the velocity increment the engine could deliver at full thrust over
/// the whole window at the initial mass.
inline bool impulsive_feasible(double dv_ms, double dt_s, double tmax_n, double m0_kg,
                               double c) {
  return dv_ms < c * dt_s * tmax_n / m0_kg;
}

/// One labeled transfer reduced to what the heuristic needs.
struct HeuristicCase {
  double dv_ms = 0.0;
  double dt_s = 0.0;
  double tmax_n = 0.0;
  double m0_kg = 0.0;
  bool feasible = false;  // ground-truth label
};

/// Correct-classification rate of the heuristic for every c in `c_grid`.
inline std::vector<double> sweep_c(const std::vector<HeuristicCase>& cases,
                                   const std::vector<double>& c_grid) {
  if (cases.empty()) throw std::invalid_argument("sweep_c: empty test set");
  std::vector<double> rate(c_grid.size(), 0.0);
  for (std::size_t k = 0; k < c_grid.size(); ++k) {
    long correct = 0;
    for (const auto& tc : cases) {
      const bool guess =
          impulsive_feasible(tc.dv_ms, tc.dt_s, tc.tmax_n, tc.m0_kg, c_grid[k]);
      if (guess == tc.feasible) ++correct;
    }
    rate[k] = static_cast<double>(correct) / static_cast<double>(cases.size());
  }
  return rate;
}

}  // namespace ltx::lambert
