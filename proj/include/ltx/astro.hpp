#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "ltx/constants.hpp"

namespace ltx::astro {

using Eigen::Matrix3d;
using Eigen::Vector3d;

/// Classical elements of an elliptic heliocentric orbit.
/// Lengths in meters, angles in radians normalized to [0, 2*pi).
struct OrbitElements {
  double a = 0.0;     // semi-major axis [m]
  double e = 0.0;     // eccentricity
  double i = 0.0;     // inclination [rad]
  double raan = 0.0;  // right ascension of the ascending node [rad]
  double argp = 0.0;  // argument of perihelion [rad]
  double ta = 0.0;    // true anomaly [rad]
};

/// Inertial position/velocity pair [m, m/s].
struct CartesianState {
  Vector3d r = Vector3d::Zero();
  Vector3d v = Vector3d::Zero();
};

/// Below these thresholds the node line / periapsis direction is treated as
/// undefined and folded into the remaining angles.
inline constexpr double eccentricity_tie_break = 1e-8;
inline constexpr double inclination_tie_break = 1e-8;  // [rad]

inline double wrap_two_pi(double angle) {
  double w = std::fmod(angle, constants::two_pi);
  if (w < 0.0) w += constants::two_pi;
  return w;
}

/// Solve Kepler's equation E - e*sin(E) = M for the eccentric anomaly.
/// Newton iteration seeded at M + e*sin(M); if 25 Newton steps have not met
/// `tol` on the residual, falls back to bisection on [M - e, M + e], where
/// the residual is monotone and brackets the root.
inline double solve_kepler(double mean_anomaly, double e, double tol = 1e-13) {
  if (!(e >= 0.0 && e < 1.0))
    throw std::domain_error("solve_kepler: eccentricity must lie in [0, 1)");
  if (!(tol > 0.0)) throw std::invalid_argument("solve_kepler: tol must be positive");

  const double m = wrap_two_pi(mean_anomaly);
  double eca = m + e * std::sin(m);
  for (int iter = 0; iter < 25; ++iter) {
    const double f = eca - e * std::sin(eca) - m;
    if (std::abs(f) <= tol) return eca;
    eca -= f / (1.0 - e * std::cos(eca));
  }

  double lo = m - e;
  double hi = m + e;
  for (int iter = 0; iter < 200; ++iter) {
    eca = 0.5 * (lo + hi);
    const double f = eca - e * std::sin(eca) - m;
    if (std::abs(f) <= tol) return eca;
    (f < 0.0 ? lo : hi) = eca;
  }
  throw std::runtime_error("solve_kepler: no convergence");
}

inline double true_to_eccentric(double ta, double e) {
  return 2.0 * std::atan2(std::sqrt(1.0 - e) * std::sin(0.5 * ta),
                          std::sqrt(1.0 + e) * std::cos(0.5 * ta));
}

inline double eccentric_to_true(double ea, double e) {
  return 2.0 * std::atan2(std::sqrt(1.0 + e) * std::sin(0.5 * ea),
                          std::sqrt(1.0 - e) * std::cos(0.5 * ea));
}

inline double eccentric_to_mean(double ea, double e) { return ea - e * std::sin(ea); }

inline double mean_motion(double a, double mu = constants::mu_sun) {
  return std::sqrt(mu / (a * a * a));
}

inline double orbital_period(double a, double mu = constants::mu_sun) {
  return constants::two_pi / mean_motion(a, mu);
}

/// Rotation taking perifocal coordinates to the inertial frame.
inline Matrix3d perifocal_to_inertial(const OrbitElements& ele) {
  using Eigen::AngleAxisd;
  return (AngleAxisd(ele.raan, Vector3d::UnitZ()) *
          AngleAxisd(ele.i, Vector3d::UnitX()) *
          AngleAxisd(ele.argp, Vector3d::UnitZ()))
      .toRotationMatrix();
}

/// Elements -> inertial state.  Requires an elliptic set (a > 0, 0 <= e < 1).
inline CartesianState elements_to_cartesian(const OrbitElements& ele,
                                            double mu = constants::mu_sun) {
  if (!(ele.a > 0.0) || !(ele.e >= 0.0) || !(ele.e < 1.0))
    throw std::domain_error("elements_to_cartesian: elements are not elliptic");

  const double p = ele.a * (1.0 - ele.e * ele.e);
  const double cf = std::cos(ele.ta);
  const double sf = std::sin(ele.ta);
  const double r_mag = p / (1.0 + ele.e * cf);
  const Vector3d r_pqw(r_mag * cf, r_mag * sf, 0.0);
  const double v_scale = std::sqrt(mu / p);
  const Vector3d v_pqw(-v_scale * sf, v_scale * (ele.e + cf), 0.0);

  const Matrix3d rot = perifocal_to_inertial(ele);
  return {rot * r_pqw, rot * v_pqw};
}

namespace detail {

/// Signed in-plane angle from `u` to `w` measured about `axis` (unit normal).
inline double angle_about(const Vector3d& u, const Vector3d& w, const Vector3d& axis) {
  return std::atan2(u.cross(w).dot(axis), u.dot(w));
}

}  // namespace detail

/// Inertial state -> elements.  Throws std::domain_error for parabolic,
/// hyperbolic, or rectilinear states.  Near-circular orbits get argp = 0 with
/// the phase carried by the true anomaly; near-equatorial orbits get raan = 0
/// with the node direction replaced by +x.
inline OrbitElements cartesian_to_elements(const CartesianState& state,
                                           double mu = constants::mu_sun) {
  const double r_mag = state.r.norm();
  if (!(r_mag > 0.0)) throw std::domain_error("cartesian_to_elements: zero radius");

  const double energy = 0.5 * state.v.squaredNorm() - mu / r_mag;
  if (!(energy < 0.0))
    throw std::domain_error("cartesian_to_elements: state is not elliptic");

  const Vector3d h = state.r.cross(state.v);
  const double h_mag = h.norm();
  if (!(h_mag > 0.0))
    throw std::domain_error("cartesian_to_elements: rectilinear trajectory");

  const Vector3d e_vec = state.v.cross(h) / mu - state.r / r_mag;
  const double e = e_vec.norm();
  if (!(e < 1.0))
    throw std::domain_error("cartesian_to_elements: state is not elliptic");

  OrbitElements ele;
  ele.a = -mu / (2.0 * energy);
  ele.e = e;
  ele.i = std::acos(std::clamp(h.z() / h_mag, -1.0, 1.0));

  const Vector3d h_hat = h / h_mag;
  const bool near_circular = e < eccentricity_tie_break;
  const bool near_equatorial = ele.i < inclination_tie_break;

  Vector3d node(-h.y(), h.x(), 0.0);  // z_hat x h
  Vector3d ref;                       // direction the periapsis angle is measured from
  if (near_equatorial) {
    ele.raan = 0.0;
    ref = Vector3d::UnitX();
  } else {
    ele.raan = wrap_two_pi(std::atan2(node.y(), node.x()));
    ref = node.normalized();
  }

  if (near_circular) {
    ele.argp = 0.0;
    ele.ta = wrap_two_pi(detail::angle_about(ref, state.r, h_hat));
  } else {
    const Vector3d e_hat = e_vec / e;
    ele.argp = wrap_two_pi(detail::angle_about(ref, e_hat, h_hat));
    ele.ta = wrap_two_pi(detail::angle_about(e_hat, state.r, h_hat));
  }
  return ele;
}

/// Two-body coast: advance the true anomaly by `dt_s` of Keplerian motion.
/// All other elements are preserved exactly.  Requires dt_s >= 0.
inline OrbitElements propagate_kepler(const OrbitElements& ele, double dt_s,
                                      double mu = constants::mu_sun,
                                      double kepler_tol = 1e-13) {
  if (dt_s < 0.0) throw std::invalid_argument("propagate_kepler: dt must be non-negative");
  const double ea0 = true_to_eccentric(ele.ta, ele.e);
  const double ma = eccentric_to_mean(ea0, ele.e) + mean_motion(ele.a, mu) * dt_s;
  const double ea = solve_kepler(ma, ele.e, kepler_tol);
  OrbitElements out = ele;
  out.ta = wrap_two_pi(eccentric_to_true(ea, ele.e));
  return out;
}

/// Coast of an inertial state through the element picture.
inline CartesianState propagate_state(const CartesianState& state, double dt_s,
                                      double mu = constants::mu_sun) {
  return elements_to_cartesian(propagate_kepler(cartesian_to_elements(state, mu), dt_s, mu),
                               mu);
}

/// Rotation from inertial axes into the VVLH frame of `ref`: z toward the
/// central body, y along the negative orbit normal, x completing the
/// right-handed triad (near the velocity direction).  Throws for degenerate
/// references (zero radius or radial motion).
inline Matrix3d vvlh_rotation(const CartesianState& ref) {
  const double r_mag = ref.r.norm();
  if (!(r_mag > 0.0)) throw std::domain_error("vvlh_rotation: zero position");
  const Vector3d h = ref.r.cross(ref.v);
  const double h_mag = h.norm();
  if (!(h_mag > 1e-12 * r_mag * ref.v.norm()) || !(h_mag > 0.0))
    throw std::domain_error("vvlh_rotation: velocity is parallel to position");

  const Vector3d z = -ref.r / r_mag;
  const Vector3d y = -h / h_mag;
  const Vector3d x = y.cross(z);
  Matrix3d rot;
  rot.row(0) = x;
  rot.row(1) = y;
  rot.row(2) = z;
  return rot;
}

/// Relative position/velocity of `target` expressed in the VVLH frame of
/// `ref` (pure rotation of the inertial differences).
inline std::pair<Vector3d, Vector3d> vvlh_relative(const CartesianState& ref,
                                                   const CartesianState& target) {
  const Matrix3d rot = vvlh_rotation(ref);
  return {rot * (target.r - ref.r), rot * (target.v - ref.v)};
}

/// Inverse of vvlh_relative: absolute inertial state of the point displaced
/// from `ref` by the given VVLH offsets.
inline CartesianState vvlh_to_inertial(const CartesianState& ref, const Vector3d& dr_vvlh,
                                       const Vector3d& dv_vvlh) {
  const Matrix3d rot = vvlh_rotation(ref);
  return {ref.r + rot.transpose() * dr_vvlh, ref.v + rot.transpose() * dv_vvlh};
}

/// Angle between two position vectors in [0, pi], computed with atan2 for
/// accuracy near 0 and pi.
inline double angle_between(const Vector3d& r1, const Vector3d& r2) {
  if (!(r1.norm() > 0.0) || !(r2.norm() > 0.0))
    throw std::domain_error("angle_between: zero-length vector");
  return std::atan2(r1.cross(r2).norm(), r1.dot(r2));
}

}  // namespace ltx::astro
