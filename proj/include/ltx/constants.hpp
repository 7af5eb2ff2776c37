#pragma once

#include <cmath>

namespace ltx {

/// Physical constants shared by every module. SI units throughout.
namespace constants {

/// Heliocentric gravitational parameter [m^3/s^2].
inline constexpr double mu_sun = 1.32712440018e20;

/// Standard gravity used in the rocket equation [m/s^2].
inline constexpr double g0 = 9.80665;

/// Astronomical unit [m].
inline constexpr double au = 1.49597870691e11;

/// Seconds per day.
inline constexpr double day = 86400.0;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

/// Radians per degree.
inline constexpr double deg = pi / 180.0;

}  // namespace constants

/// Unit system used to nondimensionalize trajectory problems: one length
/// unit, the time unit that makes mu = 1, and a reference mass.  Keeps the
/// shooting unknowns and residuals near unity.
struct ScaleSet {
  double length = 1.0;  // [m]
  double time = 1.0;    // [s]
  double mass = 1.0;    // [kg]

  double velocity() const { return length / time; }
  double acceleration() const { return length / (time * time); }
  double force() const { return mass * acceleration(); }
};

/// Scales for heliocentric transfers: length = 1 au, mu = 1, mass as given.
inline ScaleSet heliocentric_scales(double reference_mass_kg) {
  const double lu = constants::au;
  return {lu, std::sqrt(lu * lu * lu / constants::mu_sun), reference_mass_kg};
}

}  // namespace ltx
