#pragma once

#include <Eigen/Core>
#include <stdexcept>

#include "ltx/astro.hpp"
#include "ltx/constants.hpp"

namespace ltx {

/// Low-thrust propulsion parameters.  Defaults match the GTOC-7 probe.
struct SpacecraftConfig {
  double tmax_n = 0.3;         // maximum thrust [N]
  double isp_s = 3000.0;       // specific impulse [s]
  double dry_mass_kg = 800.0;  // structural mass floor [kg]

  /// Effective exhaust velocity [m/s].
  double exhaust_velocity() const { return isp_s * constants::g0; }
};

/// Fixed-time rendezvous: depart the osculating orbit `departure` at its
/// stated anomaly with wet mass `m0_kg`, match `target_r`/`target_v` after
/// exactly `dt_s` seconds.  Requires m0_kg > craft.dry_mass_kg and dt_s > 0.
struct TransferProblem {
  astro::OrbitElements departure;
  Eigen::Vector3d target_r = Eigen::Vector3d::Zero();  // [m]
  Eigen::Vector3d target_v = Eigen::Vector3d::Zero();  // [m/s]
  double m0_kg = 0.0;
  double dt_s = 0.0;
  SpacecraftConfig craft;

  astro::CartesianState initial_state() const {
    return astro::elements_to_cartesian(departure);
  }
  astro::CartesianState target_state() const { return {target_r, target_v}; }

  void validate() const {
    if (!(m0_kg > craft.dry_mass_kg))
      throw std::invalid_argument("TransferProblem: wet mass must exceed dry mass");
    if (!(dt_s > 0.0))
      throw std::invalid_argument("TransferProblem: transfer time must be positive");
  }
};

/// Thrown when a command cannot finish within its solver retry budget.
/// The CLI maps it to a dedicated exit code.
struct BudgetExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ltx
