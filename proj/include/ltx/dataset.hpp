#pragma once

#include <Eigen/Core>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltx/astro.hpp"
#include "ltx/constants.hpp"
#include "ltx/lambert.hpp"
#include "ltx/optimal_control.hpp"
#include "ltx/problem.hpp"
#include "ltx/rng.hpp"

namespace ltx::dataset {

using Eigen::Vector3d;

enum class Task { classification, regression };

/// Sampling bounds for random transfer problems.  Departure orbits cover the
/// main-belt band; the offsets bound how far the rendezvous state may sit
/// from the ballistic arrival in the VVLH frame.
struct SampleRanges {
  double a_min_au = 2.0, a_max_au = 3.0;
  double e_min = 0.0, e_max = 0.4;
  double i_min_deg = 0.0, i_max_deg = 20.0;
  double m0_min_kg = 800.0, m0_max_kg = 2000.0;
  double dt_min_days = 50.0, dt_max_days = 500.0;
  double dr_max_au = 1.0;    // d1: max VVLH position offset
  double dv_max_kms = 10.0;  // d2: max VVLH velocity offset
  // Offset norms are drawn as max * U^k.  The exponent shapes how much of
  // the pool hugs the feasibility boundary: k = 1 is uniform in norm and
  // yields a heavily infeasible pool; k = 4 keeps the stated maxima while
  // restoring a roughly 40/60 optimal/infeasible balance.
  double offset_norm_exponent = 4.0;
};

/// One labeled transfer.  The target state is reconstructed from the
/// departure elements, the coast, and the stored VVLH offsets, so the record
/// is the complete problem definition.
struct TransferSample {
  std::uint64_t seed = 0;
  astro::OrbitElements departure;  // chaser elements at t0
  double m0_kg = 0.0;
  double dt_s = 0.0;
  Vector3d dr_vvlh_m = Vector3d::Zero();
  Vector3d dv_vvlh_ms = Vector3d::Zero();
  optctl::TransferLabel label = optctl::TransferLabel::infeasible;
  double mf_max_kg = std::numeric_limits<double>::quiet_NaN();  // Optimal only
  double dtheta_rad = 0.0;
  double dv_lambert_ms = 0.0;
  double mf_lam_kg = 0.0;
};

using Pool = std::vector<TransferSample>;

// ---------------------------------------------------------------------------
// Geometry shared by generation, features, and downstream consumers
// ---------------------------------------------------------------------------

/// Everything derivable from (departure, m0, dt, offsets) without solving
/// the optimal control problem.
struct TransferGeometry {
  astro::CartesianState chaser0;       // departure state at t0
  astro::CartesianState chaser_coast;  // ballistic chaser state at tf
  astro::CartesianState target;        // rendezvous state at tf
  astro::OrbitElements target_elements;
  double dtheta_rad = 0.0;
  double dv_lambert_ms = 0.0;
  double mf_lam_kg = 0.0;
};

inline TransferProblem make_problem(const astro::OrbitElements& departure, double m0_kg,
                                    double dt_s, const astro::CartesianState& target,
                                    const SpacecraftConfig& craft) {
  TransferProblem p;
  p.departure = departure;
  p.target_r = target.r;
  p.target_v = target.v;
  p.m0_kg = m0_kg;
  p.dt_s = dt_s;
  p.craft = craft;
  return p;
}

/// Reconstruct the transfer geometry and the impulsive reference quantities.
/// Throws (std::domain_error or the Lambert errors) when the offsets lead to
/// a non-elliptic target or a degenerate Lambert arc; sample generation
/// redraws the offsets in that case.
inline TransferGeometry derive_geometry(const astro::OrbitElements& departure,
                                        double m0_kg, double dt_s,
                                        const Vector3d& dr_vvlh_m,
                                        const Vector3d& dv_vvlh_ms,
                                        const SpacecraftConfig& craft) {
  TransferGeometry g;
  g.chaser0 = astro::elements_to_cartesian(departure);
  g.chaser_coast =
      astro::elements_to_cartesian(astro::propagate_kepler(departure, dt_s));
  g.target = astro::vvlh_to_inertial(g.chaser_coast, dr_vvlh_m, dv_vvlh_ms);
  g.target_elements = astro::cartesian_to_elements(g.target);
  g.dtheta_rad = astro::angle_between(g.chaser0.r, g.target.r);
  g.dv_lambert_ms =
      lambert::lambert_delta_v(make_problem(departure, m0_kg, dt_s, g.target, craft));
  g.mf_lam_kg = lambert::impulsive_final_mass(m0_kg, g.dv_lambert_ms, craft.isp_s);
  return g;
}

inline TransferGeometry derive_geometry(const TransferSample& s,
                                        const SpacecraftConfig& craft) {
  return derive_geometry(s.departure, s.m0_kg, s.dt_s, s.dr_vvlh_m, s.dv_vvlh_ms, craft);
}

// ---------------------------------------------------------------------------
// Sample generation
// ---------------------------------------------------------------------------

struct GenerateOptions {
  SampleRanges ranges;
  SpacecraftConfig craft;
  optctl::ClassifyOptions classify;
  int max_target_redraws = 64;
};

enum class DiscardReason { none, target_draw_budget, homotopy_failed };

struct GeneratedSample {
  std::optional<TransferSample> sample;
  DiscardReason discard = DiscardReason::none;
  int classify_attempts = 0;
  long shoot_evaluations = 0;
};

/// Draw one random transfer problem, label it with the indirect solver, and
/// keep it only when the label is conclusive.  The draw order is fixed, so a
/// seed reproduces its sample bit for bit; offsets that give hyperbolic
/// targets or degenerate Lambert geometry consume further draws from the
/// same stream until the redraw budget runs out.
inline GeneratedSample generate_sample(std::uint64_t seed, const GenerateOptions& opt) {
  GeneratedSample out;
  Rng rng(seed);
  const SampleRanges& rg = opt.ranges;

  TransferSample s;
  s.seed = seed;
  s.departure.a = rng.uniform(rg.a_min_au, rg.a_max_au) * constants::au;
  s.departure.e = rng.uniform(rg.e_min, rg.e_max);
  s.departure.i = rng.uniform(rg.i_min_deg, rg.i_max_deg) * constants::deg;
  s.departure.raan = rng.uniform(0.0, 360.0) * constants::deg;
  s.departure.argp = rng.uniform(0.0, 360.0) * constants::deg;
  s.departure.ta = rng.uniform(0.0, 360.0) * constants::deg;
  do {
    s.m0_kg = rng.uniform(rg.m0_min_kg, rg.m0_max_kg);
  } while (!(s.m0_kg > opt.craft.dry_mass_kg));
  s.dt_s = rng.uniform(rg.dt_min_days, rg.dt_max_days) * constants::day;

  std::optional<TransferGeometry> geometry;
  for (int attempt = 0; attempt < opt.max_target_redraws && !geometry; ++attempt) {
    const double k = rg.offset_norm_exponent;
    const Vector3d dr = rng.unit_vector() *
                        (std::pow(rng.uniform(), k) * rg.dr_max_au * constants::au);
    const Vector3d dv = rng.unit_vector() *
                        (std::pow(rng.uniform(), k) * rg.dv_max_kms * 1000.0);
    try {
      geometry = derive_geometry(s.departure, s.m0_kg, s.dt_s, dr, dv, opt.craft);
      s.dr_vvlh_m = dr;
      s.dv_vvlh_ms = dv;
    } catch (const std::exception&) {
      geometry.reset();
    }
  }
  if (!geometry) {
    out.discard = DiscardReason::target_draw_budget;
    return out;
  }
  s.dtheta_rad = geometry->dtheta_rad;
  s.dv_lambert_ms = geometry->dv_lambert_ms;
  s.mf_lam_kg = geometry->mf_lam_kg;

  const TransferProblem problem =
      make_problem(s.departure, s.m0_kg, s.dt_s, geometry->target, opt.craft);
  const optctl::TransferOutcome outcome =
      optctl::classify_transfer(problem, derive_seed(seed, 99), opt.classify);
  out.classify_attempts = outcome.attempts_used;
  out.shoot_evaluations = outcome.stats.shoot_evaluations;

  if (outcome.label == optctl::TransferLabel::homotopy_failed) {
    out.discard = DiscardReason::homotopy_failed;
    return out;
  }
  s.label = outcome.label;
  s.mf_max_kg = outcome.mf_max_kg;
  out.sample = s;
  return out;
}

// ---------------------------------------------------------------------------
// Learning features
// ---------------------------------------------------------------------------

inline constexpr int classification_feature_count = 16;
inline constexpr int regression_feature_count = 17;

namespace detail {

inline void push_elements(std::vector<double>& v, const astro::OrbitElements& e) {
  v.insert(v.end(), {e.a, e.e, e.i, e.raan, e.argp, e.ta});
}

inline void push_state(std::vector<double>& v, const astro::CartesianState& s) {
  v.insert(v.end(), {s.r.x(), s.r.y(), s.r.z(), s.v.x(), s.v.y(), s.v.z()});
}

inline void push_vec3(std::vector<double>& v, const Vector3d& x) {
  v.insert(v.end(), {x.x(), x.y(), x.z()});
}

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

}  // namespace detail

/// Feature group encoding.  Every group starts with (m0, dt); groups differ
/// in how the initial and final states are encoded and which derived scalars
/// are appended.  Group 9 is the selected feature set for each task.  This
/// overload reuses a geometry already derived for the sample.
inline Eigen::VectorXd features_group(const TransferSample& s,
                                      const TransferGeometry& g, int group,
                                      Task task) {
  if (group < 1 || group > 9)
    throw std::invalid_argument("features_group: group must be in 1..9");

  std::vector<double> v;
  v.reserve(17);
  v.push_back(s.m0_kg);
  v.push_back(s.dt_s);

  // Initial state encoding: elements or cartesian.
  const bool initial_elements =
      (group <= 3) || (task == Task::regression && group >= 7);
  if (initial_elements)
    detail::push_elements(v, s.departure);
  else
    detail::push_state(v, g.chaser0);

  // Final state encoding: target elements, target state, or VVLH offsets.
  const int final_kind = (group == 1 || group == 4) ? 0
                         : (group == 2 || group == 5) ? 1
                                                      : 2;
  if (final_kind == 0)
    detail::push_elements(v, g.target_elements);
  else if (final_kind == 1)
    detail::push_state(v, g.target);
  else {
    detail::push_vec3(v, s.dr_vvlh_m);
    detail::push_vec3(v, s.dv_vvlh_ms);
  }

  if (group >= 7 && group != 8) v.push_back(s.dtheta_rad);
  if (task == Task::classification) {
    if (group == 8 || group == 9) v.push_back(s.dv_lambert_ms);
  } else {
    if (group >= 8) v.push_back(s.dv_lambert_ms);
    if (group == 9) v.push_back(s.mf_lam_kg);
  }
  return detail::to_eigen(v);
}

inline Eigen::VectorXd features_group(const TransferSample& s,
                                      const SpacecraftConfig& craft, int group,
                                      Task task) {
  return features_group(s, derive_geometry(s, craft), group, task);
}

/// Selected classification features: m0, dt, r_c0, v_c0, dr_cf, dv_cf,
/// dtheta, dv_lambert (16 values, SI units, fixed order).
inline Eigen::VectorXd features_classification(const TransferSample& s,
                                               const SpacecraftConfig& craft) {
  return features_group(s, craft, 9, Task::classification);
}

/// Selected regression features: m0, dt, departure elements, dr_cf, dv_cf,
/// dtheta, dv_lambert, mf_lam (17 values, SI units, fixed order).
inline Eigen::VectorXd features_regression(const TransferSample& s,
                                           const SpacecraftConfig& craft) {
  return features_group(s, craft, 9, Task::regression);
}

/// Feature matrix (rows = samples) for the given pool rows.
inline Eigen::MatrixXd feature_matrix(const Pool& pool,
                                      const std::vector<std::size_t>& rows,
                                      const SpacecraftConfig& craft, Task task,
                                      int group = 9) {
  if (rows.empty()) throw std::invalid_argument("feature_matrix: no rows");
  const Eigen::VectorXd first = features_group(pool.at(rows[0]), craft, group, task);
  Eigen::MatrixXd m(static_cast<long>(rows.size()), first.size());
  m.row(0) = first;
  for (std::size_t k = 1; k < rows.size(); ++k)
    m.row(static_cast<long>(k)) = features_group(pool.at(rows[k]), craft, group, task);
  return m;
}

/// Classification targets: 1 for feasible (Optimal), 0 for Infeasible.
inline Eigen::VectorXd label_vector(const Pool& pool,
                                    const std::vector<std::size_t>& rows) {
  Eigen::VectorXd y(static_cast<long>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k)
    y[static_cast<long>(k)] =
        pool.at(rows[k]).label == optctl::TransferLabel::optimal ? 1.0 : 0.0;
  return y;
}

/// Regression targets: the verified maximum final mass in kg.
inline Eigen::VectorXd target_vector(const Pool& pool,
                                     const std::vector<std::size_t>& rows) {
  Eigen::VectorXd y(static_cast<long>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const TransferSample& s = pool.at(rows[k]);
    if (s.label != optctl::TransferLabel::optimal)
      throw std::invalid_argument("target_vector: row without a verified final mass");
    y[static_cast<long>(k)] = s.mf_max_kg;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Splitting and standardization
// ---------------------------------------------------------------------------

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seed-deterministic train/test split.  Classification tests on mixed
/// labels; regression tests only on rows that carry a final mass.  The two
/// sides are disjoint and exhaust the pool.
inline SplitIndices split(const Pool& pool, std::size_t n_test, std::uint64_t seed,
                          Task task) {
  if (pool.size() <= n_test)
    throw std::invalid_argument("split: pool not larger than the test set");

  std::vector<std::size_t> candidates;
  if (task == Task::regression) {
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool[i].label == optctl::TransferLabel::optimal) candidates.push_back(i);
    if (candidates.size() < n_test)
      throw std::invalid_argument("split: not enough Optimal rows for the test set");
  } else {
    candidates.resize(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) candidates[i] = i;
  }

  Rng rng(seed);
  rng.shuffle(candidates);

  SplitIndices out;
  out.test.assign(candidates.begin(), candidates.begin() + static_cast<long>(n_test));
  std::vector<bool> in_test(pool.size(), false);
  for (std::size_t i : out.test) in_test[i] = true;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!in_test[i]) out.train.push_back(i);
  return out;
}

/// Z-score standardization fitted on training rows only (population sigma).
struct Scaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const {
    return (rows.rowwise() - mean.transpose()).array().rowwise() /
           stddev.transpose().array();
  }
  Eigen::VectorXd apply(const Eigen::VectorXd& row) const {
    return (row - mean).cwiseQuotient(stddev);
  }
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& rows) const {
    return (rows.array().rowwise() * stddev.transpose().array()).matrix().rowwise() +
           mean.transpose();
  }
};

inline Scaler fit_scaler(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw std::invalid_argument("fit_scaler: need at least 2 rows");
  Scaler sc;
  sc.mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - sc.mean.transpose();
  sc.stddev = (centered.array().square().colwise().mean()).sqrt();
  for (long j = 0; j < sc.stddev.size(); ++j) {
    if (!(sc.stddev[j] > 1e-300)) {
      std::ostringstream msg;
      msg << "fit_scaler: feature column " << j << " has zero variance";
      throw std::invalid_argument(msg.str());
    }
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Pool persistence (versioned CSV)
// ---------------------------------------------------------------------------

inline constexpr const char* pool_format_version = "ltx-pool-v1";
inline constexpr const char* pool_columns =
    "seed,a,e,i,raan,argp,ta,m0_kg,dt_days,drx_au,dry_au,drz_au,"
    "dvx_kms,dvy_kms,dvz_kms,label,mf_max_kg,dtheta_rad,dv_lambert_ms,mf_lam_kg";

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [p, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || p != end)
    throw std::runtime_error(where + ": malformed number '" + field + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

/// Serialize one sample to a pool CSV row (file units: AU, degrees, days,
/// km/s; dtheta stays in radians per the schema).
inline std::string to_csv_row(const TransferSample& s) {
  using constants::au;
  using constants::day;
  using constants::deg;
  using detail::format_double;
  std::string row;
  row += std::to_string(s.seed);
  row += ',' + format_double(s.departure.a / au);
  row += ',' + format_double(s.departure.e);
  row += ',' + format_double(s.departure.i / deg);
  row += ',' + format_double(s.departure.raan / deg);
  row += ',' + format_double(s.departure.argp / deg);
  row += ',' + format_double(s.departure.ta / deg);
  row += ',' + format_double(s.m0_kg);
  row += ',' + format_double(s.dt_s / day);
  for (int k = 0; k < 3; ++k) row += ',' + format_double(s.dr_vvlh_m[k] / au);
  for (int k = 0; k < 3; ++k) row += ',' + format_double(s.dv_vvlh_ms[k] / 1000.0);
  row += ',';
  row += optctl::to_string(s.label);
  row += ',';
  if (s.label == optctl::TransferLabel::optimal) row += format_double(s.mf_max_kg);
  row += ',' + format_double(s.dtheta_rad);
  row += ',' + format_double(s.dv_lambert_ms);
  row += ',' + format_double(s.mf_lam_kg);
  return row;
}

inline TransferSample from_csv_row(const std::string& line, const std::string& where) {
  const std::vector<std::string> f = detail::split_csv_line(line);
  if (f.size() != 20) {
    throw std::runtime_error(where + ": expected 20 fields, got " +
                             std::to_string(f.size()));
  }
  using constants::au;
  using constants::day;
  using constants::deg;
  using detail::parse_double;
  TransferSample s;
  {
    std::uint64_t seed = 0;
    const auto [p, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), seed);
    if (ec != std::errc() || p != f[0].data() + f[0].size())
      throw std::runtime_error(where + ": malformed seed '" + f[0] + "'");
    s.seed = seed;
  }
  s.departure.a = parse_double(f[1], where) * au;
  s.departure.e = parse_double(f[2], where);
  s.departure.i = parse_double(f[3], where) * deg;
  s.departure.raan = parse_double(f[4], where) * deg;
  s.departure.argp = parse_double(f[5], where) * deg;
  s.departure.ta = parse_double(f[6], where) * deg;
  s.m0_kg = parse_double(f[7], where);
  s.dt_s = parse_double(f[8], where) * day;
  for (int k = 0; k < 3; ++k) s.dr_vvlh_m[k] = parse_double(f[9 + k], where) * au;
  for (int k = 0; k < 3; ++k) s.dv_vvlh_ms[k] = parse_double(f[12 + k], where) * 1000.0;
  s.label = optctl::label_from_string(f[15]);
  if (s.label == optctl::TransferLabel::optimal) {
    s.mf_max_kg = parse_double(f[16], where);
  } else if (!f[16].empty()) {
    throw std::runtime_error(where + ": final mass given for a non-Optimal row");
  }
  s.dtheta_rad = parse_double(f[17], where);
  s.dv_lambert_ms = parse_double(f[18], where);
  s.mf_lam_kg = parse_double(f[19], where);
  return s;
}

inline void save_pool(const std::string& path, const Pool& pool) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_pool: cannot open " + path);
  out << "# " << pool_format_version << '\n' << pool_columns << '\n';
  for (const TransferSample& s : pool) out << to_csv_row(s) << '\n';
  if (!out) throw std::runtime_error("save_pool: write failed for " + path);
}

inline Pool load_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_pool: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line)[0] !=
                                     std::string("# ") + pool_format_version)
    throw std::runtime_error(path + ":1: not a " + std::string(pool_format_version) +
                             " file");
  if (!std::getline(in, line) || line.substr(0, 4) != "seed")
    throw std::runtime_error(path + ":2: missing column header");

  Pool pool;
  long line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    pool.push_back(from_csv_row(line, path + ":" + std::to_string(line_no)));
  }
  return pool;
}

}  // namespace ltx::dataset
