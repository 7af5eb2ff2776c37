#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ltx/astro.hpp"
#include "ltx/constants.hpp"
#include "ltx/dataset.hpp"
#include "ltx/lambert.hpp"
#include "ltx/neural.hpp"
#include "ltx/optimal_control.hpp"
#include "ltx/problem.hpp"
#include "ltx/rng.hpp"

namespace ltx::pipeline {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Reference transfer family
// ---------------------------------------------------------------------------

/// Rendezvous target displaced from the ballistically coasted departure body
/// by VVLH offsets.  The base family for every boundary sweep.
inline TransferProblem offset_transfer(const astro::OrbitElements& departure,
                                       double m0_kg, double dt_s,
                                       const Vector3d& dr_vvlh_m,
                                       const Vector3d& dv_vvlh_ms,
                                       const SpacecraftConfig& craft = {}) {
  const astro::CartesianState coast =
      astro::elements_to_cartesian(astro::propagate_kepler(departure, dt_s));
  const astro::CartesianState target =
      astro::vvlh_to_inertial(coast, dr_vvlh_m, dv_vvlh_ms);
  return dataset::make_problem(departure, m0_kg, dt_s, target, craft);
}

/// The reference feasible transfer: near-circular 2.5 au departure, offsets
/// [0.2, 0.2, 0.2] au and [1, 1, 1] km/s, 1500 kg, 300 days.
inline TransferProblem reference_transfer(double m0_kg = 1500.0,
                                          double dt_days = 300.0,
                                          const SpacecraftConfig& craft = {}) {
  const astro::OrbitElements departure{2.5 * constants::au, 0.001, 0.0, 0.0, 0.0, 0.0};
  return offset_transfer(departure, m0_kg, dt_days * constants::day,
                         Vector3d::Constant(0.2 * constants::au),
                         Vector3d::Constant(1000.0), craft);
}

/// Rebuild the solvable problem a pool row describes.
inline TransferProblem problem_from_sample(const dataset::TransferSample& s,
                                           const SpacecraftConfig& craft = {}) {
  return offset_transfer(s.departure, s.m0_kg, s.dt_s, s.dr_vvlh_m, s.dv_vvlh_ms,
                         craft);
}

// ---------------------------------------------------------------------------
// Model fitting
// ---------------------------------------------------------------------------

struct FitOutcome {
  neural::Mlp model;
  neural::TrainReport report;
  std::size_t rows_used = 0;
};

/// Train a feasibility classifier on the given pool rows: standardize the
/// features, fit the net, and keep the scaler inside the model.
inline FitOutcome fit_classifier(const dataset::Pool& pool,
                                 const std::vector<std::size_t>& train_rows,
                                 const std::vector<int>& hidden,
                                 const neural::TrainConfig& train_cfg,
                                 std::uint64_t seed,
                                 const SpacecraftConfig& craft = {}, int group = 9) {
  const MatrixXd x =
      dataset::feature_matrix(pool, train_rows, craft, dataset::Task::classification,
                              group);
  const VectorXd y = dataset::label_vector(pool, train_rows);

  FitOutcome out;
  out.rows_used = train_rows.size();
  out.model = neural::make_mlp(static_cast<int>(x.cols()), hidden,
                               neural::Head::sigmoid, derive_seed(seed, 1));
  out.model.input_scaler = dataset::fit_scaler(x);

  neural::TrainConfig cfg = train_cfg;
  cfg.seed = derive_seed(seed, 2);
  out.report = neural::train(out.model, out.model.input_scaler.apply(x), y, cfg);
  return out;
}

/// Train a final-mass regressor.  Only rows with a verified final mass are
/// usable; other rows in `train_rows` are skipped.
inline FitOutcome fit_regressor(const dataset::Pool& pool,
                                const std::vector<std::size_t>& train_rows,
                                const std::vector<int>& hidden,
                                const neural::TrainConfig& train_cfg,
                                std::uint64_t seed,
                                const SpacecraftConfig& craft = {}, int group = 9) {
  std::vector<std::size_t> rows;
  rows.reserve(train_rows.size());
  for (std::size_t i : train_rows)
    if (pool.at(i).label == optctl::TransferLabel::optimal) rows.push_back(i);
  if (rows.size() < 2)
    throw std::invalid_argument("fit_regressor: need at least 2 rows with final mass");

  const MatrixXd x =
      dataset::feature_matrix(pool, rows, craft, dataset::Task::regression, group);
  const VectorXd y = dataset::target_vector(pool, rows);

  FitOutcome out;
  out.rows_used = rows.size();
  out.model = neural::make_mlp(static_cast<int>(x.cols()), hidden,
                               neural::Head::linear, derive_seed(seed, 1));
  out.model.input_scaler = dataset::fit_scaler(x);
  out.model.target_scaler = dataset::fit_scaler(MatrixXd(y));

  neural::TrainConfig cfg = train_cfg;
  cfg.seed = derive_seed(seed, 2);
  const VectorXd y_std = ((y.array() - out.model.target_scaler.mean[0]) /
                          out.model.target_scaler.stddev[0])
                             .matrix();
  out.report = neural::train(out.model, out.model.input_scaler.apply(x), y_std, cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Candidate evaluation (classify, then estimate only the feasible ones)
// ---------------------------------------------------------------------------

struct Evaluation {
  bool feasible = false;
  double probability = 0.0;
  double mf_estimate_kg = std::numeric_limits<double>::quiet_NaN();  // feasible only
};

/// Two-stage judgment of one candidate: the classifier gates, the regressor
/// runs only on candidates judged feasible.
inline Evaluation evaluate_candidate(const neural::Mlp& clf, const neural::Mlp& reg,
                                     const dataset::TransferSample& s,
                                     const SpacecraftConfig& craft = {},
                                     int clf_group = 9, int reg_group = 9) {
  const dataset::TransferGeometry g = dataset::derive_geometry(s, craft);
  Evaluation out;
  out.probability = clf.predict_one(
      dataset::features_group(s, g, clf_group, dataset::Task::classification));
  out.feasible = out.probability >= 0.5;
  if (out.feasible)
    out.mf_estimate_kg = reg.predict_one(
        dataset::features_group(s, g, reg_group, dataset::Task::regression));
  return out;
}

// ---------------------------------------------------------------------------
// Boundary sweeps with warm-started continuation
// ---------------------------------------------------------------------------

struct SweepOptions {
  std::uint64_t seed = 1;
  optctl::ClassifyOptions classify;
  int retry_ambiguous = 2;  // extra reseeded attempts when the homotopy fails
};

/// Rides a converged costate branch along a slowly varying problem family,
/// falling back to the cold global search whenever the branch is lost.
class WarmChain {
 public:
  explicit WarmChain(const SweepOptions& opts) : opts_(opts) {}

  optctl::TransferOutcome classify(const TransferProblem& p, std::uint64_t point_seed) {
    optctl::TransferOutcome out = optctl::classify_transfer(
        p, point_seed, opts_.classify, warm_ ? &*warm_ : nullptr);
    for (int r = 0; r < opts_.retry_ambiguous &&
                    out.label == optctl::TransferLabel::homotopy_failed;
         ++r) {
      out = optctl::classify_transfer(p, derive_seed(point_seed, 7001 + r),
                                      opts_.classify, warm_ ? &*warm_ : nullptr);
    }
    if (out.label == optctl::TransferLabel::optimal) warm_ = out.solution->costates0;
    shoot_evaluations += out.stats.shoot_evaluations;
    return out;
  }

  long shoot_evaluations = 0;

 private:
  SweepOptions opts_;
  std::optional<optctl::Vec8> warm_;
};

struct SweepPointResult {
  double value = 0.0;
  optctl::TransferLabel label = optctl::TransferLabel::infeasible;
  double mf_max_kg = std::numeric_limits<double>::quiet_NaN();
};

struct ThresholdSweep {
  std::vector<SweepPointResult> grid;  // coarse pass, ascending
  bool found = false;                  // a feasible/infeasible boundary exists
  double feasible_side = std::numeric_limits<double>::quiet_NaN();
  double infeasible_side = std::numeric_limits<double>::quiet_NaN();
  double threshold = std::numeric_limits<double>::quiet_NaN();  // bracket midpoint
  long shoot_evaluations = 0;
};

namespace detail {

/// Coarse ascending scan + bisection refinement of the single feasibility
/// boundary of a monotone one-parameter family.  `feasible_low` states which
/// side of the boundary is feasible.
template <typename ProblemAt>
ThresholdSweep find_threshold(ProblemAt&& problem_at, double lo, double hi,
                              double coarse_step, double refine_to,
                              bool feasible_low, const SweepOptions& opts) {
  if (!(hi > lo) || !(coarse_step > 0.0) || !(refine_to > 0.0))
    throw std::invalid_argument("find_threshold: bad grid");

  WarmChain chain(opts);
  ThresholdSweep out;
  std::uint64_t point_index = 0;

  const auto classify_value = [&](double v) {
    const optctl::TransferOutcome o =
        chain.classify(problem_at(v), derive_seed(opts.seed, point_index++));
    SweepPointResult r;
    r.value = v;
    r.label = o.label;
    r.mf_max_kg = o.mf_max_kg;
    return r;
  };

  // Ascending coarse grid, inclusive of both ends.
  std::vector<double> values;
  for (double v = lo; v < hi + 0.5 * coarse_step; v += coarse_step)
    values.push_back(std::min(v, hi));
  for (double v : values) out.grid.push_back(classify_value(v));

  // Bracket the last transition consistent with the monotone family.
  const auto is_feasible = [](const SweepPointResult& r) {
    return r.label == optctl::TransferLabel::optimal;
  };
  double fs = std::numeric_limits<double>::quiet_NaN();
  double is = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k + 1 < out.grid.size(); ++k) {
    const bool a = is_feasible(out.grid[k]), b = is_feasible(out.grid[k + 1]);
    if (feasible_low && a && !b) {
      fs = out.grid[k].value;
      is = out.grid[k + 1].value;
      break;  // first crossing: below it the family stays feasible
    }
    if (!feasible_low && !a && b) {
      fs = out.grid[k + 1].value;
      is = out.grid[k].value;  // last infeasible before the feasible side begins
    }
  }
  out.shoot_evaluations = chain.shoot_evaluations;
  if (!std::isfinite(fs) || !std::isfinite(is)) return out;

  // Bisection down to the requested bracket width.
  while (std::abs(is - fs) > refine_to) {
    const double mid = 0.5 * (fs + is);
    const SweepPointResult r = classify_value(mid);
    (is_feasible(r) ? fs : is) = mid;
  }
  out.found = true;
  out.feasible_side = fs;
  out.infeasible_side = is;
  out.threshold = 0.5 * (fs + is);
  out.shoot_evaluations = chain.shoot_evaluations;
  return out;
}

/// Classify `n` independent points over `workers` contiguous segments, each
/// segment riding its own warm-start chain.  Results keep grid order, so the
/// output is canonical for a given (seed, workers) pair.
template <typename MakeProblem>
std::vector<optctl::TransferOutcome> classify_grid(std::size_t n, MakeProblem&& make,
                                                   const SweepOptions& opts,
                                                   int workers) {
  std::vector<optctl::TransferOutcome> out(n);
  const auto run_segment = [&](std::size_t lo, std::size_t hi) {
    WarmChain chain(opts);
    for (std::size_t k = lo; k < hi; ++k)
      out[k] = chain.classify(make(k), derive_seed(opts.seed, k));
  };
  const int nw = std::max(1, workers);
  if (nw == 1 || n <= 1) {
    run_segment(0, n);
    return out;
  }
  const std::size_t per = (n + static_cast<std::size_t>(nw) - 1) / nw;
  std::vector<std::thread> threads;
  for (int w = 0; w < nw; ++w) {
    const std::size_t lo = std::min(n, static_cast<std::size_t>(w) * per);
    const std::size_t hi = std::min(n, lo + per);
    if (lo < hi) threads.emplace_back(run_segment, lo, hi);
  }
  for (std::thread& t : threads) t.join();
  return out;
}

}  // namespace detail

/// Feasibility boundary in the initial mass (feasible below the threshold).
inline ThresholdSweep sweep_initial_mass(double lo_kg = 1000.0, double hi_kg = 2000.0,
                                         double coarse_step_kg = 10.0,
                                         double refine_to_kg = 2.0,
                                         const SweepOptions& opts = {},
                                         const SpacecraftConfig& craft = {}) {
  return detail::find_threshold(
      [&](double m0) { return reference_transfer(m0, 300.0, craft); }, lo_kg, hi_kg,
      coarse_step_kg, refine_to_kg, true, opts);
}

/// Feasibility boundary in the transfer time (feasible above the threshold).
inline ThresholdSweep sweep_transfer_time(double lo_days = 100.0,
                                          double hi_days = 500.0,
                                          double coarse_step_days = 5.0,
                                          double refine_to_days = 1.0,
                                          const SweepOptions& opts = {},
                                          const SpacecraftConfig& craft = {}) {
  return detail::find_threshold(
      [&](double dt) { return reference_transfer(1500.0, dt, craft); }, lo_days,
      hi_days, coarse_step_days, refine_to_days, false, opts);
}

/// Final-velocity magnitude sweep: the target takes the coasted state with
/// its velocity scaled by delta, keeping the direction.
inline std::vector<SweepPointResult> sweep_velocity_ratio(
    double lo = 0.7, double hi = 1.3, double step = 0.001,
    const SweepOptions& opts = {}, const SpacecraftConfig& craft = {},
    int workers = 1) {
  const astro::OrbitElements departure{2.5 * constants::au, 0.001, 0.0, 0.0, 0.0, 0.0};
  const double dt_s = 300.0 * constants::day;
  const astro::CartesianState coast =
      astro::elements_to_cartesian(astro::propagate_kepler(departure, dt_s));

  std::vector<double> deltas;
  for (double delta = lo; delta < hi + 0.5 * step; delta += step) deltas.push_back(delta);

  const std::vector<optctl::TransferOutcome> outcomes = detail::classify_grid(
      deltas.size(),
      [&](std::size_t k) {
        const astro::CartesianState target{coast.r, deltas[k] * coast.v};
        return dataset::make_problem(departure, 1500.0, dt_s, target, craft);
      },
      opts, workers);

  std::vector<SweepPointResult> out;
  out.reserve(deltas.size());
  for (std::size_t k = 0; k < deltas.size(); ++k)
    out.push_back({deltas[k], outcomes[k].label, outcomes[k].mf_max_kg});
  return out;
}

struct OffsetPointResult {
  Vector3d offset = Vector3d::Zero();  // the swept VVLH vector
  optctl::TransferLabel label = optctl::TransferLabel::infeasible;
  double mf_max_kg = std::numeric_limits<double>::quiet_NaN();
};

enum class OffsetPlane { xy, yz };

/// Position-offset scatter in one VVLH coordinate plane with zero velocity
/// offset: random points in a disc of radius `dr_max_au`.
inline std::vector<OffsetPointResult> sweep_position_plane(
    OffsetPlane plane, int n_points, double dr_max_au = 0.6,
    const SweepOptions& opts = {}, const SpacecraftConfig& craft = {},
    int workers = 1) {
  if (n_points < 1) throw std::invalid_argument("sweep_position_plane: empty grid");
  const astro::OrbitElements departure{2.5 * constants::au, 0.001, 0.0, 0.0, 0.0, 0.0};
  const double dt_s = 300.0 * constants::day;

  Rng rng(opts.seed);
  std::vector<Vector3d> offsets;
  offsets.reserve(static_cast<std::size_t>(n_points));
  for (int k = 0; k < n_points; ++k) {
    const double radius = dr_max_au * constants::au * std::sqrt(rng.uniform());
    const double angle = rng.uniform(0.0, constants::two_pi);
    Vector3d dr = Vector3d::Zero();
    if (plane == OffsetPlane::xy) {
      dr.x() = radius * std::cos(angle);
      dr.y() = radius * std::sin(angle);
    } else {
      dr.y() = radius * std::cos(angle);
      dr.z() = radius * std::sin(angle);
    }
    offsets.push_back(dr);
  }

  const std::vector<optctl::TransferOutcome> outcomes = detail::classify_grid(
      offsets.size(),
      [&](std::size_t k) {
        return offset_transfer(departure, 1500.0, dt_s, offsets[k], Vector3d::Zero(),
                               craft);
      },
      opts, workers);

  std::vector<OffsetPointResult> out;
  out.reserve(offsets.size());
  for (std::size_t k = 0; k < offsets.size(); ++k)
    out.push_back({offsets[k], outcomes[k].label, outcomes[k].mf_max_kg});
  return out;
}

/// Final-velocity direction scatter at fixed magnitude |v_cf|: the target
/// keeps the coasted position while its velocity points along random unit
/// vectors.
inline std::vector<OffsetPointResult> sweep_velocity_direction(
    int n_points, const SweepOptions& opts = {}, const SpacecraftConfig& craft = {},
    int workers = 1) {
  if (n_points < 1) throw std::invalid_argument("sweep_velocity_direction: empty grid");
  const astro::OrbitElements departure{2.5 * constants::au, 0.001, 0.0, 0.0, 0.0, 0.0};
  const double dt_s = 300.0 * constants::day;
  const astro::CartesianState coast =
      astro::elements_to_cartesian(astro::propagate_kepler(departure, dt_s));
  const double speed = coast.v.norm();

  Rng rng(opts.seed);
  std::vector<Vector3d> dirs;
  dirs.reserve(static_cast<std::size_t>(n_points));
  for (int k = 0; k < n_points; ++k) dirs.push_back(rng.unit_vector());

  const std::vector<optctl::TransferOutcome> outcomes = detail::classify_grid(
      dirs.size(),
      [&](std::size_t k) {
        const astro::CartesianState target{coast.r, speed * dirs[k]};
        return dataset::make_problem(departure, 1500.0, dt_s, target, craft);
      },
      opts, workers);

  std::vector<OffsetPointResult> out;
  out.reserve(dirs.size());
  for (std::size_t k = 0; k < dirs.size(); ++k)
    out.push_back({speed * dirs[k], outcomes[k].label, outcomes[k].mf_max_kg});
  return out;
}

// ---------------------------------------------------------------------------
// Feature-group ablation
// ---------------------------------------------------------------------------

struct AblationEntry {
  int group = 0;
  double correct_rate = std::numeric_limits<double>::quiet_NaN();  // classification
  double mae_kg = std::numeric_limits<double>::quiet_NaN();        // regression
  double are = std::numeric_limits<double>::quiet_NaN();           // regression
};

struct StudyConfig {
  dataset::Task task = dataset::Task::classification;
  std::size_t n_train = 5000;
  std::size_t n_test = 1000;
  std::vector<int> hidden;  // empty: task default
  neural::TrainConfig train;
  std::uint64_t seed = 1;
};

inline std::vector<int> default_hidden(dataset::Task task, bool ablation) {
  if (ablation)
    return task == dataset::Task::classification ? std::vector<int>{30, 30}
                                                 : std::vector<int>{40, 40, 40};
  return task == dataset::Task::classification ? std::vector<int>{40, 40, 40}
                                               : std::vector<int>{70, 70, 70, 70};
}

/// Deterministic train/test rows for a study: the test side comes from the
/// split, the train side is a seeded shuffle truncated to `n_train` (always
/// label-filtered for regression).
struct StudyRows {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline StudyRows study_rows(const dataset::Pool& pool, const StudyConfig& cfg) {
  const dataset::SplitIndices split =
      dataset::split(pool, cfg.n_test, derive_seed(cfg.seed, 10), cfg.task);
  StudyRows rows;
  rows.test = split.test;
  rows.train = split.train;
  if (cfg.task == dataset::Task::regression) {
    std::vector<std::size_t> optimal;
    for (std::size_t i : rows.train)
      if (pool.at(i).label == optctl::TransferLabel::optimal) optimal.push_back(i);
    rows.train = std::move(optimal);
  }
  Rng rng(derive_seed(cfg.seed, 11));
  rng.shuffle(rows.train);
  if (rows.train.size() > cfg.n_train) rows.train.resize(cfg.n_train);
  return rows;
}

/// Metric per feature group, same split and seeds for every group.
inline std::vector<AblationEntry> run_ablation(const dataset::Pool& pool,
                                               const StudyConfig& cfg,
                                               const SpacecraftConfig& craft = {}) {
  const StudyRows rows = study_rows(pool, cfg);
  const std::vector<int> hidden =
      cfg.hidden.empty() ? default_hidden(cfg.task, true) : cfg.hidden;

  std::vector<AblationEntry> out;
  for (int group = 1; group <= 9; ++group) {
    AblationEntry e;
    e.group = group;
    if (cfg.task == dataset::Task::classification) {
      const FitOutcome fit =
          fit_classifier(pool, rows.train, hidden, cfg.train,
                         derive_seed(cfg.seed, static_cast<std::uint64_t>(group)),
                         craft, group);
      const MatrixXd x = dataset::feature_matrix(pool, rows.test, craft, cfg.task,
                                                 group);
      e.correct_rate =
          neural::correct_rate(fit.model, x, dataset::label_vector(pool, rows.test));
    } else {
      const FitOutcome fit =
          fit_regressor(pool, rows.train, hidden, cfg.train,
                        derive_seed(cfg.seed, static_cast<std::uint64_t>(group)),
                        craft, group);
      const MatrixXd x = dataset::feature_matrix(pool, rows.test, craft, cfg.task,
                                                 group);
      const neural::RegressionMetrics met = neural::regression_metrics(
          fit.model, x, dataset::target_vector(pool, rows.test));
      e.mae_kg = met.mae;
      e.are = met.are;
    }
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Architecture / data-volume scale study
// ---------------------------------------------------------------------------

struct ScaleCell {
  int layers = 0;
  int nodes = 0;
  std::size_t n_train = 0;
  double correct_rate = std::numeric_limits<double>::quiet_NaN();
  double mae_kg = std::numeric_limits<double>::quiet_NaN();
  double are = std::numeric_limits<double>::quiet_NaN();
  int epochs_run = 0;
};

/// Cross product of hidden-layer count, nodes per layer, and training-set
/// size.  Data subsets are nested, so larger sizes extend smaller ones.
inline std::vector<ScaleCell> run_scale_study(
    const dataset::Pool& pool, const StudyConfig& cfg,
    const std::vector<int>& layer_grid, const std::vector<int>& node_grid,
    const std::vector<std::size_t>& data_grid, const SpacecraftConfig& craft = {},
    int group = 9) {
  StudyConfig base = cfg;
  base.n_train = data_grid.empty()
                     ? cfg.n_train
                     : *std::max_element(data_grid.begin(), data_grid.end());
  const StudyRows rows = study_rows(pool, base);
  const MatrixXd x_test =
      dataset::feature_matrix(pool, rows.test, craft, cfg.task, group);

  std::vector<ScaleCell> out;
  std::uint64_t cell = 0;
  for (const std::size_t n_train : data_grid) {
    std::vector<std::size_t> train = rows.train;
    if (train.size() > n_train) train.resize(n_train);
    for (const int layers : layer_grid) {
      for (const int nodes : node_grid) {
        const std::vector<int> hidden(static_cast<std::size_t>(layers), nodes);
        ScaleCell c;
        c.layers = layers;
        c.nodes = nodes;
        c.n_train = train.size();
        const std::uint64_t cell_seed = derive_seed(cfg.seed, 100 + cell++);
        if (cfg.task == dataset::Task::classification) {
          const FitOutcome fit = fit_classifier(pool, train, hidden, cfg.train,
                                                cell_seed, craft, group);
          c.correct_rate = neural::correct_rate(
              fit.model, x_test, dataset::label_vector(pool, rows.test));
          c.epochs_run = fit.report.epochs_run;
        } else {
          const FitOutcome fit =
              fit_regressor(pool, train, hidden, cfg.train, cell_seed, craft, group);
          const neural::RegressionMetrics met = neural::regression_metrics(
              fit.model, x_test, dataset::target_vector(pool, rows.test));
          c.mae_kg = met.mae;
          c.are = met.are;
          c.epochs_run = fit.report.epochs_run;
        }
        out.push_back(c);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Impulsive-heuristic baseline
// ---------------------------------------------------------------------------

struct BaselineReport {
  std::vector<double> c_grid;
  std::vector<double> correct_rate;
  double best_c = std::numeric_limits<double>::quiet_NaN();
  double best_rate = 0.0;
  // Regression comparison over rows with a verified final mass.
  std::size_t regression_rows = 0;
  double mae_kg = std::numeric_limits<double>::quiet_NaN();
  double are = std::numeric_limits<double>::quiet_NaN();
  double mean_signed_error_kg = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> bin_edges;  // signed-error histogram, kg
  std::vector<long> bin_counts;
};

/// Correct-rate curve of the impulsive feasibility heuristic over the c grid
/// plus the rocket-equation estimate's error statistics, both on the same
/// test rows.
inline BaselineReport run_lambert_baseline(const dataset::Pool& pool,
                                           const std::vector<std::size_t>& rows,
                                           const std::vector<double>& c_grid,
                                           int histogram_bins = 40,
                                           const SpacecraftConfig& craft = {}) {
  if (rows.empty()) throw std::invalid_argument("run_lambert_baseline: no rows");
  if (c_grid.empty()) throw std::invalid_argument("run_lambert_baseline: empty c grid");

  BaselineReport out;
  out.c_grid = c_grid;

  std::vector<lambert::HeuristicCase> cases;
  cases.reserve(rows.size());
  std::vector<double> signed_errors;
  double abs_sum = 0.0, rel_sum = 0.0, signed_sum = 0.0;
  for (std::size_t i : rows) {
    const dataset::TransferSample& s = pool.at(i);
    cases.push_back({s.dv_lambert_ms, s.dt_s, craft.tmax_n, s.m0_kg,
                     s.label == optctl::TransferLabel::optimal});
    if (s.label == optctl::TransferLabel::optimal) {
      const double err = s.mf_lam_kg - s.mf_max_kg;
      signed_errors.push_back(err);
      abs_sum += std::abs(err);
      rel_sum += std::abs(err) / s.mf_max_kg;
      signed_sum += err;
    }
  }
  out.correct_rate = lambert::sweep_c(cases, c_grid);
  std::size_t best = 0;
  for (std::size_t k = 1; k < c_grid.size(); ++k)
    if (out.correct_rate[k] > out.correct_rate[best]) best = k;
  out.best_c = c_grid[best];
  out.best_rate = out.correct_rate[best];

  out.regression_rows = signed_errors.size();
  if (!signed_errors.empty()) {
    const double n = static_cast<double>(signed_errors.size());
    out.mae_kg = abs_sum / n;
    out.are = rel_sum / n;
    out.mean_signed_error_kg = signed_sum / n;

    const auto [lo_it, hi_it] =
        std::minmax_element(signed_errors.begin(), signed_errors.end());
    double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) hi = lo + 1.0;
    const int nb = std::max(1, histogram_bins);
    out.bin_edges.resize(static_cast<std::size_t>(nb) + 1);
    for (int k = 0; k <= nb; ++k)
      out.bin_edges[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / nb;
    out.bin_counts.assign(static_cast<std::size_t>(nb), 0);
    for (double e : signed_errors) {
      int bin = static_cast<int>((e - lo) / (hi - lo) * nb);
      bin = std::clamp(bin, 0, nb - 1);
      ++out.bin_counts[static_cast<std::size_t>(bin)];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendezvous chains
// ---------------------------------------------------------------------------

struct ChainBody {
  std::string name;
  astro::OrbitElements elements;  // osculating at `epoch_mjd`
  double epoch_mjd = 0.0;
};

struct ChainSpec {
  std::vector<ChainBody> bodies;
  std::vector<double> rendezvous_mjd;  // one per body; strictly increasing
  double m0_kg = 0.0;
  SpacecraftConfig craft;

  void validate() const {
    if (bodies.size() < 2)
      throw std::invalid_argument("ChainSpec: need at least 2 bodies");
    if (rendezvous_mjd.size() != bodies.size())
      throw std::invalid_argument("ChainSpec: one rendezvous time per body");
    for (std::size_t k = 0; k + 1 < rendezvous_mjd.size(); ++k)
      if (!(rendezvous_mjd[k + 1] > rendezvous_mjd[k]))
        throw std::invalid_argument("ChainSpec: rendezvous times must increase");
    if (!(m0_kg > craft.dry_mass_kg))
      throw std::invalid_argument("ChainSpec: wet mass must exceed dry mass");
  }
};

struct ChainLeg {
  int leg = 0;  // 1-based
  std::string from, to;
  double dt_days = 0.0;
  dataset::TransferSample sample;  // geometry evaluated with the estimated mass
  bool feasible = false;
  double probability = 0.0;
  double m0_estimate_kg = std::numeric_limits<double>::quiet_NaN();
  double mf_estimate_kg = std::numeric_limits<double>::quiet_NaN();
  double m0_lambert_kg = std::numeric_limits<double>::quiet_NaN();
  double mf_lambert_kg = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> m0_true_kg;  // ground-truth chain, when solved
  std::optional<double> mf_true_kg;
};

struct ChainResult {
  std::vector<ChainLeg> legs;
  bool truncated = false;  // the classifier rejected a leg
  int completed_legs = 0;
};

/// Sequential chain evaluation: each method carries its own running mass
/// (the estimator's next m0 is its previous estimate).  With
/// `sequential = false` every leg starts from the ground-truth mass, which
/// requires `with_truth`.  Ground truth, when requested, comes from the
/// indirect solver per leg.
inline ChainResult run_chain(const ChainSpec& spec, const neural::Mlp& clf,
                             const neural::Mlp& reg, bool sequential = true,
                             bool with_truth = false, std::uint64_t seed = 1,
                             const optctl::ClassifyOptions& co = {}) {
  spec.validate();
  if (!sequential && !with_truth)
    throw std::invalid_argument(
        "run_chain: ground-truth masses are required when not sequential");

  ChainResult out;
  double m_est = spec.m0_kg;
  double m_lam = spec.m0_kg;
  std::optional<double> m_true = spec.m0_kg;

  for (std::size_t k = 0; k + 1 < spec.bodies.size(); ++k) {
    const ChainBody& from = spec.bodies[k];
    const ChainBody& to = spec.bodies[k + 1];
    const double t0 = spec.rendezvous_mjd[k], t1 = spec.rendezvous_mjd[k + 1];

    ChainLeg leg;
    leg.leg = static_cast<int>(k) + 1;
    leg.from = from.name;
    leg.to = to.name;
    leg.dt_days = t1 - t0;

    const astro::OrbitElements departure = astro::propagate_kepler(
        from.elements, (t0 - from.epoch_mjd) * constants::day);
    const astro::CartesianState target = astro::elements_to_cartesian(
        astro::propagate_kepler(to.elements, (t1 - to.epoch_mjd) * constants::day));
    const double dt_s = leg.dt_days * constants::day;
    const astro::CartesianState coast =
        astro::elements_to_cartesian(astro::propagate_kepler(departure, dt_s));
    const auto [dr, dv] = astro::vvlh_relative(coast, target);

    dataset::TransferSample s;
    s.seed = derive_seed(seed, static_cast<std::uint64_t>(k));
    s.departure = departure;
    s.dt_s = dt_s;
    s.dr_vvlh_m = dr;
    s.dv_vvlh_ms = dv;

    // Ground-truth chain: solve the leg at the true running mass.
    if (with_truth && m_true) {
      dataset::TransferSample st = s;
      st.m0_kg = *m_true;
      const optctl::TransferOutcome truth = optctl::classify_transfer(
          problem_from_sample(st, spec.craft), derive_seed(s.seed, 99), co);
      leg.m0_true_kg = m_true;
      if (truth.label == optctl::TransferLabel::optimal) {
        leg.mf_true_kg = truth.mf_max_kg;
        m_true = truth.mf_max_kg;
      } else {
        m_true.reset();
      }
    }

    // Without a ground-truth starting mass the non-sequential chain cannot
    // evaluate this leg.
    if (!sequential && !leg.m0_true_kg.has_value()) {
      out.truncated = true;
      break;
    }

    // Estimated chain (classifier gate, then the regressor).
    leg.m0_estimate_kg = sequential ? m_est : leg.m0_true_kg.value();
    s.m0_kg = leg.m0_estimate_kg;
    {
      const dataset::TransferGeometry g = dataset::derive_geometry(s, spec.craft);
      s.dtheta_rad = g.dtheta_rad;
      s.dv_lambert_ms = g.dv_lambert_ms;
      s.mf_lam_kg = g.mf_lam_kg;
    }
    leg.sample = s;
    const Evaluation ev = evaluate_candidate(clf, reg, s, spec.craft);
    leg.feasible = ev.feasible;
    leg.probability = ev.probability;
    leg.mf_estimate_kg = ev.mf_estimate_kg;

    // Impulsive baseline chain: rocket equation at its own running mass.
    leg.m0_lambert_kg = sequential ? m_lam : leg.m0_true_kg.value();
    {
      dataset::TransferSample sl = s;
      sl.m0_kg = leg.m0_lambert_kg;
      const dataset::TransferGeometry g = dataset::derive_geometry(sl, spec.craft);
      leg.mf_lambert_kg = g.mf_lam_kg;
    }

    out.legs.push_back(leg);
    if (!ev.feasible) {
      out.truncated = true;
      break;
    }
    out.completed_legs = leg.leg;
    m_est = ev.mf_estimate_kg;
    m_lam = leg.mf_lambert_kg;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Misjudged-transfer report
// ---------------------------------------------------------------------------

struct MisjudgedCase {
  std::uint64_t seed = 0;
  bool labeled_feasible = false;
  bool predicted_feasible = false;
  double probability = 0.0;
  // Terminal accuracy of the best control program the solver found.
  double pos_residual_m = std::numeric_limits<double>::quiet_NaN();
  double vel_residual_ms = std::numeric_limits<double>::quiet_NaN();
  double full_throttle_fraction = std::numeric_limits<double>::quiet_NaN();
};

struct MisjudgedReport {
  std::size_t tested = 0;
  std::vector<MisjudgedCase> cases;
  double median_probability_margin = 0.0;  // |p - 1/2| over the whole test set
  double misjudged_probability_margin = 0.0;
};

/// Find every test row the classifier gets wrong and re-solve it to attach
/// the terminal errors of its best control program.  Feasible rows re-use
/// the sample's generation seed, so the solve reproduces the stored label.
inline MisjudgedReport run_misjudged(const neural::Mlp& clf,
                                     const dataset::Pool& pool,
                                     const std::vector<std::size_t>& rows,
                                     const SpacecraftConfig& craft = {},
                                     const optctl::ClassifyOptions& co = {}) {
  if (rows.empty()) throw std::invalid_argument("run_misjudged: no rows");
  MisjudgedReport out;
  out.tested = rows.size();

  std::vector<double> margins, mis_margins;
  for (std::size_t i : rows) {
    const dataset::TransferSample& s = pool.at(i);
    const double p = clf.predict_one(dataset::features_classification(s, craft));
    margins.push_back(std::abs(p - 0.5));
    const bool predicted = p >= 0.5;
    const bool labeled = s.label == optctl::TransferLabel::optimal;
    if (predicted == labeled) continue;

    MisjudgedCase c;
    c.seed = s.seed;
    c.labeled_feasible = labeled;
    c.predicted_feasible = predicted;
    c.probability = p;
    const optctl::TransferOutcome o = optctl::classify_transfer(
        problem_from_sample(s, craft), derive_seed(s.seed, 99), co);
    if (o.solution) {
      c.pos_residual_m = o.solution->pos_residual_m;
      c.vel_residual_ms = o.solution->vel_residual_ms;
      long full = 0;
      for (const optctl::ControlPoint& pt : o.solution->history)
        if (pt.throttle >= 0.99) ++full;
      c.full_throttle_fraction =
          static_cast<double>(full) /
          static_cast<double>(std::max<std::size_t>(1, o.solution->history.size()));
    } else if (o.probe) {
      c.pos_residual_m = o.probe->pos_err_m;
      c.vel_residual_ms = o.probe->vel_err_ms;
      c.full_throttle_fraction = 1.0;  // the probe thrusts flat out by definition
    }
    mis_margins.push_back(std::abs(p - 0.5));
    out.cases.push_back(c);
  }

  const auto median = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
  };
  out.median_probability_margin = median(margins);
  out.misjudged_probability_margin = median(mis_margins);
  return out;
}

}  // namespace ltx::pipeline
