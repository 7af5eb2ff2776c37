#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ltx/rng.hpp"

namespace ltx::opt {

struct DeOptions {
  int population = 40;
  int max_generations = 200;
  double weight = 0.8;     // differential weight F
  double crossover = 0.9;  // crossover probability CR
  // Optional early exit: stop once the best value has improved by less than
  // `stall_tolerance` (relative) over the last `stall_generations`
  // generations, but never before `min_generations`.  0 disables the check.
  int stall_generations = 0;
  int min_generations = 0;
  double stall_tolerance = 1e-2;
};

struct DeResult {
  Eigen::VectorXd best;
  double best_value = std::numeric_limits<double>::infinity();
  int generations = 0;
  long evaluations = 0;
  bool stopped_by_callback = false;
};

/// Differential evolution, rand/1/bin variant with box constraints.
/// Selection is generational and elitist, so the best value never increases.
/// `on_generation(gen, best, best_value)` runs after each generation's
/// selection; returning true stops the search (used to hand off to a local
/// refiner once the basin looks good).  Fully deterministic given `rng`.
template <class F, class Callback>
DeResult differential_evolution(F&& objective, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, Rng& rng,
                                const DeOptions& opts, Callback&& on_generation) {
  const int dim = static_cast<int>(lower.size());
  if (upper.size() != dim || dim == 0)
    throw std::invalid_argument("differential_evolution: bad bounds");
  if (opts.population < 4)
    throw std::invalid_argument("differential_evolution: population must be >= 4");

  const int np = opts.population;
  std::vector<Eigen::VectorXd> pop(np), next(np);
  std::vector<double> val(np), next_val(np);
  DeResult res;
  res.best = Eigen::VectorXd::Zero(dim);

  for (int i = 0; i < np; ++i) {
    Eigen::VectorXd x(dim);
    for (int j = 0; j < dim; ++j) x[j] = rng.uniform(lower[j], upper[j]);
    pop[i] = x;
    val[i] = objective(x);
    ++res.evaluations;
    if (val[i] < res.best_value) {
      res.best_value = val[i];
      res.best = x;
    }
  }

  std::vector<double> best_history;
  best_history.reserve(opts.max_generations + 1);
  best_history.push_back(res.best_value);

  for (int gen = 1; gen <= opts.max_generations; ++gen) {
    for (int i = 0; i < np; ++i) {
      int a, b, c;
      do {
        a = static_cast<int>(rng.below(np));
      } while (a == i);
      do {
        b = static_cast<int>(rng.below(np));
      } while (b == i || b == a);
      do {
        c = static_cast<int>(rng.below(np));
      } while (c == i || c == a || c == b);

      Eigen::VectorXd trial = pop[i];
      const int j_rand = static_cast<int>(rng.below(dim));
      for (int j = 0; j < dim; ++j) {
        if (j == j_rand || rng.uniform() < opts.crossover) {
          double v = pop[a][j] + opts.weight * (pop[b][j] - pop[c][j]);
          trial[j] = std::clamp(v, lower[j], upper[j]);
        }
      }

      const double tv = objective(trial);
      ++res.evaluations;
      if (tv <= val[i]) {
        next[i] = trial;
        next_val[i] = tv;
        if (tv < res.best_value) {
          res.best_value = tv;
          res.best = trial;
        }
      } else {
        next[i] = pop[i];
        next_val[i] = val[i];
      }
    }
    pop.swap(next);
    val.swap(next_val);
    res.generations = gen;
    best_history.push_back(res.best_value);

    if (on_generation(gen, static_cast<const Eigen::VectorXd&>(res.best),
                      res.best_value)) {
      res.stopped_by_callback = true;
      break;
    }
    if (opts.stall_generations > 0 && gen >= opts.min_generations &&
        gen >= opts.stall_generations) {
      const double before = best_history[gen - opts.stall_generations];
      const double rel =
          (before - res.best_value) / std::max(std::abs(before), 1e-300);
      if (rel < opts.stall_tolerance) break;
    }
  }
  return res;
}

template <class F>
DeResult differential_evolution(F&& objective, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, Rng& rng,
                                const DeOptions& opts) {
  return differential_evolution(
      std::forward<F>(objective), lower, upper, rng, opts,
      [](int, const Eigen::VectorXd&, double) { return false; });
}

struct LmOptions {
  int max_iterations = 60;
  double fd_step = 1e-7;          // forward-difference step, scaled per component
  double initial_damping = 1e-3;  // tau; damping starts at tau * max diag(J^T J)
  double step_tolerance = 1e-13;  // stop when the relative step is this small
  double done_inf_norm = 1e-2;    // stop polishing once ||r||_inf is below this
};

struct LmResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;
  double inf_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  long evaluations = 0;
  bool stalled = false;  // stopped on step size / damping growth, not on done_inf_norm
};

/// Levenberg-Marquardt with a forward-difference Jacobian and Nielsen
/// damping updates.  `residual_fn` maps x to the residual vector; entries may
/// be arbitrarily large (penalty values) but should be finite.  Non-finite
/// trial residuals are treated as rejected steps.
template <class F>
LmResult levenberg_marquardt(F&& residual_fn, Eigen::VectorXd x0, const LmOptions& opts) {
  LmResult res;
  res.x = std::move(x0);
  const int n = static_cast<int>(res.x.size());

  Eigen::VectorXd r = residual_fn(res.x);
  ++res.evaluations;
  const int m = static_cast<int>(r.size());
  if (!r.allFinite()) {
    res.residual = r;
    res.stalled = true;
    return res;
  }
  double cost = 0.5 * r.squaredNorm();

  double damping = -1.0;  // initialized from the first Jacobian
  double nu = 2.0;

  while (res.iterations < opts.max_iterations) {
    if (r.lpNorm<Eigen::Infinity>() <= opts.done_inf_norm) break;
    ++res.iterations;

    Eigen::MatrixXd jac(m, n);
    bool jac_ok = true;
    for (int j = 0; j < n; ++j) {
      const double h = opts.fd_step * std::max(1.0, std::abs(res.x[j]));
      Eigen::VectorXd xp = res.x;
      xp[j] += h;
      const Eigen::VectorXd rp = residual_fn(xp);
      ++res.evaluations;
      if (!rp.allFinite()) {
        jac_ok = false;
        break;
      }
      jac.col(j) = (rp - r) / h;
    }
    if (!jac_ok) {
      res.stalled = true;
      break;
    }

    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (damping < 0.0)
      damping = opts.initial_damping * std::max(jtj.diagonal().maxCoeff(), 1e-300);

    bool accepted = false;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal().array() += damping;
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      if (!step.allFinite()) {
        damping *= nu;
        nu *= 2.0;
        continue;
      }
      if (step.norm() <= opts.step_tolerance * (res.x.norm() + opts.step_tolerance)) {
        res.stalled = true;
        accepted = true;  // leave the outer loop via the flag below
        break;
      }

      const Eigen::VectorXd x_new = res.x + step;
      const Eigen::VectorXd r_new = residual_fn(x_new);
      ++res.evaluations;
      const double cost_new = r_new.allFinite()
                                  ? 0.5 * r_new.squaredNorm()
                                  : std::numeric_limits<double>::infinity();
      const double predicted = 0.5 * step.dot(damping * step - grad);
      const double rho = (cost - cost_new) / std::max(predicted, 1e-300);

      if (std::isfinite(cost_new) && rho > 0.0) {
        res.x = x_new;
        r = r_new;
        cost = cost_new;
        const double shrink = 1.0 - std::pow(2.0 * rho - 1.0, 3);
        damping *= std::max(1.0 / 3.0, shrink);
        nu = 2.0;
        accepted = true;
      } else {
        damping *= nu;
        nu *= 2.0;
      }
    }
    if (!accepted || res.stalled) {
      res.stalled = res.stalled || !accepted;
      break;
    }
  }

  res.residual = r;
  res.inf_norm = r.lpNorm<Eigen::Infinity>();
  if (res.inf_norm <= opts.done_inf_norm) res.stalled = false;
  return res;
}

}  // namespace ltx::opt
