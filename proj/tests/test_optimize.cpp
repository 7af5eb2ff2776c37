#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "ltx/optimize.hpp"
#include "ltx/rng.hpp"

using namespace ltx;
using Catch::Matchers::WithinAbs;
using Eigen::VectorXd;

TEST_CASE("Differential evolution minimizes a shifted sphere") {
  const VectorXd target = (VectorXd(4) << 0.3, -1.1, 2.0, 0.7).finished();
  const auto objective = [&](const VectorXd& x) { return (x - target).squaredNorm(); };
  const VectorXd lower = VectorXd::Constant(4, -5.0);
  const VectorXd upper = VectorXd::Constant(4, 5.0);

  Rng rng(11);
  opt::DeOptions opts;
  opts.max_generations = 300;
  const opt::DeResult res = opt::differential_evolution(objective, lower, upper, rng, opts);
  REQUIRE(res.best_value < 1e-6);
  REQUIRE((res.best - target).norm() < 1e-3);
  REQUIRE(res.evaluations == opts.population * (1 + res.generations));
}

TEST_CASE("Differential evolution is deterministic and elitist") {
  const auto objective = [](const VectorXd& x) {
    return x.squaredNorm() + std::sin(5.0 * x[0]);
  };
  const VectorXd lower = VectorXd::Constant(3, -4.0);
  const VectorXd upper = VectorXd::Constant(3, 4.0);
  opt::DeOptions opts;
  opts.max_generations = 60;

  std::vector<double> history;
  Rng rng_a(77);
  const auto res_a = opt::differential_evolution(
      objective, lower, upper, rng_a, opts, [&](int, const VectorXd&, double best) {
        history.push_back(best);
        return false;
      });
  for (size_t i = 1; i < history.size(); ++i) REQUIRE(history[i] <= history[i - 1]);

  Rng rng_b(77);
  const auto res_b = opt::differential_evolution(objective, lower, upper, rng_b, opts);
  REQUIRE(res_a.best_value == res_b.best_value);
  REQUIRE(res_a.best == res_b.best);
}

TEST_CASE("Differential evolution respects bounds and callbacks") {
  const VectorXd lower = (VectorXd(2) << 1.0, -2.0).finished();
  const VectorXd upper = (VectorXd(2) << 3.0, -0.5).finished();
  const auto objective = [&](const VectorXd& x) {
    REQUIRE(x[0] >= lower[0]);
    REQUIRE(x[0] <= upper[0]);
    REQUIRE(x[1] >= lower[1]);
    REQUIRE(x[1] <= upper[1]);
    return x.squaredNorm();
  };
  Rng rng(5);
  opt::DeOptions opts;
  const auto res = opt::differential_evolution(
      objective, lower, upper, rng, opts,
      [](int gen, const VectorXd&, double) { return gen >= 7; });
  REQUIRE(res.stopped_by_callback);
  REQUIRE(res.generations == 7);
  // constrained optimum sits on the corner nearest the origin
  REQUIRE_THAT(res.best[0], WithinAbs(1.0, 0.2));
  REQUIRE_THAT(res.best[1], WithinAbs(-0.5, 0.2));
}

TEST_CASE("Differential evolution stall exit") {
  const auto objective = [](const VectorXd&) { return 1.0; };  // flat landscape
  const VectorXd lower = VectorXd::Constant(2, -1.0);
  const VectorXd upper = VectorXd::Constant(2, 1.0);
  Rng rng(3);
  opt::DeOptions opts;
  opts.max_generations = 500;
  opts.stall_generations = 10;
  opts.min_generations = 15;
  const auto res = opt::differential_evolution(objective, lower, upper, rng, opts);
  REQUIRE(res.generations == 15);
}

TEST_CASE("Differential evolution argument validation") {
  const auto objective = [](const VectorXd& x) { return x.squaredNorm(); };
  Rng rng(1);
  opt::DeOptions opts;
  REQUIRE_THROWS_AS(opt::differential_evolution(objective, VectorXd::Zero(2),
                                                VectorXd::Zero(3), rng, opts),
                    std::invalid_argument);
  opts.population = 3;
  REQUIRE_THROWS_AS(opt::differential_evolution(objective, VectorXd::Zero(2),
                                                VectorXd::Zero(2), rng, opts),
                    std::invalid_argument);
}

TEST_CASE("Levenberg-Marquardt solves a linear system") {
  Eigen::MatrixXd a(3, 3);
  a << 4.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 2.0;
  const VectorXd x_true = (VectorXd(3) << 1.0, -2.0, 0.5).finished();
  const VectorXd b = a * x_true;
  const auto residual = [&](const VectorXd& x) -> VectorXd { return a * x - b; };

  opt::LmOptions opts;
  opts.done_inf_norm = 1e-10;
  const auto res = opt::levenberg_marquardt(residual, VectorXd::Zero(3), opts);
  REQUIRE_FALSE(res.stalled);
  REQUIRE(res.inf_norm <= 1e-10);
  REQUIRE((res.x - x_true).norm() < 1e-8);
  // a linear problem needs only a handful of damped Newton steps
  REQUIRE(res.iterations <= 5);
}

TEST_CASE("Levenberg-Marquardt on the banana valley") {
  const auto residual = [](const VectorXd& x) -> VectorXd {
    VectorXd r(2);
    r << 10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0];
    return r;
  };
  opt::LmOptions opts;
  opts.max_iterations = 200;
  opts.done_inf_norm = 1e-10;
  const auto res =
      opt::levenberg_marquardt(residual, (VectorXd(2) << -1.2, 1.0).finished(), opts);
  REQUIRE_FALSE(res.stalled);
  REQUIRE_THAT(res.x[0], WithinAbs(1.0, 1e-7));
  REQUIRE_THAT(res.x[1], WithinAbs(1.0, 1e-7));
}

TEST_CASE("Levenberg-Marquardt recovers exponential-fit parameters") {
  const double a_true = 2.5, b_true = -0.7;
  std::vector<double> ts, ys;
  for (int i = 0; i <= 20; ++i) {
    const double t = 0.1 * i;
    ts.push_back(t);
    ys.push_back(a_true * std::exp(b_true * t));
  }
  const auto residual = [&](const VectorXd& x) -> VectorXd {
    VectorXd r(static_cast<int>(ts.size()));
    for (size_t i = 0; i < ts.size(); ++i)
      r[static_cast<int>(i)] = x[0] * std::exp(x[1] * ts[i]) - ys[i];
    return r;
  };
  opt::LmOptions opts;
  opts.done_inf_norm = 1e-12;
  const auto res =
      opt::levenberg_marquardt(residual, (VectorXd(2) << 1.0, 0.0).finished(), opts);
  REQUIRE_THAT(res.x[0], WithinAbs(a_true, 1e-6));
  REQUIRE_THAT(res.x[1], WithinAbs(b_true, 1e-6));
}

TEST_CASE("Levenberg-Marquardt stops immediately when already converged") {
  const auto residual = [](const VectorXd& x) -> VectorXd { return 1e-6 * x; };
  opt::LmOptions opts;  // default done_inf_norm 1e-2 already satisfied
  const auto res = opt::levenberg_marquardt(residual, VectorXd::Ones(3), opts);
  REQUIRE(res.iterations == 0);
  REQUIRE(res.evaluations == 1);
  REQUIRE_FALSE(res.stalled);
}

TEST_CASE("Levenberg-Marquardt flags a non-finite start") {
  const auto residual = [](const VectorXd& x) -> VectorXd {
    VectorXd r(1);
    r[0] = std::numeric_limits<double>::quiet_NaN() * x[0];
    return r;
  };
  const auto res = opt::levenberg_marquardt(residual, VectorXd::Ones(1), opt::LmOptions{});
  REQUIRE(res.stalled);
  REQUIRE(res.iterations == 0);
}

TEST_CASE("Levenberg-Marquardt settles at the least-squares optimum") {
  // over-determined inconsistent system: optimum is the normal-equations x
  Eigen::MatrixXd a(4, 2);
  a << 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0;
  const VectorXd b = (VectorXd(4) << 1.0, 2.0, 0.0, 1.0).finished();
  const auto residual = [&](const VectorXd& x) -> VectorXd { return a * x - b; };
  opt::LmOptions opts;
  opts.done_inf_norm = 1e-300;  // unreachable: forces the stall path
  const auto res = opt::levenberg_marquardt(residual, VectorXd::Zero(2), opts);
  REQUIRE(res.stalled);
  const VectorXd x_ls = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  REQUIRE((res.x - x_ls).norm() < 1e-8);
}
