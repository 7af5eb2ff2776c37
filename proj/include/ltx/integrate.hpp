#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace ltx {

struct IntegratorOptions {
  double rtol = 1e-12;
  double atol = 1e-12;
  double initial_step = 0.0;  // 0 -> choose automatically
  double max_step = std::numeric_limits<double>::infinity();
  long max_steps = 5'000'000;
};

enum class StepStatus { ok, step_underflow, step_budget };

/// Dense-output polynomial for one accepted Dormand-Prince step, valid on
/// [t, t + h].
template <int N>
struct DenseStep {
  using Vec = Eigen::Matrix<double, N, 1>;
  double t = 0.0;
  double h = 0.0;
  Vec c1, c2, c3, c4, c5;

  Vec eval(double t_query) const {
    const double theta = (t_query - t) / h;
    const double omt = 1.0 - theta;
    return c1 + theta * (c2 + omt * (c3 + theta * (c4 + omt * c5)));
  }
};

/// Adaptive Dormand-Prince 5(4) stepper with FSAL reuse and 4th-order dense
/// output.  The driver loop is left to the caller so that event handling and
/// right-hand-side mode changes can be layered on top: call init(), then
/// step() repeatedly; call reset() after truncating a step at an event or
/// otherwise invalidating the cached derivative.
template <int N, class Rhs>
class Dopri5 {
 public:
  using Vec = Eigen::Matrix<double, N, 1>;

  Dopri5(Rhs& rhs, const IntegratorOptions& opts) : rhs_(&rhs), opts_(opts) {}

  void init(double t, const Vec& y, double t_end) {
    t_ = t;
    y_ = y;
    t_end_ = t_end;
    direction_ = (t_end >= t) ? 1.0 : -1.0;
    (*rhs_)(t_, y_, k1_);
    h_ = opts_.initial_step != 0.0 ? std::abs(opts_.initial_step) : guess_initial_step();
    steps_taken_ = 0;
  }

  /// Restart from (t, y), discarding the cached derivative.  Keeps the
  /// current step-size suggestion.
  void reset(double t, const Vec& y) {
    t_ = t;
    y_ = y;
    (*rhs_)(t_, y_, k1_);
  }

  double time() const { return t_; }
  const Vec& state() const { return y_; }
  bool finished() const {
    return direction_ * (t_end_ - t_) <= std::abs(t_end_) * 1e-15 + 1e-300;
  }
  long steps_taken() const { return steps_taken_; }

  /// Advance by one accepted step (retrying internally on error-test
  /// failures) and fill `dense`.  On success t()/state() give the step end.
  StepStatus step(DenseStep<N>& dense) {
    const double span = std::abs(t_end_ - t_);
    const double h_min = 16.0 * std::numeric_limits<double>::epsilon() *
                         std::max(std::abs(t_), std::abs(t_end_));
    for (;;) {
      if (++steps_taken_ > opts_.max_steps) return StepStatus::step_budget;
      double h = std::min({h_, opts_.max_step, std::abs(t_end_ - t_)});
      if (!(h > h_min)) {
        if (std::abs(t_end_ - t_) <= h_min) {  // already at the end point
          t_ = t_end_;
          return StepStatus::ok;
        }
        return StepStatus::step_underflow;
      }
      const double hd = direction_ * h;

      Vec k2, k3, k4, k5, k6, k7, y_new;
      (*rhs_)(t_ + hd * c2, y_ + hd * (a21 * k1_), k2);
      (*rhs_)(t_ + hd * c3, y_ + hd * (a31 * k1_ + a32 * k2), k3);
      (*rhs_)(t_ + hd * c4, y_ + hd * (a41 * k1_ + a42 * k2 + a43 * k3), k4);
      (*rhs_)(t_ + hd * c5, y_ + hd * (a51 * k1_ + a52 * k2 + a53 * k3 + a54 * k4), k5);
      (*rhs_)(t_ + hd, y_ + hd * (a61 * k1_ + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5),
              k6);
      y_new = y_ + hd * (a71 * k1_ + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      (*rhs_)(t_ + hd, y_new, k7);

      const Vec err_vec =
          hd * (e1 * k1_ + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      double err = 0.0;
      bool finite = y_new.allFinite();
      if (finite) {
        for (int i = 0; i < N; ++i) {
          const double sc =
              opts_.atol + opts_.rtol * std::max(std::abs(y_[i]), std::abs(y_new[i]));
          const double q = err_vec[i] / sc;
          err += q * q;
        }
        err = std::sqrt(err / N);
        finite = std::isfinite(err);
      }

      if (!finite) {
        h_ = 0.25 * h;
        continue;
      }
      if (err > 1.0) {
        h_ = h * std::max(0.1, 0.9 * std::pow(err, -0.2));
        continue;
      }

      dense.t = t_;
      dense.h = hd;
      dense.c1 = y_;
      dense.c2 = y_new - y_;
      dense.c3 = hd * k1_ - dense.c2;
      dense.c4 = dense.c2 - hd * k7 - dense.c3;
      dense.c5 = hd * (d1 * k1_ + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

      t_ += hd;
      y_ = y_new;
      k1_ = k7;  // first-same-as-last
      const double grow = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
      h_ = h * std::clamp(grow, 0.2, 5.0);
      (void)span;
      return StepStatus::ok;
    }
  }

 private:
  double guess_initial_step() const {
    double sc_y = 0.0, sc_f = 0.0;
    for (int i = 0; i < N; ++i) {
      const double sc = opts_.atol + opts_.rtol * std::abs(y_[i]);
      sc_y += (y_[i] / sc) * (y_[i] / sc);
      sc_f += (k1_[i] / sc) * (k1_[i] / sc);
    }
    const double d0 = std::sqrt(sc_y / N);
    const double d1v = std::sqrt(sc_f / N);
    double h0 = (d0 < 1e-5 || d1v < 1e-5) ? 1e-6 : 0.01 * d0 / d1v;
    return std::min(h0, std::abs(t_end_ - t_) / 10.0 + 1e-300);
  }

  // Dormand-Prince RK5(4)7M tableau.
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0,
                          d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0,
                          d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0,
                          d7 = 69997945.0 / 29380423.0;

  Rhs* rhs_;
  IntegratorOptions opts_;
  double t_ = 0.0, t_end_ = 0.0, h_ = 0.0, direction_ = 1.0;
  Vec y_ = Vec::Zero(), k1_ = Vec::Zero();
  long steps_taken_ = 0;
};

/// Convenience driver without events: integrate rhs from (t0, y0) to t1.
/// Returns the final state through `y0`; observer (if provided) sees every
/// accepted step end.
template <int N, class Rhs, class Observer>
StepStatus integrate_fixed_interval(Rhs& rhs, double t0,
                                    Eigen::Matrix<double, N, 1>& y0, double t1,
                                    const IntegratorOptions& opts, Observer&& observer) {
  Dopri5<N, Rhs> stepper(rhs, opts);
  stepper.init(t0, y0, t1);
  DenseStep<N> dense;
  while (!stepper.finished()) {
    const StepStatus st = stepper.step(dense);
    if (st != StepStatus::ok) return st;
    observer(stepper.time(), stepper.state());
  }
  y0 = stepper.state();
  return StepStatus::ok;
}

template <int N, class Rhs>
StepStatus integrate_fixed_interval(Rhs& rhs, double t0,
                                    Eigen::Matrix<double, N, 1>& y0, double t1,
                                    const IntegratorOptions& opts) {
  return integrate_fixed_interval<N>(
      rhs, t0, y0, t1, opts, [](double, const Eigen::Matrix<double, N, 1>&) {});
}

}  // namespace ltx
