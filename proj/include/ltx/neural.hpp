#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltx/dataset.hpp"
#include "ltx/rng.hpp"

namespace ltx::neural {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Activations and losses
// ---------------------------------------------------------------------------

inline double leaky_relu(double z, double slope) { return z >= 0.0 ? z : slope * z; }

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Output-layer activation: probabilities for the classifier, identity for
/// the regressor.
enum class Head { sigmoid, linear };

inline constexpr double bce_clamp = 1e-12;

/// Mean binary cross-entropy over a batch; predictions are clamped away from
/// {0, 1} so the logarithms stay finite.
inline double bce_loss(const VectorXd& predictions, const VectorXd& labels) {
  if (predictions.size() != labels.size() || predictions.size() == 0)
    throw std::invalid_argument("bce_loss: size mismatch or empty batch");
  double sum = 0.0;
  for (long i = 0; i < predictions.size(); ++i) {
    const double p = std::clamp(predictions[i], bce_clamp, 1.0 - bce_clamp);
    sum += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(predictions.size());
}

/// Mean squared error over a batch.
inline double mse_loss(const VectorXd& predictions, const VectorXd& targets) {
  if (predictions.size() != targets.size() || predictions.size() == 0)
    throw std::invalid_argument("mse_loss: size mismatch or empty batch");
  return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Fully connected network with Leaky-ReLU hidden layers and a single output
/// node.  Works on standardized features; the attached scalers map between
/// the raw feature/target spaces and the network's.
struct Mlp {
  Head head = Head::sigmoid;
  double leaky_slope = 0.3;
  std::vector<MatrixXd> w;  // w[l] is (fan_out, fan_in)
  std::vector<VectorXd> b;
  dataset::Scaler input_scaler;   // fitted on the training features
  dataset::Scaler target_scaler;  // linear head only: maps targets to z-scores

  int input_size() const { return w.empty() ? 0 : static_cast<int>(w.front().cols()); }
  int layer_count() const { return static_cast<int>(w.size()); }

  /// Forward pass on standardized inputs (rows = samples).  Returns the
  /// head output per row: a probability for sigmoid, a z-score for linear.
  VectorXd forward_std(const MatrixXd& x_std) const {
    if (x_std.cols() != input_size())
      throw std::invalid_argument("forward: expected " + std::to_string(input_size()) +
                                  " features, got " + std::to_string(x_std.cols()));
    MatrixXd a = x_std;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      a = ((a * w[l].transpose()).rowwise() + b[l].transpose())
              .unaryExpr([s = leaky_slope](double z) { return leaky_relu(z, s); });
    }
    VectorXd z = (a * w.back().transpose()).col(0) + VectorXd::Constant(a.rows(), b.back()[0]);
    if (head == Head::sigmoid)
      return z.unaryExpr([](double v) { return sigmoid(v); });
    return z;
  }

  /// Predictions in problem units from raw (unstandardized) features:
  /// probability of the positive class, or the regression value after the
  /// inverse target transform.
  VectorXd predict(const MatrixXd& x_raw) const {
    VectorXd out = forward_std(input_scaler.apply(x_raw));
    if (head == Head::linear && target_scaler.mean.size() == 1)
      out = (out.array() * target_scaler.stddev[0] + target_scaler.mean[0]).matrix();
    return out;
  }

  double predict_one(const VectorXd& x_raw) const {
    return predict(MatrixXd(x_raw.transpose()))[0];
  }
};

/// He-style initialization: zero biases, zero-mean normal weights with
/// variance 2/fan_in, suited to rectifier hidden units.
inline Mlp make_mlp(int input, const std::vector<int>& hidden, Head head,
                    std::uint64_t seed, double leaky_slope = 0.3) {
  if (input < 1) throw std::invalid_argument("make_mlp: input size must be positive");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("make_mlp: hidden sizes must be positive");

  Mlp m;
  m.head = head;
  m.leaky_slope = leaky_slope;
  Rng rng(seed);
  std::vector<int> sizes;
  sizes.push_back(input);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l], fan_out = sizes[l + 1];
    MatrixXd wl(fan_out, fan_in);
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (long r = 0; r < wl.rows(); ++r)
      for (long c = 0; c < wl.cols(); ++c) wl(r, c) = rng.normal(0.0, sd);
    m.w.push_back(std::move(wl));
    m.b.push_back(VectorXd::Zero(fan_out));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Backpropagation
// ---------------------------------------------------------------------------

struct Gradients {
  std::vector<MatrixXd> w;
  std::vector<VectorXd> b;
};

/// Loss of one standardized batch under the model's natural pairing:
/// cross-entropy for the sigmoid head, squared error for the linear head.
inline double batch_loss(const Mlp& m, const MatrixXd& x_std, const VectorXd& y) {
  const VectorXd p = m.forward_std(x_std);
  return m.head == Head::sigmoid ? bce_loss(p, y) : mse_loss(p, y);
}

/// Analytic gradient of the mean batch loss with respect to every weight and
/// bias, by reverse accumulation through the forward intermediates.
inline Gradients backward(const Mlp& m, const MatrixXd& x_std, const VectorXd& y) {
  const long n = x_std.rows();
  if (y.size() != n || n == 0)
    throw std::invalid_argument("backward: batch/label size mismatch");
  const std::size_t layers = m.w.size();

  // forward pass, keeping pre-activations and activations per layer
  std::vector<MatrixXd> act(layers + 1);
  std::vector<MatrixXd> pre(layers);
  act[0] = x_std;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = (act[l] * m.w[l].transpose()).rowwise() + m.b[l].transpose();
    if (l + 1 < layers) {
      act[l + 1] = pre[l].unaryExpr(
          [s = m.leaky_slope](double z) { return leaky_relu(z, s); });
    }
  }
  VectorXd p = pre.back().col(0);
  if (m.head == Head::sigmoid)
    p = p.unaryExpr([](double v) { return sigmoid(v); });

  // output delta of the mean loss; both heads reduce to the same clean form
  // (BCE with sigmoid: p - y; MSE with identity: 2 (p - y))
  VectorXd delta_out = (p - y) / static_cast<double>(n);
  if (m.head == Head::linear) delta_out *= 2.0;

  Gradients g;
  g.w.resize(layers);
  g.b.resize(layers);
  MatrixXd delta = delta_out;
  for (std::size_t l = layers; l-- > 0;) {
    g.w[l] = delta.transpose() * act[l];
    g.b[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = (delta * m.w[l]).cwiseProduct(pre[l - 1].unaryExpr(
          [s = m.leaky_slope](double z) { return z >= 0.0 ? 1.0 : s; }));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double step = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<MatrixXd> mw, vw;
  std::vector<VectorXd> mb, vb;
  long t = 0;

  static AdamState like(const Mlp& m) {
    AdamState s;
    for (std::size_t l = 0; l < m.w.size(); ++l) {
      s.mw.push_back(MatrixXd::Zero(m.w[l].rows(), m.w[l].cols()));
      s.vw.push_back(MatrixXd::Zero(m.w[l].rows(), m.w[l].cols()));
      s.mb.push_back(VectorXd::Zero(m.b[l].size()));
      s.vb.push_back(VectorXd::Zero(m.b[l].size()));
    }
    return s;
  }
};

/// One bias-corrected Adam update applied in place.
inline void adam_step(Mlp& m, const Gradients& g, AdamState& st, const AdamConfig& cfg) {
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    st.mw[l] = cfg.beta1 * st.mw[l] + (1.0 - cfg.beta1) * g.w[l];
    st.vw[l] = cfg.beta2 * st.vw[l] + (1.0 - cfg.beta2) * g.w[l].cwiseProduct(g.w[l]);
    m.w[l] -= (cfg.step * (st.mw[l] / c1).array() /
               ((st.vw[l] / c2).array().sqrt() + cfg.epsilon))
                  .matrix();
    st.mb[l] = cfg.beta1 * st.mb[l] + (1.0 - cfg.beta1) * g.b[l];
    st.vb[l] = cfg.beta2 * st.vb[l] + (1.0 - cfg.beta2) * g.b[l].cwiseProduct(g.b[l]);
    m.b[l] -= (cfg.step * (st.mb[l] / c1).array() /
               ((st.vb[l] / c2).array().sqrt() + cfg.epsilon))
                  .matrix();
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  int batch_size = 32;
  double validation_fraction = 0.1;
  AdamConfig adam;
  int max_epochs = 5000;
  int patience = 100;             // epochs without sufficient improvement
  double min_improvement = 1e-6;  // on the validation loss
  std::uint64_t seed = 0;
  bool record_curves = true;
};

struct TrainReport {
  std::vector<double> train_loss;  // one entry per epoch, on the 90% split
  std::vector<double> val_loss;    // on the 10% split
  int best_epoch = -1;             // index into the curves
  double best_val_loss = std::numeric_limits<double>::infinity();
  int epochs_run = 0;
};

/// Mini-batch training with a seed-deterministic 90/10 train/validation
/// split and early stopping on the validation loss.  `x_std`/`y` must already
/// be standardized (labels stay 0/1).  Returns the report; the model keeps
/// the weights of the best validation epoch.
inline TrainReport train(Mlp& m, const MatrixXd& x_std, const VectorXd& y,
                         const TrainConfig& cfg) {
  const long n = x_std.rows();
  if (y.size() != n) throw std::invalid_argument("train: feature/target size mismatch");
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0))
    throw std::invalid_argument("train: validation fraction must be in (0,1)");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  const long n_val = std::max<long>(1, std::lround(cfg.validation_fraction *
                                                   static_cast<double>(n)));
  if (n_val >= n) throw std::invalid_argument("train: too few samples to split");

  Rng rng(cfg.seed);
  std::vector<long> order(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);

  const auto gather = [&](long begin, long count) {
    MatrixXd xs(count, x_std.cols());
    VectorXd ys(count);
    for (long i = 0; i < count; ++i) {
      xs.row(i) = x_std.row(order[static_cast<std::size_t>(begin + i)]);
      ys[i] = y[order[static_cast<std::size_t>(begin + i)]];
    }
    return std::make_pair(xs, ys);
  };
  const auto [x_val, y_val] = gather(0, n_val);
  const auto [x_tr, y_tr] = gather(n_val, n - n_val);
  const long n_tr = x_tr.rows();

  TrainReport report;
  std::vector<MatrixXd> best_w = m.w;
  std::vector<VectorXd> best_b = m.b;
  AdamState adam = AdamState::like(m);
  int since_best = 0;

  std::vector<long> batch_order(static_cast<std::size_t>(n_tr));
  for (long i = 0; i < n_tr; ++i) batch_order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(batch_order);
    for (long start = 0; start < n_tr; start += cfg.batch_size) {
      const long count = std::min<long>(cfg.batch_size, n_tr - start);
      MatrixXd xb(count, x_tr.cols());
      VectorXd yb(count);
      for (long i = 0; i < count; ++i) {
        xb.row(i) = x_tr.row(batch_order[static_cast<std::size_t>(start + i)]);
        yb[i] = y_tr[batch_order[static_cast<std::size_t>(start + i)]];
      }
      adam_step(m, backward(m, xb, yb), adam, cfg.adam);
    }

    const double tl = batch_loss(m, x_tr, y_tr);
    const double vl = batch_loss(m, x_val, y_val);
    if (!std::isfinite(tl) || !std::isfinite(vl))
      throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch));
    if (cfg.record_curves) {
      report.train_loss.push_back(tl);
      report.val_loss.push_back(vl);
    }
    report.epochs_run = epoch + 1;

    if (vl < report.best_val_loss - cfg.min_improvement) {
      report.best_val_loss = vl;
      report.best_epoch = epoch;
      best_w = m.w;
      best_b = m.b;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  m.w = std::move(best_w);
  m.b = std::move(best_b);
  return report;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Fraction of rows whose thresholded probability (>= 0.5 reads as feasible)
/// matches the 0/1 label.
inline double correct_rate(const Mlp& m, const MatrixXd& x_raw, const VectorXd& labels) {
  if (x_raw.rows() == 0) throw std::invalid_argument("correct_rate: empty test set");
  if (labels.size() != x_raw.rows())
    throw std::invalid_argument("correct_rate: label count mismatch");
  const VectorXd p = m.predict(x_raw);
  long correct = 0;
  for (long i = 0; i < p.size(); ++i)
    if ((p[i] >= 0.5) == (labels[i] >= 0.5)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(p.size());
}

struct RegressionMetrics {
  double mae = 0.0;  // mean |error| in target units
  double are = 0.0;  // mean |error| / true value
};

/// MAE and ARE of predictions against true targets (both in problem units).
inline RegressionMetrics regression_metrics(const Mlp& m, const MatrixXd& x_raw,
                                            const VectorXd& truth) {
  if (x_raw.rows() == 0) throw std::invalid_argument("regression_metrics: empty test set");
  if (truth.size() != x_raw.rows())
    throw std::invalid_argument("regression_metrics: target count mismatch");
  const VectorXd p = m.predict(x_raw);
  RegressionMetrics out;
  for (long i = 0; i < p.size(); ++i) {
    const double err = std::abs(p[i] - truth[i]);
    out.mae += err;
    out.are += err / std::abs(truth[i]);
  }
  out.mae /= static_cast<double>(p.size());
  out.are /= static_cast<double>(p.size());
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline constexpr const char* model_format_version = "ltx-mlp-v1";

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error(path + ": unexpected end of file");
  return v;
}

inline double read_f64(std::istream& in, const std::string& path) {
  double v = 0.0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error(path + ": unexpected end of file");
  return v;
}

inline void write_scaler(std::ostream& out, const dataset::Scaler& sc) {
  write_u32(out, static_cast<std::uint32_t>(sc.mean.size()));
  for (long i = 0; i < sc.mean.size(); ++i) write_f64(out, sc.mean[i]);
  for (long i = 0; i < sc.stddev.size(); ++i) write_f64(out, sc.stddev[i]);
}

inline dataset::Scaler read_scaler(std::istream& in, const std::string& path) {
  const std::uint32_t n = read_u32(in, path);
  if (n > 4096) throw std::runtime_error(path + ": implausible scaler size");
  dataset::Scaler sc;
  sc.mean.resize(n);
  sc.stddev.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) sc.mean[i] = read_f64(in, path);
  for (std::uint32_t i = 0; i < n; ++i) sc.stddev[i] = read_f64(in, path);
  return sc;
}

}  // namespace detail

/// Binary model file: version line, head kind, Leaky-ReLU slope, layer
/// sizes, both scalers, then row-major weights and biases per layer.
inline void save_model(const std::string& path, const Mlp& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << model_format_version << '\n';
  detail::write_u32(out, m.head == Head::sigmoid ? 0u : 1u);
  detail::write_f64(out, m.leaky_slope);
  detail::write_u32(out, static_cast<std::uint32_t>(m.w.size()));
  detail::write_u32(out, static_cast<std::uint32_t>(m.input_size()));
  for (const auto& wl : m.w) detail::write_u32(out, static_cast<std::uint32_t>(wl.rows()));
  detail::write_scaler(out, m.input_scaler);
  detail::write_scaler(out, m.target_scaler);
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    for (long r = 0; r < m.w[l].rows(); ++r)
      for (long c = 0; c < m.w[l].cols(); ++c) detail::write_f64(out, m.w[l](r, c));
    for (long i = 0; i < m.b[l].size(); ++i) detail::write_f64(out, m.b[l][i]);
  }
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

inline Mlp load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  std::string version;
  if (!std::getline(in, version) || version != model_format_version)
    throw std::runtime_error(path + ": not a " + std::string(model_format_version) +
                             " file");
  Mlp m;
  const std::uint32_t head = detail::read_u32(in, path);
  if (head > 1) throw std::runtime_error(path + ": unknown head kind");
  m.head = head == 0 ? Head::sigmoid : Head::linear;
  m.leaky_slope = detail::read_f64(in, path);
  const std::uint32_t layers = detail::read_u32(in, path);
  if (layers == 0 || layers > 64) throw std::runtime_error(path + ": implausible depth");
  std::vector<std::uint32_t> sizes;
  sizes.push_back(detail::read_u32(in, path));
  for (std::uint32_t l = 0; l < layers; ++l) sizes.push_back(detail::read_u32(in, path));
  for (const std::uint32_t s : sizes)
    if (s == 0 || s > 65536) throw std::runtime_error(path + ": implausible layer size");
  if (sizes.back() != 1) throw std::runtime_error(path + ": output layer must be 1 node");
  m.input_scaler = detail::read_scaler(in, path);
  m.target_scaler = detail::read_scaler(in, path);
  for (std::uint32_t l = 0; l < layers; ++l) {
    MatrixXd wl(sizes[l + 1], sizes[l]);
    for (long r = 0; r < wl.rows(); ++r)
      for (long c = 0; c < wl.cols(); ++c) wl(r, c) = detail::read_f64(in, path);
    VectorXd bl(sizes[l + 1]);
    for (long i = 0; i < bl.size(); ++i) bl[i] = detail::read_f64(in, path);
    m.w.push_back(std::move(wl));
    m.b.push_back(std::move(bl));
  }
  // the file must end exactly here
  char extra = 0;
  if (in.read(&extra, 1))
    throw std::runtime_error(path + ": trailing bytes after the weight block");
  return m;
}

}  // namespace ltx::neural
