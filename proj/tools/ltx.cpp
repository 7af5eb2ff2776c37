#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ltx/dataset.hpp"
#include "ltx/neural.hpp"
#include "ltx/optimal_control.hpp"
#include "ltx/pipeline.hpp"
#include "ltx/problem.hpp"
#include "ltx/rng.hpp"

namespace {

namespace ds = ltx::dataset;
namespace nn = ltx::neural;
namespace pl = ltx::pipeline;
using nlohmann::json;

double elapsed_s(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Empty cell for a missing value, full precision otherwise.
std::string cell(double v) { return std::isfinite(v) ? g17(v) : std::string(); }

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

std::filesystem::path ensure_out_dir(const std::string& out_dir) {
  std::filesystem::path p(out_dir.empty() ? "." : out_dir);
  std::filesystem::create_directories(p);
  return p;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Config file (JSON): spacecraft, sample ranges, training settings
// ---------------------------------------------------------------------------

template <typename T>
void maybe(const json& j, const char* key, T& v) {
  if (j.contains(key)) j.at(key).get_to(v);
}

struct FileConfig {
  ltx::SpacecraftConfig craft;
  ds::SampleRanges ranges;
  nn::TrainConfig train;
};

FileConfig load_config(const std::string& path) {
  FileConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  const json j = json::parse(in);
  if (j.contains("craft")) {
    const json& jc = j.at("craft");
    maybe(jc, "tmax_n", c.craft.tmax_n);
    maybe(jc, "isp_s", c.craft.isp_s);
    maybe(jc, "dry_mass_kg", c.craft.dry_mass_kg);
  }
  if (j.contains("ranges")) {
    const json& jr = j.at("ranges");
    maybe(jr, "a_min_au", c.ranges.a_min_au);
    maybe(jr, "a_max_au", c.ranges.a_max_au);
    maybe(jr, "e_min", c.ranges.e_min);
    maybe(jr, "e_max", c.ranges.e_max);
    maybe(jr, "i_min_deg", c.ranges.i_min_deg);
    maybe(jr, "i_max_deg", c.ranges.i_max_deg);
    maybe(jr, "m0_min_kg", c.ranges.m0_min_kg);
    maybe(jr, "m0_max_kg", c.ranges.m0_max_kg);
    maybe(jr, "dt_min_days", c.ranges.dt_min_days);
    maybe(jr, "dt_max_days", c.ranges.dt_max_days);
    maybe(jr, "dr_max_au", c.ranges.dr_max_au);
    maybe(jr, "dv_max_kms", c.ranges.dv_max_kms);
    maybe(jr, "offset_norm_exponent", c.ranges.offset_norm_exponent);
  }
  if (j.contains("train")) {
    const json& jt = j.at("train");
    maybe(jt, "batch_size", c.train.batch_size);
    maybe(jt, "validation_fraction", c.train.validation_fraction);
    maybe(jt, "max_epochs", c.train.max_epochs);
    maybe(jt, "patience", c.train.patience);
    maybe(jt, "min_improvement", c.train.min_improvement);
    maybe(jt, "record_curves", c.train.record_curves);
    if (jt.contains("adam")) {
      const json& ja = jt.at("adam");
      maybe(ja, "step", c.train.adam.step);
      maybe(ja, "beta1", c.train.adam.beta1);
      maybe(ja, "beta2", c.train.adam.beta2);
      maybe(ja, "epsilon", c.train.adam.epsilon);
    }
  }
  return c;
}

ds::Task parse_task(const std::string& s) {
  if (s == "clf") return ds::Task::classification;
  if (s == "reg") return ds::Task::regression;
  throw std::invalid_argument("task must be clf or reg");
}

/// Unreadable or malformed user-supplied files are input errors, not
/// internal failures.
ds::Pool load_pool_arg(const std::string& path) {
  try {
    return ds::load_pool(path);
  } catch (const std::runtime_error& e) {
    throw std::invalid_argument(e.what());
  }
}

nn::Mlp load_model_arg(const std::string& path) {
  try {
    return nn::load_model(path);
  } catch (const std::runtime_error& e) {
    throw std::invalid_argument(e.what());
  }
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenProgress {
  std::uint64_t next_index = 0;
  std::uint64_t kept = 0;
  std::uint64_t discarded = 0;
};

/// Sidecar next to the pool CSV recording how far the seed walk has gone, so
/// an interrupted generation run resumes without re-labeling anything.
std::string progress_path(const std::string& out) { return out + ".progress"; }

bool load_progress(const std::string& out, GenProgress& p) {
  std::ifstream in(progress_path(out));
  if (!in) return false;
  return static_cast<bool>(in >> p.next_index >> p.kept >> p.discarded);
}

void save_progress(const std::string& out, const GenProgress& p) {
  std::ofstream f(progress_path(out), std::ios::trunc);
  f << p.next_index << ' ' << p.kept << ' ' << p.discarded << '\n';
}

int run_gen_data(std::uint64_t count, std::uint64_t master_seed,
                 const std::string& out_path, const ds::GenerateOptions& opt,
                 std::uint64_t max_index, int workers) {
  GenProgress prog;
  const bool resuming = std::filesystem::exists(out_path) && load_progress(out_path, prog);

  std::ofstream out;
  if (resuming) {
    out.open(out_path, std::ios::app);
    std::cerr << "resuming at index " << prog.next_index << " (" << prog.kept
              << " kept, " << prog.discarded << " discarded)\n";
  } else {
    out.open(out_path, std::ios::trunc);
    out << "# " << ds::pool_format_version << '\n' << ds::pool_columns << '\n';
    prog = GenProgress{};
  }
  if (!out) {
    std::cerr << "error: cannot open " << out_path << " for writing\n";
    return 1;
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::uint64_t session_done = 0;

  const auto commit = [&](std::uint64_t index, std::uint64_t seed,
                          const ds::GeneratedSample& g) {
    ++session_done;
    if (g.sample) {
      out << ds::to_csv_row(*g.sample) << std::endl;  // flush: job may be killed
      ++prog.kept;
    } else {
      ++prog.discarded;
    }
    save_progress(out_path, prog);

    const double dt = elapsed_s(t0);
    std::cerr << "idx " << index << " seed " << seed << ' ';
    if (g.sample)
      std::cerr << ltx::optctl::to_string(g.sample->label)
                << " mf=" << (g.sample->label == ltx::optctl::TransferLabel::optimal
                                  ? g.sample->mf_max_kg
                                  : 0.0);
    else
      std::cerr << (g.discard == ds::DiscardReason::homotopy_failed
                        ? "discard:homotopy"
                        : "discard:target-draws");
    std::cerr << " attempts=" << g.classify_attempts << " shoots=" << g.shoot_evaluations
              << " | kept " << prog.kept << '/' << count << " disc " << prog.discarded
              << " | " << dt / static_cast<double>(session_done) << " s/sample\n";
  };

  const auto check_budget = [&] {
    if (prog.next_index >= max_index)
      throw ltx::BudgetExhausted("gen-data: seed walk exhausted " +
                                 std::to_string(max_index) + " indices with only " +
                                 std::to_string(prog.kept) + " samples kept");
  };

  if (workers <= 1) {
    while (prog.kept < count) {
      check_budget();
      const std::uint64_t index = prog.next_index++;
      const std::uint64_t seed = ltx::derive_seed(master_seed, index);
      commit(index, seed, ds::generate_sample(seed, opt));
    }
  } else {
    // Batches of independent seeds, committed in index order so the pool is
    // identical to a sequential run.
    while (prog.kept < count) {
      check_budget();
      const std::uint64_t batch =
          std::min<std::uint64_t>(static_cast<std::uint64_t>(workers),
                                  max_index - prog.next_index);
      std::vector<ds::GeneratedSample> results(batch);
      std::vector<std::thread> threads;
      threads.reserve(batch);
      for (std::uint64_t w = 0; w < batch; ++w)
        threads.emplace_back([&, w] {
          results[w] =
              ds::generate_sample(ltx::derive_seed(master_seed, prog.next_index + w), opt);
        });
      for (std::thread& t : threads) t.join();
      for (std::uint64_t w = 0; w < batch && prog.kept < count; ++w) {
        const std::uint64_t index = prog.next_index++;
        commit(index, ltx::derive_seed(master_seed, index), results[w]);
      }
    }
  }
  std::cerr << "done: " << prog.kept << " samples in " << elapsed_s(t0) << " s\n";
  return 0;
}

// ---------------------------------------------------------------------------
// classify-one / pool-stats
// ---------------------------------------------------------------------------

int run_classify_one(std::uint64_t seed, const ds::GenerateOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const ds::GeneratedSample g = ds::generate_sample(seed, opt);
  std::cout << "seed " << seed << '\n';
  if (!g.sample) {
    std::cout << "discarded ("
              << (g.discard == ds::DiscardReason::homotopy_failed ? "homotopy budget"
                                                                  : "target draws")
              << ")\n";
  } else {
    const ds::TransferSample& s = *g.sample;
    std::cout << "label " << ltx::optctl::to_string(s.label) << '\n';
    if (s.label == ltx::optctl::TransferLabel::optimal)
      std::cout << "mf_max_kg " << s.mf_max_kg << '\n';
    std::cout << "dv_lambert_ms " << s.dv_lambert_ms << "\nmf_lam_kg " << s.mf_lam_kg
              << "\ndtheta_rad " << s.dtheta_rad << '\n';
  }
  std::cout << "attempts " << g.classify_attempts << "\nshoot_evaluations "
            << g.shoot_evaluations << "\nelapsed_s " << elapsed_s(t0) << '\n';
  return 0;
}

int run_pool_stats(const std::string& path) {
  const ds::Pool pool = load_pool_arg(path);
  std::size_t optimal = 0;
  for (const auto& s : pool)
    if (s.label == ltx::optctl::TransferLabel::optimal) ++optimal;
  std::cout << "rows " << pool.size() << "\noptimal " << optimal << "\ninfeasible "
            << pool.size() - optimal << '\n';
  if (!pool.empty())
    std::cout << "optimal_fraction "
              << static_cast<double>(optimal) / static_cast<double>(pool.size()) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int run_train(ds::Task task, const std::string& pool_path, std::vector<int> hidden,
              std::size_t n_train, std::size_t n_test, const nn::TrainConfig& tc,
              std::uint64_t seed, const ltx::SpacecraftConfig& craft,
              const std::string& out_dir, std::string model_name) {
  const ds::Pool pool = load_pool_arg(pool_path);
  const std::string tag = task == ds::Task::classification ? "clf" : "reg";

  pl::StudyConfig sc;
  sc.task = task;
  sc.n_train = n_train == 0 ? pool.size() : n_train;
  sc.n_test = n_test;
  sc.train = tc;
  sc.seed = seed;
  const pl::StudyRows rows = pl::study_rows(pool, sc);
  if (hidden.empty()) hidden = pl::default_hidden(task, false);

  const auto t0 = std::chrono::steady_clock::now();
  const pl::FitOutcome fit =
      task == ds::Task::classification
          ? pl::fit_classifier(pool, rows.train, hidden, tc, ltx::derive_seed(seed, 20),
                               craft)
          : pl::fit_regressor(pool, rows.train, hidden, tc, ltx::derive_seed(seed, 20),
                              craft);
  const double train_s = elapsed_s(t0);

  const Eigen::MatrixXd x_test = ds::feature_matrix(pool, rows.test, craft, task);
  json test;
  if (task == ds::Task::classification) {
    test["correct_rate"] = nn::correct_rate(fit.model, x_test,
                                            ds::label_vector(pool, rows.test));
  } else {
    const nn::RegressionMetrics met =
        nn::regression_metrics(fit.model, x_test, ds::target_vector(pool, rows.test));
    test["mae_kg"] = met.mae;
    test["are"] = met.are;
  }

  const std::filesystem::path dir = ensure_out_dir(out_dir);
  if (model_name.empty()) model_name = tag + ".mlp";
  const std::filesystem::path model_path = dir / model_name;
  nn::save_model(model_path.string(), fit.model);

  std::ostringstream curves;
  curves << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < fit.report.train_loss.size(); ++e)
    curves << e << ',' << g17(fit.report.train_loss[e]) << ','
           << g17(fit.report.val_loss[e]) << '\n';
  write_file(dir / ("train_curves_" + tag + ".csv"), curves.str());

  json summary{{"task", tag},
               {"pool", pool_path},
               {"pool_rows", pool.size()},
               {"train_rows", rows.train.size()},
               {"rows_fit", fit.rows_used},
               {"test_rows", rows.test.size()},
               {"hidden", hidden},
               {"best_epoch", fit.report.best_epoch},
               {"best_val_loss", fit.report.best_val_loss},
               {"epochs_run", fit.report.epochs_run},
               {"train_elapsed_s", train_s},
               {"test", test},
               {"model", model_path.string()},
               {"seed", seed}};
  write_json(dir / ("train_summary_" + tag + ".json"), summary);

  std::cout << tag << ": fit " << fit.rows_used << " rows, "
            << fit.report.epochs_run << " epochs, test " << test.dump()
            << ", model " << model_path.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

nn::Mlp load_checked_model(const std::string& path, nn::Head head, int features,
                           const char* what) {
  const nn::Mlp m = load_model_arg(path);
  if (m.head != head)
    throw std::invalid_argument(std::string(what) + ": " + path +
                                " has the wrong output head");
  if (m.input_size() != features)
    throw std::invalid_argument(std::string(what) + ": " + path + " expects " +
                                std::to_string(m.input_size()) + " features, need " +
                                std::to_string(features));
  return m;
}

int run_evaluate(const std::string& cand_path, const std::string& clf_path,
                 const std::string& reg_path, const ltx::SpacecraftConfig& craft,
                 const std::string& out_dir) {
  const ds::Pool pool = load_pool_arg(cand_path);
  if (pool.empty()) throw std::invalid_argument("evaluate: no candidates in " + cand_path);
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!(pool[i].m0_kg > craft.dry_mass_kg))
      throw std::invalid_argument("evaluate: candidate " + std::to_string(i) +
                                  " has wet mass <= dry mass");

  const nn::Mlp clf = load_checked_model(clf_path, nn::Head::sigmoid,
                                         ds::classification_feature_count, "classifier");
  const nn::Mlp reg = load_checked_model(reg_path, nn::Head::linear,
                                         ds::regression_feature_count, "regressor");

  std::vector<pl::Evaluation> evals(pool.size());
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < pool.size(); ++i)
    evals[i] = pl::evaluate_candidate(clf, reg, pool[i], craft);
  const double secs = elapsed_s(t0);

  std::size_t feasible = 0, clf_correct = 0, reg_rows = 0;
  double mae = 0.0, are = 0.0;
  std::ostringstream csv;
  csv << "index,seed,probability,feasible,mf_estimate_kg,label,mf_true_kg\n";
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const ds::TransferSample& s = pool[i];
    const pl::Evaluation& ev = evals[i];
    if (ev.feasible) ++feasible;
    const bool truly = s.label == ltx::optctl::TransferLabel::optimal;
    if (ev.feasible == truly) ++clf_correct;
    if (ev.feasible && truly) {
      ++reg_rows;
      mae += std::abs(ev.mf_estimate_kg - s.mf_max_kg);
      are += std::abs(ev.mf_estimate_kg - s.mf_max_kg) / s.mf_max_kg;
    }
    csv << i << ',' << s.seed << ',' << g17(ev.probability) << ','
        << (ev.feasible ? 1 : 0) << ',' << cell(ev.mf_estimate_kg) << ','
        << ltx::optctl::to_string(s.label) << ',' << cell(s.mf_max_kg) << '\n';
  }

  const std::filesystem::path dir = ensure_out_dir(out_dir);
  write_file(dir / "evaluation.csv", csv.str());

  json summary{{"candidates", pool.size()},
               {"feasible", feasible},
               {"elapsed_s", secs},
               {"throughput_per_s", static_cast<double>(pool.size()) / secs},
               {"clf_correct_rate",
                static_cast<double>(clf_correct) / static_cast<double>(pool.size())}};
  if (reg_rows > 0) {
    summary["reg_rows"] = reg_rows;
    summary["reg_mae_kg"] = mae / static_cast<double>(reg_rows);
    summary["reg_are"] = are / static_cast<double>(reg_rows);
  }
  write_json(dir / "evaluate_summary.json", summary);

  std::cout << "evaluated " << pool.size() << " candidates in " << secs << " s ("
            << static_cast<double>(pool.size()) / secs << "/s), " << feasible
            << " feasible\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

void write_threshold_outputs(const pl::ThresholdSweep& sw, const std::string& factor,
                             const char* value_header, const std::string& out_dir) {
  std::ostringstream csv;
  csv << value_header << ",label,mf_max_kg\n";
  for (const pl::SweepPointResult& r : sw.grid)
    csv << g17(r.value) << ',' << ltx::optctl::to_string(r.label) << ','
        << cell(r.mf_max_kg) << '\n';

  const std::filesystem::path dir = ensure_out_dir(out_dir);
  write_file(dir / ("sweep_" + factor + ".csv"), csv.str());
  write_json(dir / ("sweep_" + factor + "_summary.json"),
             json{{"factor", factor},
                  {"grid_points", sw.grid.size()},
                  {"found", sw.found},
                  {"threshold", num_or_null(sw.threshold)},
                  {"feasible_side", num_or_null(sw.feasible_side)},
                  {"infeasible_side", num_or_null(sw.infeasible_side)},
                  {"shoot_evaluations", sw.shoot_evaluations}});
  std::cout << "sweep " << factor << ": ";
  if (sw.found)
    std::cout << "threshold " << sw.threshold << " (feasible side " << sw.feasible_side
              << ")\n";
  else
    std::cout << "no feasibility boundary inside the grid\n";
}

void write_scatter_outputs(const std::vector<pl::OffsetPointResult>& points,
                           const std::string& factor, const char* header,
                           double unit, const std::string& out_dir) {
  std::ostringstream csv;
  csv << header << ",label,mf_max_kg\n";
  std::size_t feasible = 0;
  for (const pl::OffsetPointResult& r : points) {
    if (r.label == ltx::optctl::TransferLabel::optimal) ++feasible;
    csv << g17(r.offset.x() / unit) << ',' << g17(r.offset.y() / unit) << ','
        << g17(r.offset.z() / unit) << ',' << ltx::optctl::to_string(r.label) << ','
        << cell(r.mf_max_kg) << '\n';
  }
  const std::filesystem::path dir = ensure_out_dir(out_dir);
  write_file(dir / ("sweep_" + factor + ".csv"), csv.str());
  write_json(dir / ("sweep_" + factor + "_summary.json"),
             json{{"factor", factor},
                  {"points", points.size()},
                  {"feasible", feasible},
                  {"feasible_fraction",
                   static_cast<double>(feasible) / static_cast<double>(points.size())}});
  std::cout << "sweep " << factor << ": " << feasible << '/' << points.size()
            << " feasible\n";
}

int run_sweep(const std::string& factor, double lo, double hi, double step,
              double refine, int points, double dr_max_au, std::uint64_t seed,
              int workers, const ltx::SpacecraftConfig& craft,
              const std::string& out_dir) {
  pl::SweepOptions opts;
  opts.seed = seed;

  if (factor == "m0") {
    const pl::ThresholdSweep sw = pl::sweep_initial_mass(
        std::isnan(lo) ? 1000.0 : lo, std::isnan(hi) ? 2000.0 : hi,
        std::isnan(step) ? 10.0 : step, std::isnan(refine) ? 2.0 : refine, opts, craft);
    write_threshold_outputs(sw, "m0", "m0_kg", out_dir);
  } else if (factor == "dt") {
    const pl::ThresholdSweep sw = pl::sweep_transfer_time(
        std::isnan(lo) ? 100.0 : lo, std::isnan(hi) ? 500.0 : hi,
        std::isnan(step) ? 5.0 : step, std::isnan(refine) ? 1.0 : refine, opts, craft);
    write_threshold_outputs(sw, "dt", "dt_days", out_dir);
  } else if (factor == "dv-mag") {
    const std::vector<pl::SweepPointResult> grid = pl::sweep_velocity_ratio(
        std::isnan(lo) ? 0.7 : lo, std::isnan(hi) ? 1.3 : hi,
        std::isnan(step) ? 0.001 : step, opts, craft, workers);
    std::ostringstream csv;
    csv << "delta,label,mf_max_kg\n";
    double dmin = std::numeric_limits<double>::quiet_NaN(), dmax = dmin;
    std::size_t feasible = 0;
    for (const pl::SweepPointResult& r : grid) {
      if (r.label == ltx::optctl::TransferLabel::optimal) {
        ++feasible;
        if (!std::isfinite(dmin)) dmin = r.value;
        dmax = r.value;
      }
      csv << g17(r.value) << ',' << ltx::optctl::to_string(r.label) << ','
          << cell(r.mf_max_kg) << '\n';
    }
    const std::filesystem::path dir = ensure_out_dir(out_dir);
    write_file(dir / "sweep_dv_mag.csv", csv.str());
    write_json(dir / "sweep_dv_mag_summary.json",
               json{{"factor", "dv-mag"},
                    {"points", grid.size()},
                    {"feasible", feasible},
                    {"feasible_delta_min", num_or_null(dmin)},
                    {"feasible_delta_max", num_or_null(dmax)}});
    std::cout << "sweep dv-mag: feasible for delta in [" << dmin << ", " << dmax
              << "] (" << feasible << '/' << grid.size() << ")\n";
  } else if (factor == "dr-xy" || factor == "dr-yz") {
    const auto plane = factor == "dr-xy" ? pl::OffsetPlane::xy : pl::OffsetPlane::yz;
    const auto pts = pl::sweep_position_plane(plane, points, dr_max_au, opts, craft,
                                              workers);
    write_scatter_outputs(pts, factor == "dr-xy" ? "dr_xy" : "dr_yz",
                          "drx_au,dry_au,drz_au", ltx::constants::au, out_dir);
  } else if (factor == "dv-dir") {
    const auto pts = pl::sweep_velocity_direction(points, opts, craft, workers);
    write_scatter_outputs(pts, "dv_dir", "vtx_kms,vty_kms,vtz_kms", 1000.0, out_dir);
  } else {
    throw std::invalid_argument("sweep: unknown factor " + factor);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// ablation / scale-study
// ---------------------------------------------------------------------------

int run_ablation_cmd(ds::Task task, const std::string& pool_path, std::size_t n_train,
                     std::size_t n_test, const nn::TrainConfig& tc, std::uint64_t seed,
                     const ltx::SpacecraftConfig& craft, const std::string& out_dir) {
  const ds::Pool pool = load_pool_arg(pool_path);
  const std::string tag = task == ds::Task::classification ? "clf" : "reg";

  pl::StudyConfig sc;
  sc.task = task;
  sc.n_train = n_train != 0 ? n_train
                            : (task == ds::Task::classification ? 5000u : 10000u);
  sc.n_test = n_test;
  sc.train = tc;
  sc.seed = seed;
  const std::vector<pl::AblationEntry> table = pl::run_ablation(pool, sc, craft);

  std::ostringstream csv;
  json groups = json::array();
  if (task == ds::Task::classification) {
    csv << "group,correct_rate\n";
    for (const pl::AblationEntry& e : table) {
      csv << e.group << ',' << g17(e.correct_rate) << '\n';
      groups.push_back({{"group", e.group}, {"correct_rate", e.correct_rate}});
    }
  } else {
    csv << "group,mae_kg,are\n";
    for (const pl::AblationEntry& e : table) {
      csv << e.group << ',' << g17(e.mae_kg) << ',' << g17(e.are) << '\n';
      groups.push_back({{"group", e.group}, {"mae_kg", e.mae_kg}, {"are", e.are}});
    }
  }
  const std::filesystem::path dir = ensure_out_dir(out_dir);
  write_file(dir / ("ablation_" + tag + ".csv"), csv.str());
  write_json(dir / ("ablation_" + tag + "_summary.json"),
             json{{"task", tag},
                  {"n_train", sc.n_train},
                  {"n_test", sc.n_test},
                  {"hidden", pl::default_hidden(task, true)},
                  {"groups", groups},
                  {"seed", seed}});
  std::cout << "ablation " << tag << ":\n" << csv.str();
  return 0;
}

int run_scale_study_cmd(ds::Task task, const std::string& pool_path,
                        const std::vector<int>& layers, const std::vector<int>& nodes,
                        const std::vector<std::size_t>& data_sizes, std::size_t n_test,
                        const nn::TrainConfig& tc, std::uint64_t seed,
                        const ltx::SpacecraftConfig& craft, const std::string& out_dir) {
  const ds::Pool pool = load_pool_arg(pool_path);
  const std::string tag = task == ds::Task::classification ? "clf" : "reg";

  pl::StudyConfig sc;
  sc.task = task;
  sc.n_test = n_test;
  sc.train = tc;
  sc.seed = seed;
  const std::vector<pl::ScaleCell> cells =
      pl::run_scale_study(pool, sc, layers, nodes, data_sizes, craft);

  std::ostringstream csv;
  csv << (task == ds::Task::classification ? "layers,nodes,n_train,correct_rate,epochs"
                                           : "layers,nodes,n_train,mae_kg,are,epochs")
      << '\n';
  for (const pl::ScaleCell& c : cells) {
    csv << c.layers << ',' << c.nodes << ',' << c.n_train << ',';
    if (task == ds::Task::classification)
      csv << g17(c.correct_rate);
    else
      csv << g17(c.mae_kg) << ',' << g17(c.are);
    csv << ',' << c.epochs_run << '\n';
  }
  const std::filesystem::path dir = ensure_out_dir(out_dir);
  write_file(dir / ("scale_" + tag + ".csv"), csv.str());
  write_json(dir / ("scale_" + tag + "_summary.json"),
             json{{"task", tag},
                  {"cells", cells.size()},
                  {"layers", layers},
                  {"nodes", nodes},
                  {"data_sizes", data_sizes},
                  {"n_test", n_test},
                  {"seed", seed}});
  std::cout << "scale study " << tag << ": " << cells.size() << " cells\n" << csv.str();
  return 0;
}

// ---------------------------------------------------------------------------
// lambert-baseline
// ---------------------------------------------------------------------------

int run_lambert_baseline_cmd(const std::string& pool_path, double c_lo, double c_hi,
                             double c_step, int bins, std::size_t n_test,
                             const std::string& clf_path, const std::string& reg_path,
                             const nn::TrainConfig& tc, std::uint64_t seed,
                             const ltx::SpacecraftConfig& craft,
                             const std::string& out_dir) {
  const ds::Pool pool = load_pool_arg(pool_path);

  pl::StudyConfig sc;
  sc.task = ds::Task::classification;
  sc.n_train = pool.size();
  sc.n_test = n_test;
  sc.train = tc;
  sc.seed = seed;
  const pl::StudyRows rows = pl::study_rows(pool, sc);

  std::vector<double> c_grid;
  for (double c = c_lo; c < c_hi + 0.5 * c_step; c += c_step) c_grid.push_back(c);
  const pl::BaselineReport rep =
      pl::run_lambert_baseline(pool, rows.test, c_grid, bins, craft);

  const std::filesystem::path dir = ensure_out_dir(out_dir);
  std::ostringstream curve;
  curve << "c,correct_rate\n";
  for (std::size_t k = 0; k < rep.c_grid.size(); ++k)
    curve << g17(rep.c_grid[k]) << ',' << g17(rep.correct_rate[k]) << '\n';
  write_file(dir / "lambert_c_sweep.csv", curve.str());

  std::ostringstream hist;
  hist << "bin_lo_kg,bin_hi_kg,count\n";
  for (std::size_t k = 0; k < rep.bin_counts.size(); ++k)
    hist << g17(rep.bin_edges[k]) << ',' << g17(rep.bin_edges[k + 1]) << ','
         << rep.bin_counts[k] << '\n';
  write_file(dir / "lambert_error_histogram.csv", hist.str());

  json summary{{"test_rows", rows.test.size()},
               {"best_c", rep.best_c},
               {"best_correct_rate", rep.best_rate},
               {"regression_rows", rep.regression_rows},
               {"mae_kg", num_or_null(rep.mae_kg)},
               {"are", num_or_null(rep.are)},
               {"mean_signed_error_kg", num_or_null(rep.mean_signed_error_kg)}};

  // The trained models' numbers on the same rows, for side-by-side tables.
  if (!clf_path.empty()) {
    const nn::Mlp clf = load_checked_model(clf_path, nn::Head::sigmoid,
                                           ds::classification_feature_count,
                                           "classifier");
    const Eigen::MatrixXd x = ds::feature_matrix(pool, rows.test, craft,
                                                 ds::Task::classification);
    summary["dnn_correct_rate"] =
        nn::correct_rate(clf, x, ds::label_vector(pool, rows.test));
  }
  if (!reg_path.empty()) {
    const nn::Mlp reg = load_checked_model(reg_path, nn::Head::linear,
                                           ds::regression_feature_count, "regressor");
    std::vector<std::size_t> optimal;
    for (std::size_t i : rows.test)
      if (pool.at(i).label == ltx::optctl::TransferLabel::optimal) optimal.push_back(i);
    if (!optimal.empty()) {
      const Eigen::MatrixXd x = ds::feature_matrix(pool, optimal, craft,
                                                   ds::Task::regression);
      const Eigen::VectorXd truth = ds::target_vector(pool, optimal);
      const Eigen::VectorXd pred = reg.predict(x);
      const nn::RegressionMetrics met = nn::regression_metrics(reg, x, truth);
      summary["dnn_mae_kg"] = met.mae;
      summary["dnn_are"] = met.are;
      summary["dnn_mean_signed_error_kg"] = (pred - truth).mean();
    }
  }
  write_json(dir / "lambert_baseline_summary.json", summary);
  std::cout << "lambert baseline: best c " << rep.best_c << " rate " << rep.best_rate
            << ", mf error mean " << rep.mean_signed_error_kg << " kg (MAE "
            << rep.mae_kg << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// chain
// ---------------------------------------------------------------------------

pl::ChainSpec load_chain_spec(const std::string& path,
                              const ltx::SpacecraftConfig& craft) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("chain spec: cannot open " + path);
  const json j = json::parse(in);

  pl::ChainSpec spec;
  spec.craft = craft;
  j.at("m0_kg").get_to(spec.m0_kg);
  if (j.contains("craft")) {
    const json& jc = j.at("craft");
    maybe(jc, "tmax_n", spec.craft.tmax_n);
    maybe(jc, "isp_s", spec.craft.isp_s);
    maybe(jc, "dry_mass_kg", spec.craft.dry_mass_kg);
  }
  for (const json& jb : j.at("bodies")) {
    pl::ChainBody b;
    jb.at("name").get_to(b.name);
    jb.at("epoch_mjd").get_to(b.epoch_mjd);
    const json& je = jb.at("elements");
    b.elements.a = je.at("a_au").get<double>() * ltx::constants::au;
    b.elements.e = je.at("e").get<double>();
    b.elements.i = je.at("i_deg").get<double>() * ltx::constants::deg;
    b.elements.raan = je.at("raan_deg").get<double>() * ltx::constants::deg;
    b.elements.argp = je.at("argp_deg").get<double>() * ltx::constants::deg;
    b.elements.ta = je.at("ta_deg").get<double>() * ltx::constants::deg;
    spec.bodies.push_back(std::move(b));
  }
  j.at("rendezvous_mjd").get_to(spec.rendezvous_mjd);
  return spec;
}

json opt_num(const std::optional<double>& v) {
  return v ? json(*v) : json();
}

std::string opt_cell(const std::optional<double>& v) {
  return v ? g17(*v) : std::string();
}

int run_chain_cmd(const std::string& spec_path, const std::string& clf_path,
                  const std::string& reg_path, bool sequential, bool with_truth,
                  std::uint64_t seed, const ltx::SpacecraftConfig& craft,
                  const std::string& out_dir) {
  const pl::ChainSpec spec = load_chain_spec(spec_path, craft);
  const nn::Mlp clf = load_checked_model(clf_path, nn::Head::sigmoid,
                                         ds::classification_feature_count, "classifier");
  const nn::Mlp reg = load_checked_model(reg_path, nn::Head::linear,
                                         ds::regression_feature_count, "regressor");

  const pl::ChainResult res =
      pl::run_chain(spec, clf, reg, sequential, with_truth, ltx::derive_seed(seed, 40));

  std::ostringstream csv;
  csv << "leg,from,to,dt_days,m0_dnn_kg,probability,feasible,mf_dnn_kg,"
         "m0_lambert_kg,mf_lambert_kg,m0_true_kg,mf_true_kg\n";
  for (const pl::ChainLeg& leg : res.legs)
    csv << leg.leg << ',' << leg.from << ',' << leg.to << ',' << g17(leg.dt_days) << ','
        << g17(leg.m0_estimate_kg) << ',' << g17(leg.probability) << ','
        << (leg.feasible ? 1 : 0) << ',' << cell(leg.mf_estimate_kg) << ','
        << g17(leg.m0_lambert_kg) << ',' << g17(leg.mf_lambert_kg) << ','
        << opt_cell(leg.m0_true_kg) << ',' << opt_cell(leg.mf_true_kg) << '\n';

  const std::filesystem::path dir = ensure_out_dir(out_dir);
  write_file(dir / "chain_legs.csv", csv.str());

  json summary{{"spec", spec_path},
               {"legs", res.legs.size()},
               {"completed_legs", res.completed_legs},
               {"truncated", res.truncated},
               {"sequential", sequential}};
  if (!res.legs.empty()) {
    const pl::ChainLeg& last = res.legs.back();
    summary["final_mf_dnn_kg"] = num_or_null(last.mf_estimate_kg);
    summary["final_mf_lambert_kg"] = num_or_null(last.mf_lambert_kg);
    summary["final_mf_true_kg"] = opt_num(last.mf_true_kg);
    if (last.mf_true_kg && std::isfinite(last.mf_estimate_kg)) {
      summary["final_error_dnn_kg"] = last.mf_estimate_kg - *last.mf_true_kg;
      summary["final_error_lambert_kg"] = last.mf_lambert_kg - *last.mf_true_kg;
    }
  }
  write_json(dir / "chain_summary.json", summary);
  std::cout << "chain: " << res.completed_legs << '/' << res.legs.size()
            << " legs completed" << (res.truncated ? " (truncated)" : "") << '\n'
            << csv.str();
  return 0;
}

// ---------------------------------------------------------------------------
// misjudged
// ---------------------------------------------------------------------------

int run_misjudged_cmd(const std::string& pool_path, const std::string& clf_path,
                      std::size_t n_test, const nn::TrainConfig& tc, std::uint64_t seed,
                      const ltx::SpacecraftConfig& craft, const std::string& out_dir) {
  const ds::Pool pool = load_pool_arg(pool_path);
  const nn::Mlp clf = load_checked_model(clf_path, nn::Head::sigmoid,
                                         ds::classification_feature_count, "classifier");

  pl::StudyConfig sc;
  sc.task = ds::Task::classification;
  sc.n_train = pool.size();
  sc.n_test = n_test;
  sc.train = tc;
  sc.seed = seed;
  const pl::StudyRows rows = pl::study_rows(pool, sc);

  const pl::MisjudgedReport rep = pl::run_misjudged(clf, pool, rows.test, craft);

  std::size_t false_feasible = 0;
  std::ostringstream csv;
  csv << "seed,label,predicted,probability,pos_residual_m,vel_residual_ms,"
         "full_throttle_fraction\n";
  for (const pl::MisjudgedCase& c : rep.cases) {
    if (c.predicted_feasible) ++false_feasible;
    csv << c.seed << ',' << (c.labeled_feasible ? "Optimal" : "Infeasible") << ','
        << (c.predicted_feasible ? "Optimal" : "Infeasible") << ','
        << g17(c.probability) << ',' << cell(c.pos_residual_m) << ','
        << cell(c.vel_residual_ms) << ',' << cell(c.full_throttle_fraction) << '\n';
  }

  const std::filesystem::path dir = ensure_out_dir(out_dir);
  write_file(dir / "misjudged_cases.csv", csv.str());
  write_json(dir / "misjudged_summary.json",
             json{{"tested", rep.tested},
                  {"misjudged", rep.cases.size()},
                  {"false_feasible", false_feasible},
                  {"false_infeasible", rep.cases.size() - false_feasible},
                  {"correct_rate", 1.0 - static_cast<double>(rep.cases.size()) /
                                             static_cast<double>(rep.tested)},
                  {"median_probability_margin", rep.median_probability_margin},
                  {"misjudged_probability_margin", rep.misjudged_probability_margin},
                  {"seed", seed}});
  std::cout << "misjudged: " << rep.cases.size() << '/' << rep.tested
            << " (median |p-0.5| " << rep.misjudged_probability_margin
            << " vs pool " << rep.median_probability_margin << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-thrust transfer dataset and learning pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 20260813ull;
  int workers = 1;
  std::string config_path;
  std::string out_dir = ".";
  int ov_max_epochs = -1, ov_batch = -1, ov_patience = -1;
  double ov_lr = -1.0;
  app.add_option("--seed", seed, "Master seed for every stochastic stage");
  app.add_option("--workers", workers, "Worker threads for generation and sweeps")
      ->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON config (craft, ranges, train)");
  app.add_option("--out", out_dir, "Directory for report files");
  app.add_option("--max-epochs", ov_max_epochs, "Epoch cap override for training");
  app.add_option("--batch-size", ov_batch, "Minibatch size override for training");
  app.add_option("--patience", ov_patience, "Early-stop patience override");
  app.add_option("--lr", ov_lr, "Adam step size override");

  ltx::dataset::GenerateOptions gen_opt;

  // gen-data -------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "Generate a labeled transfer pool");
  std::uint64_t count = 16000;
  std::string out_path = "pool.csv";
  std::uint64_t max_index = 1ull << 22;
  gen->add_option("--count", count, "Samples to keep");
  gen->add_option("--out", out_path, "Pool CSV path (appends when resuming)");
  gen->add_option("--max-index", max_index, "Seed-walk safety cap");
  gen->add_option("--attempts", gen_opt.classify.attempts,
                  "Cold-start attempts per sample");
  gen->add_option("--dt-min", gen_opt.ranges.dt_min_days, "Transfer time floor, days");
  gen->add_option("--dt-max", gen_opt.ranges.dt_max_days, "Transfer time cap, days");
  gen->add_option("--offset-exp", gen_opt.ranges.offset_norm_exponent,
                  "Offset norm shaping exponent");

  // classify-one ----------------------------------------------------------
  auto* one = app.add_subcommand("classify-one", "Label a single seeded sample");
  std::uint64_t one_index = 0;
  bool one_raw_seed = false;
  one->add_option("--index", one_index, "Seed-walk index");
  one->add_flag("--raw-seed", one_raw_seed, "Treat --index as the sample seed itself");

  // pool-stats ------------------------------------------------------------
  auto* stats = app.add_subcommand("pool-stats", "Summarize a pool CSV");
  std::string stats_path = "pool.csv";
  stats->add_option("--pool", stats_path, "Pool CSV path");

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Fit a feasibility or final-mass network");
  std::string train_task = "clf", train_pool = "pool.csv", model_name;
  std::vector<int> train_hidden;
  std::size_t train_n_train = 0, train_n_test = 1000;
  train->add_option("--task", train_task, "clf or reg")
      ->check(CLI::IsMember({"clf", "reg"}));
  train->add_option("--pool", train_pool, "Labeled pool CSV");
  train->add_option("--hidden", train_hidden, "Hidden layer sizes (default 40,40,40 clf / 70,70,70,70 reg)")
      ->delimiter(',');
  train->add_option("--n-train", train_n_train, "Training rows (0 = all non-test rows)");
  train->add_option("--n-test", train_n_test, "Held-out test rows");
  train->add_option("--model", model_name, "Model filename inside --out");

  // evaluate ----------------------------------------------------------------
  auto* eval = app.add_subcommand("evaluate",
                                  "Judge candidates and estimate feasible final masses");
  std::string eval_cand, eval_clf, eval_reg;
  eval->add_option("--candidates", eval_cand, "Candidate transfers (pool CSV format)")
      ->required();
  eval->add_option("--clf", eval_clf, "Classifier model file")->required();
  eval->add_option("--reg", eval_reg, "Regressor model file")->required();

  // sweep ---------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "Feasibility sweeps around the reference transfer");
  std::string sweep_factor;
  double sw_lo = std::numeric_limits<double>::quiet_NaN();
  double sw_hi = std::numeric_limits<double>::quiet_NaN();
  double sw_step = std::numeric_limits<double>::quiet_NaN();
  double sw_refine = std::numeric_limits<double>::quiet_NaN();
  int sw_points = 3000;
  double sw_dr_max = 0.6;
  sweep->add_option("--factor", sweep_factor, "m0 | dt | dr-xy | dr-yz | dv-mag | dv-dir")
      ->required()
      ->check(CLI::IsMember({"m0", "dt", "dr-xy", "dr-yz", "dv-mag", "dv-dir"}));
  sweep->add_option("--lo", sw_lo, "Grid start (kg / days / delta)");
  sweep->add_option("--hi", sw_hi, "Grid end");
  sweep->add_option("--step", sw_step, "Coarse step");
  sweep->add_option("--refine", sw_refine, "Bisection bracket width (m0/dt)");
  sweep->add_option("--points", sw_points, "Scatter point count (dr/dv-dir)");
  sweep->add_option("--dr-max", sw_dr_max, "Scatter disc radius, au");

  // ablation --------------------------------------------------------------------
  auto* abl = app.add_subcommand("ablation", "Metric per feature group (1..9)");
  std::string abl_task = "clf", abl_pool = "pool.csv";
  std::size_t abl_n_train = 0, abl_n_test = 1000;
  abl->add_option("--task", abl_task, "clf or reg")->check(CLI::IsMember({"clf", "reg"}));
  abl->add_option("--pool", abl_pool, "Labeled pool CSV");
  abl->add_option("--n-train", abl_n_train, "Training rows (0 = 5000 clf / 10000 reg)");
  abl->add_option("--n-test", abl_n_test, "Held-out test rows");

  // scale-study -------------------------------------------------------------------
  auto* scale = app.add_subcommand("scale-study",
                                   "Metric over layers x nodes x training-set size");
  std::string scale_task = "clf", scale_pool = "pool.csv";
  std::vector<int> scale_layers{2, 3};
  std::vector<int> scale_nodes{30, 70};
  std::vector<std::size_t> scale_data{2000, 5000};
  std::size_t scale_n_test = 1000;
  scale->add_option("--task", scale_task, "clf or reg")
      ->check(CLI::IsMember({"clf", "reg"}));
  scale->add_option("--pool", scale_pool, "Labeled pool CSV");
  scale->add_option("--layers", scale_layers, "Hidden layer counts")->delimiter(',');
  scale->add_option("--nodes", scale_nodes, "Nodes per hidden layer")->delimiter(',');
  scale->add_option("--data-sizes", scale_data, "Training-set sizes (nested subsets)")
      ->delimiter(',');
  scale->add_option("--n-test", scale_n_test, "Held-out test rows");

  // lambert-baseline -----------------------------------------------------------------
  auto* lam = app.add_subcommand("lambert-baseline",
                                 "Impulsive-heuristic feasibility and mass baseline");
  std::string lam_pool = "pool.csv", lam_clf, lam_reg;
  double lam_c_lo = 0.01, lam_c_hi = 0.50, lam_c_step = 0.01;
  int lam_bins = 40;
  std::size_t lam_n_test = 1000;
  lam->add_option("--pool", lam_pool, "Labeled pool CSV");
  lam->add_option("--c-lo", lam_c_lo, "Heuristic constant grid start");
  lam->add_option("--c-hi", lam_c_hi, "Heuristic constant grid end");
  lam->add_option("--c-step", lam_c_step, "Heuristic constant grid step");
  lam->add_option("--bins", lam_bins, "Signed-error histogram bins");
  lam->add_option("--n-test", lam_n_test, "Held-out test rows");
  lam->add_option("--clf", lam_clf, "Classifier model for side-by-side numbers");
  lam->add_option("--reg", lam_reg, "Regressor model for side-by-side numbers");

  // chain ------------------------------------------------------------------------------
  auto* chain = app.add_subcommand("chain", "Evaluate a multi-leg rendezvous chain");
  std::string chain_spec, chain_clf, chain_reg;
  bool chain_non_sequential = false, chain_truth = false;
  chain->add_option("--spec", chain_spec, "Chain JSON (bodies, times, m0)")->required();
  chain->add_option("--clf", chain_clf, "Classifier model file")->required();
  chain->add_option("--reg", chain_reg, "Regressor model file")->required();
  chain->add_flag("--non-sequential", chain_non_sequential,
                  "Start every leg from the ground-truth mass (implies --truth)");
  chain->add_flag("--truth", chain_truth,
                  "Solve every leg with the indirect method for ground truth");

  // misjudged -----------------------------------------------------------------------------
  auto* mis = app.add_subcommand("misjudged", "Report the classifier's mistakes");
  std::string mis_pool = "pool.csv", mis_clf;
  std::size_t mis_n_test = 1000;
  mis->add_option("--pool", mis_pool, "Labeled pool CSV");
  mis->add_option("--clf", mis_clf, "Classifier model file")->required();
  mis->add_option("--n-test", mis_n_test, "Held-out test rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const FileConfig cfg = load_config(config_path);
    gen_opt.craft = cfg.craft;
    // CLI range flags already wrote into gen_opt.ranges; config supplies the rest.
    ds::SampleRanges ranges = cfg.ranges;
    if (gen->count("--dt-min")) ranges.dt_min_days = gen_opt.ranges.dt_min_days;
    if (gen->count("--dt-max")) ranges.dt_max_days = gen_opt.ranges.dt_max_days;
    if (gen->count("--offset-exp"))
      ranges.offset_norm_exponent = gen_opt.ranges.offset_norm_exponent;
    gen_opt.ranges = ranges;

    nn::TrainConfig tc = cfg.train;
    if (ov_max_epochs >= 0) tc.max_epochs = ov_max_epochs;
    if (ov_batch >= 0) tc.batch_size = ov_batch;
    if (ov_patience >= 0) tc.patience = ov_patience;
    if (ov_lr >= 0.0) tc.adam.step = ov_lr;

    if (gen->parsed())
      return run_gen_data(count, seed, out_path, gen_opt, max_index, workers);
    if (one->parsed()) {
      const std::uint64_t s = one_raw_seed ? one_index : ltx::derive_seed(seed, one_index);
      return run_classify_one(s, gen_opt);
    }
    if (stats->parsed()) return run_pool_stats(stats_path);
    if (train->parsed())
      return run_train(parse_task(train_task), train_pool, train_hidden, train_n_train,
                       train_n_test, tc, seed, cfg.craft, out_dir, model_name);
    if (eval->parsed())
      return run_evaluate(eval_cand, eval_clf, eval_reg, cfg.craft, out_dir);
    if (sweep->parsed())
      return run_sweep(sweep_factor, sw_lo, sw_hi, sw_step, sw_refine, sw_points,
                       sw_dr_max, seed, workers, cfg.craft, out_dir);
    if (abl->parsed())
      return run_ablation_cmd(parse_task(abl_task), abl_pool, abl_n_train, abl_n_test,
                              tc, seed, cfg.craft, out_dir);
    if (scale->parsed())
      return run_scale_study_cmd(parse_task(scale_task), scale_pool, scale_layers,
                                 scale_nodes, scale_data, scale_n_test, tc, seed,
                                 cfg.craft, out_dir);
    if (lam->parsed())
      return run_lambert_baseline_cmd(lam_pool, lam_c_lo, lam_c_hi, lam_c_step,
                                      lam_bins, lam_n_test, lam_clf, lam_reg, tc, seed,
                                      cfg.craft, out_dir);
    if (chain->parsed())
      return run_chain_cmd(chain_spec, chain_clf, chain_reg, !chain_non_sequential,
                           chain_truth || chain_non_sequential, seed, cfg.craft,
                           out_dir);
    if (mis->parsed())
      return run_misjudged_cmd(mis_pool, mis_clf, mis_n_test, tc, seed, cfg.craft,
                               out_dir);
  } catch (const ltx::BudgetExhausted& e) {
    std::cerr << "budget exhausted: " << e.what() << '\n';
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
