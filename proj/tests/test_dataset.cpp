#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "ltx/constants.hpp"
#include "ltx/dataset.hpp"
#include "ltx/rng.hpp"

using namespace ltx;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using Eigen::Vector3d;

namespace {

dataset::TransferSample synthetic_sample(std::uint64_t seed, bool optimal) {
  Rng rng(seed);
  dataset::TransferSample s;
  s.seed = seed;
  s.departure.a = rng.uniform(2.0, 3.0) * constants::au;
  s.departure.e = rng.uniform(0.0, 0.4);
  s.departure.i = rng.uniform(0.0, 20.0) * constants::deg;
  s.departure.raan = rng.uniform(0.0, constants::two_pi);
  s.departure.argp = rng.uniform(0.0, constants::two_pi);
  s.departure.ta = rng.uniform(0.0, constants::two_pi);
  s.m0_kg = rng.uniform(900.0, 2000.0);
  s.dt_s = rng.uniform(50.0, 500.0) * constants::day;
  s.dr_vvlh_m = rng.unit_vector() * rng.uniform(0.0, 0.2) * constants::au;
  s.dv_vvlh_ms = rng.unit_vector() * rng.uniform(0.0, 2000.0);
  s.label =
      optimal ? optctl::TransferLabel::optimal : optctl::TransferLabel::infeasible;
  if (optimal) s.mf_max_kg = rng.uniform(800.0, s.m0_kg);
  const auto g = dataset::derive_geometry(s, SpacecraftConfig{});
  s.dtheta_rad = g.dtheta_rad;
  s.dv_lambert_ms = g.dv_lambert_ms;
  s.mf_lam_kg = g.mf_lam_kg;
  return s;
}

dataset::Pool synthetic_pool(std::size_t n, std::uint64_t seed) {
  dataset::Pool pool;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i)
    pool.push_back(synthetic_sample(derive_seed(seed, i), rng.uniform() < 0.4));
  return pool;
}

/// Fields stored in file units round trip to within 2 ulp of the SI value;
/// unconverted fields must come back bit for bit.
bool near_ulp(double a, double b) {
  return a == b || std::abs(a - b) <= 5e-16 * std::max(std::abs(a), std::abs(b));
}

bool same_sample(const dataset::TransferSample& a, const dataset::TransferSample& b) {
  const bool mf_same = (std::isnan(a.mf_max_kg) && std::isnan(b.mf_max_kg)) ||
                       a.mf_max_kg == b.mf_max_kg;
  bool offsets = true;
  for (int k = 0; k < 3; ++k)
    offsets = offsets && near_ulp(a.dr_vvlh_m[k], b.dr_vvlh_m[k]) &&
              near_ulp(a.dv_vvlh_ms[k], b.dv_vvlh_ms[k]);
  return a.seed == b.seed && near_ulp(a.departure.a, b.departure.a) &&
         a.departure.e == b.departure.e && near_ulp(a.departure.i, b.departure.i) &&
         near_ulp(a.departure.raan, b.departure.raan) &&
         near_ulp(a.departure.argp, b.departure.argp) &&
         near_ulp(a.departure.ta, b.departure.ta) && a.m0_kg == b.m0_kg &&
         near_ulp(a.dt_s, b.dt_s) && offsets && a.label == b.label && mf_same &&
         a.dtheta_rad == b.dtheta_rad && a.dv_lambert_ms == b.dv_lambert_ms &&
         a.mf_lam_kg == b.mf_lam_kg;
}

}  // namespace

TEST_CASE("Geometry of a zero-offset sample") {
  const astro::OrbitElements dep{2.5 * constants::au, 0.1, 5.0 * constants::deg,
                                 0.3, 0.7, 1.1};
  const double m0 = 1500.0, dt = 250.0 * constants::day;
  const auto g = dataset::derive_geometry(dep, m0, dt, Vector3d::Zero(),
                                          Vector3d::Zero(), SpacecraftConfig{});
  // zero offsets: the rendezvous state is the ballistic chaser state
  REQUIRE((g.target.r - g.chaser_coast.r).norm() == 0.0);
  REQUIRE((g.target.v - g.chaser_coast.v).norm() == 0.0);
  REQUIRE_THAT(g.dtheta_rad,
               WithinRel(astro::angle_between(g.chaser0.r, g.target.r), 1e-14));
  // the two-impulse shadow of a coast costs nothing
  REQUIRE(g.dv_lambert_ms < 1e-6);
  REQUIRE_THAT(g.mf_lam_kg, WithinRel(m0, 1e-9));
}

TEST_CASE("Geometry quantities are consistent with their definitions") {
  const auto s = synthetic_sample(42, false);
  const SpacecraftConfig craft;
  const auto g = dataset::derive_geometry(s, craft);
  REQUIRE_THAT(g.mf_lam_kg,
               WithinRel(lambert::impulsive_final_mass(s.m0_kg, g.dv_lambert_ms,
                                                       craft.isp_s),
                         1e-14));
  REQUIRE(g.dv_lambert_ms >= 0.0);
  REQUIRE(g.dtheta_rad >= 0.0);
  REQUIRE(g.dtheta_rad <= constants::pi);
  // the stored offsets reproduce the target exactly
  const auto rebuilt =
      astro::vvlh_to_inertial(g.chaser_coast, s.dr_vvlh_m, s.dv_vvlh_ms);
  REQUIRE((rebuilt.r - g.target.r).norm() == 0.0);
  REQUIRE((rebuilt.v - g.target.v).norm() == 0.0);
}

TEST_CASE("Sample generation is reproducible and respects the ranges") {
  dataset::GenerateOptions opt;
  for (const std::uint64_t seed : {3ull, 8ull, 21ull}) {
    const auto first = dataset::generate_sample(seed, opt);
    const auto second = dataset::generate_sample(seed, opt);

    REQUIRE(first.discard == second.discard);
    REQUIRE(first.sample.has_value() == second.sample.has_value());
    if (!first.sample) continue;

    // bit-identical reproduction, checked through the serialized form
    REQUIRE(dataset::to_csv_row(*first.sample) == dataset::to_csv_row(*second.sample));
    REQUIRE(same_sample(*first.sample, *second.sample));

    const dataset::TransferSample& s = *first.sample;
    const dataset::SampleRanges& rg = opt.ranges;
    REQUIRE(s.seed == seed);
    REQUIRE(s.departure.a >= rg.a_min_au * constants::au);
    REQUIRE(s.departure.a <= rg.a_max_au * constants::au);
    REQUIRE(s.departure.e >= rg.e_min);
    REQUIRE(s.departure.e <= rg.e_max);
    REQUIRE(s.departure.i >= 0.0);
    REQUIRE(s.departure.i <= rg.i_max_deg * constants::deg);
    REQUIRE(s.m0_kg > opt.craft.dry_mass_kg);
    REQUIRE(s.m0_kg <= rg.m0_max_kg);
    REQUIRE(s.dt_s >= rg.dt_min_days * constants::day);
    REQUIRE(s.dt_s <= rg.dt_max_days * constants::day);
    REQUIRE(s.dr_vvlh_m.norm() <= rg.dr_max_au * constants::au);
    REQUIRE(s.dv_vvlh_ms.norm() <= rg.dv_max_kms * 1000.0);
    if (s.label == optctl::TransferLabel::optimal) {
      REQUIRE(s.mf_max_kg <= s.m0_kg);
      REQUIRE(s.mf_max_kg >= opt.craft.dry_mass_kg);
    } else {
      REQUIRE(s.label == optctl::TransferLabel::infeasible);
      REQUIRE(std::isnan(s.mf_max_kg));
    }
  }
}

TEST_CASE("Pool CSV round trip preserves every field") {
  dataset::Pool pool = synthetic_pool(25, 7);
  // exercise awkward values explicitly
  pool[0].dr_vvlh_m = Vector3d(-1.2345678901234567e-17 * constants::au, 0.0,
                               0.99999999999999989 * constants::au);
  pool[0].dv_vvlh_ms = Vector3d(0.1, -1e-300 * 1000.0, 9999.0);

  const std::string path = "dataset_roundtrip_tmp.csv";
  dataset::save_pool(path, pool);
  const dataset::Pool back = dataset::load_pool(path);
  REQUIRE(back.size() == pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) REQUIRE(same_sample(pool[i], back[i]));
  std::remove(path.c_str());
}

TEST_CASE("Pool CSV rejects malformed input") {
  const std::string path = "dataset_badfile_tmp.csv";

  SECTION("missing file") {
    REQUIRE_THROWS_WITH(dataset::load_pool("no_such_pool_file.csv"),
                        Catch::Matchers::ContainsSubstring("cannot open"));
  }
  SECTION("wrong version line") {
    std::ofstream(path) << "# ltx-pool-v9\n" << dataset::pool_columns << "\n";
    REQUIRE_THROWS_WITH(dataset::load_pool(path),
                        Catch::Matchers::ContainsSubstring("not a ltx-pool-v1 file"));
  }
  SECTION("missing column header") {
    std::ofstream(path) << "# ltx-pool-v1\n";
    REQUIRE_THROWS_WITH(dataset::load_pool(path),
                        Catch::Matchers::ContainsSubstring("missing column header"));
  }
  SECTION("field count, bad number, and label errors carry the line number") {
    const dataset::TransferSample good = synthetic_sample(1, true);
    {
      std::ofstream out(path);
      out << "# ltx-pool-v1\n" << dataset::pool_columns << "\n";
      out << dataset::to_csv_row(good) << ",extra\n";
    }
    REQUIRE_THROWS_WITH(dataset::load_pool(path),
                        Catch::Matchers::ContainsSubstring(":3: expected 20 fields"));
    {
      std::ofstream out(path);
      out << "# ltx-pool-v1\n" << dataset::pool_columns << "\n";
      std::string row = dataset::to_csv_row(good);
      row.replace(row.find(','), 2, ",x");  // corrupt the semimajor axis
      out << row << "\n";
    }
    REQUIRE_THROWS_WITH(dataset::load_pool(path),
                        Catch::Matchers::ContainsSubstring("malformed number"));
  }
  SECTION("final mass on a non-Optimal row is rejected") {
    dataset::TransferSample s = synthetic_sample(2, true);
    std::string row = dataset::to_csv_row(s);
    const auto pos = row.find("Optimal");
    row.replace(pos, 7, "Infeasible");
    std::ofstream(path) << "# ltx-pool-v1\n" << dataset::pool_columns << "\n" << row << "\n";
    REQUIRE_THROWS_WITH(
        dataset::load_pool(path),
        Catch::Matchers::ContainsSubstring("final mass given for a non-Optimal row"));
  }
  SECTION("header-only file loads as an empty pool, blank lines are skipped") {
    std::ofstream(path) << "# ltx-pool-v1\n" << dataset::pool_columns << "\n\n\n";
    REQUIRE(dataset::load_pool(path).empty());
  }
  std::remove(path.c_str());
}

TEST_CASE("Train/test splits") {
  const dataset::Pool pool = synthetic_pool(200, 99);

  SECTION("classification: disjoint and exhaustive") {
    const auto idx = dataset::split(pool, 50, 5, dataset::Task::classification);
    REQUIRE(idx.test.size() == 50);
    REQUIRE(idx.train.size() == 150);
    std::vector<bool> seen(pool.size(), false);
    for (auto i : idx.test) {
      REQUIRE_FALSE(seen[i]);
      seen[i] = true;
    }
    for (auto i : idx.train) {
      REQUIRE_FALSE(seen[i]);
      seen[i] = true;
    }
    for (bool b : seen) REQUIRE(b);
  }
  SECTION("regression: test rows all carry a final mass") {
    const auto idx = dataset::split(pool, 30, 5, dataset::Task::regression);
    REQUIRE(idx.test.size() == 30);
    REQUIRE(idx.train.size() == pool.size() - 30);
    for (auto i : idx.test)
      REQUIRE(pool[i].label == optctl::TransferLabel::optimal);
  }
  SECTION("deterministic in the seed") {
    const auto a = dataset::split(pool, 50, 5, dataset::Task::classification);
    const auto b = dataset::split(pool, 50, 5, dataset::Task::classification);
    const auto c = dataset::split(pool, 50, 6, dataset::Task::classification);
    REQUIRE(a.test == b.test);
    REQUIRE(a.train == b.train);
    REQUIRE(a.test != c.test);
  }
  SECTION("size validation") {
    REQUIRE_THROWS_AS(dataset::split(pool, pool.size(), 5, dataset::Task::classification),
                      std::invalid_argument);
    // fewer Optimal rows than the requested regression test size
    REQUIRE_THROWS_AS(dataset::split(pool, 150, 5, dataset::Task::regression),
                      std::invalid_argument);
  }
}

TEST_CASE("Z-score scaler") {
  Rng rng(123);
  Eigen::MatrixXd rows(40, 3);
  for (long i = 0; i < rows.rows(); ++i)
    rows.row(i) << rng.normal(5.0, 2.0), rng.normal(-10.0, 0.5), rng.uniform(0.0, 1e9);

  const dataset::Scaler sc = dataset::fit_scaler(rows);
  const Eigen::MatrixXd z = sc.apply(rows);
  for (long j = 0; j < 3; ++j) {
    REQUIRE_THAT(z.col(j).mean(), WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(z.col(j).array().square().mean(), WithinRel(1.0, 1e-12));
  }
  // inverse transformation restores the data
  REQUIRE((sc.inverse(z) - rows).norm() < 1e-9 * rows.norm());
  // the vector form agrees with the matrix form
  REQUIRE((sc.apply(Eigen::VectorXd(rows.row(7))) - z.row(7).transpose()).norm() < 1e-12);

  SECTION("degenerate inputs are rejected") {
    REQUIRE_THROWS_AS(dataset::fit_scaler(rows.topRows(1)), std::invalid_argument);
    Eigen::MatrixXd flat = rows;
    flat.col(1).setConstant(3.0);
    REQUIRE_THROWS_WITH(dataset::fit_scaler(flat),
                        Catch::Matchers::ContainsSubstring("column 1"));
  }
}

TEST_CASE("Feature group sizes") {
  const auto s = synthetic_sample(11, true);
  const SpacecraftConfig craft;
  // every group starts with (m0, dt) and a 6-value initial encoding plus a
  // 6-value final encoding; groups 7+ append derived scalars
  const int clf_expected[10] = {0, 14, 14, 14, 14, 14, 14, 15, 15, 16};
  const int reg_expected[10] = {0, 14, 14, 14, 14, 14, 14, 15, 15, 17};
  for (int g = 1; g <= 9; ++g) {
    REQUIRE(dataset::features_group(s, craft, g, dataset::Task::classification).size() ==
            clf_expected[g]);
    REQUIRE(dataset::features_group(s, craft, g, dataset::Task::regression).size() ==
            reg_expected[g]);
  }
  REQUIRE(dataset::features_classification(s, craft).size() ==
          dataset::classification_feature_count);
  REQUIRE(dataset::features_regression(s, craft).size() ==
          dataset::regression_feature_count);
  REQUIRE_THROWS_AS(dataset::features_group(s, craft, 0, dataset::Task::regression),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(dataset::features_group(s, craft, 10, dataset::Task::regression),
                    std::invalid_argument);
}

TEST_CASE("Feature layout matches the documented order") {
  const auto s = synthetic_sample(13, true);
  const SpacecraftConfig craft;
  const auto g = dataset::derive_geometry(s, craft);

  SECTION("classification set: cartesian states plus offsets and scalars") {
    const Eigen::VectorXd f = dataset::features_classification(s, craft);
    REQUIRE(f[0] == s.m0_kg);
    REQUIRE(f[1] == s.dt_s);
    for (int k = 0; k < 3; ++k) {
      REQUIRE(f[2 + k] == g.chaser0.r[k]);
      REQUIRE(f[5 + k] == g.chaser0.v[k]);
      REQUIRE(f[8 + k] == s.dr_vvlh_m[k]);
      REQUIRE(f[11 + k] == s.dv_vvlh_ms[k]);
    }
    REQUIRE(f[14] == s.dtheta_rad);
    REQUIRE(f[15] == s.dv_lambert_ms);
  }
  SECTION("regression set: departure elements plus offsets and scalars") {
    const Eigen::VectorXd f = dataset::features_regression(s, craft);
    REQUIRE(f[0] == s.m0_kg);
    REQUIRE(f[1] == s.dt_s);
    REQUIRE(f[2] == s.departure.a);
    REQUIRE(f[3] == s.departure.e);
    REQUIRE(f[4] == s.departure.i);
    REQUIRE(f[5] == s.departure.raan);
    REQUIRE(f[6] == s.departure.argp);
    REQUIRE(f[7] == s.departure.ta);
    for (int k = 0; k < 3; ++k) {
      REQUIRE(f[8 + k] == s.dr_vvlh_m[k]);
      REQUIRE(f[11 + k] == s.dv_vvlh_ms[k]);
    }
    REQUIRE(f[14] == s.dtheta_rad);
    REQUIRE(f[15] == s.dv_lambert_ms);
    REQUIRE(f[16] == s.mf_lam_kg);
  }
  SECTION("element-encoded groups carry the target elements") {
    const Eigen::VectorXd f1 =
        dataset::features_group(s, craft, 1, dataset::Task::classification);
    REQUIRE(f1[2] == s.departure.a);
    REQUIRE(f1[8] == g.target_elements.a);
    const Eigen::VectorXd f5 =
        dataset::features_group(s, craft, 5, dataset::Task::classification);
    for (int k = 0; k < 3; ++k) {
      REQUIRE(f5[2 + k] == g.chaser0.r[k]);
      REQUIRE(f5[8 + k] == g.target.r[k]);
    }
  }
}

TEST_CASE("Feature matrices and target vectors") {
  const dataset::Pool pool = synthetic_pool(30, 5);
  const SpacecraftConfig craft;
  std::vector<std::size_t> rows = {0, 3, 7, 11};

  const Eigen::MatrixXd m =
      dataset::feature_matrix(pool, rows, craft, dataset::Task::classification);
  REQUIRE(m.rows() == 4);
  REQUIRE(m.cols() == dataset::classification_feature_count);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Eigen::VectorXd f = dataset::features_classification(pool[rows[k]], craft);
    REQUIRE((m.row(static_cast<long>(k)).transpose() - f).norm() == 0.0);
  }
  REQUIRE_THROWS_AS(dataset::feature_matrix(pool, {}, craft, dataset::Task::regression),
                    std::invalid_argument);

  const Eigen::VectorXd y = dataset::label_vector(pool, rows);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    REQUIRE(y[static_cast<long>(k)] ==
            (pool[rows[k]].label == optctl::TransferLabel::optimal ? 1.0 : 0.0));
  }

  std::vector<std::size_t> optimal_rows, infeasible_rows;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    (pool[i].label == optctl::TransferLabel::optimal ? optimal_rows : infeasible_rows)
        .push_back(i);
  }
  const Eigen::VectorXd t = dataset::target_vector(pool, optimal_rows);
  for (std::size_t k = 0; k < optimal_rows.size(); ++k)
    REQUIRE(t[static_cast<long>(k)] == pool[optimal_rows[k]].mf_max_kg);
  REQUIRE_THROWS_AS(dataset::target_vector(pool, infeasible_rows),
                    std::invalid_argument);
}
