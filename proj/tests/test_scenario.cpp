#include <doctest.h>

#include <cmath>

#include "paris/rng.hpp"
#include "paris/scenario.hpp"

using namespace paris;

TEST_SUITE_BEGIN("scenario");

TEST_CASE("waveguide y-coordinates") {
  SystemParams p = SystemParams::desk_defaults();
  p.n_waveguides = 2;
  p.region_width = 10.0;
  p.finalize();
  CHECK(waveguide_y(1, p) == doctest::Approx(-2.5));
  CHECK(waveguide_y(2, p) == doctest::Approx(2.5));
  CHECK_THROWS_AS(waveguide_y(0, p), std::out_of_range);
  CHECK_THROWS_AS(waveguide_y(3, p), std::out_of_range);

  p.n_waveguides = 1;
  p.n_users = 1;
  p.finalize();
  CHECK(waveguide_y(1, p) == doctest::Approx(0.0));
}

TEST_CASE("waveguide layout is antisymmetric about the region center") {
  SystemParams p = SystemParams::table_defaults();
  for (int n = 1; n <= p.n_waveguides; ++n)
    CHECK(std::abs(waveguide_y(n, p) + waveguide_y(p.n_waveguides + 1 - n, p)) <
          1e-12);
  const Eigen::VectorXd ys = waveguide_ys(p);
  const double hw = p.region_width / 2.0;
  const double inner = p.region_width / (2.0 * p.n_waveguides);
  CHECK(ys.minCoeff() == doctest::Approx(-hw + inner));
  CHECK(ys.maxCoeff() == doctest::Approx(hw - inner));
}

TEST_CASE("default surface deployment point") {
  SystemParams p = SystemParams::desk_defaults();
  auto r = default_ris_position(p);
  CHECK(r[0] == doctest::Approx(5.0));
  CHECK(r[1] == doctest::Approx(0.0));
  CHECK(r[2] == doctest::Approx(2.5));

  p.region_length = 20.0;
  auto r2 = default_ris_position(p);
  CHECK(r2[0] == doctest::Approx(10.0));

  p.region_length = 0.0;
  p.height = 0.0;
  auto r3 = default_ris_position(p);
  CHECK(r3[0] == 0.0);
  CHECK(r3[2] == 0.0);
}

TEST_CASE("scenario sampling is deterministic and in range") {
  const SystemParams p = SystemParams::desk_defaults();
  const Scenario a = sample_scenario(p, 42);
  const Scenario b = sample_scenario(p, 42);
  CHECK(a.user_positions == b.user_positions);
  CHECK(a.nlos_pa_ris == b.nlos_pa_ris);
  CHECK(a.nlos_ris_user == b.nlos_ris_user);
  const Scenario c = sample_scenario(p, 43);
  CHECK(a.user_positions != c.user_positions);
}

TEST_CASE("sampled scenarios satisfy their invariants and statistics") {
  const SystemParams p = SystemParams::desk_defaults();
  const int n_seeds = 100000;
  double x_acc = 0.0;
  double var_acc = 0.0;
  std::int64_t x_count = 0, var_count = 0;
  for (int s = 0; s < n_seeds; ++s) {
    const Scenario sc = sample_scenario(p, std::uint64_t(s));
    for (int k = 0; k < p.n_users; ++k) {
      REQUIRE(sc.user_positions(k, 0) >= 0.0);
      REQUIRE(sc.user_positions(k, 0) <= p.region_length);
      REQUIRE(sc.user_positions(k, 1) >= -p.region_width / 2.0);
      REQUIRE(sc.user_positions(k, 1) <= p.region_width / 2.0);
      REQUIRE(sc.user_positions(k, 2) == 0.0);
      x_acc += sc.user_positions(k, 0);
      ++x_count;
    }
    if (s < 20000) {
      var_acc += sc.nlos_pa_ris.squaredNorm();
      var_count += sc.nlos_pa_ris.size();
    }
  }
  // uniform mean D/2 within 3 sigma of the sample mean
  const double mean = x_acc / double(x_count);
  const double sigma = (p.region_length / std::sqrt(12.0)) / std::sqrt(double(x_count));
  CHECK(std::abs(mean - p.region_length / 2.0) <= 3.0 * sigma);
  // unit-variance complex fading
  CHECK(var_acc / double(var_count) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("fixed lattice placement") {
  SystemParams p = SystemParams::desk_defaults();  // M = 2, D = 10
  PAPlacement pl = fixed_pa_placement(p);
  CHECK(pl.x(0, 0) == doctest::Approx(4.95));
  CHECK(pl.x(0, 1) == doctest::Approx(5.05));
  CHECK(pl.x.row(0) == pl.x.row(1));

  p.n_pas_per_wg = 1;
  p.finalize();
  CHECK(fixed_pa_placement(p).x(0, 0) == doctest::Approx(5.0));

  p.n_pas_per_wg = 3;
  p.finalize();
  PAPlacement p3 = fixed_pa_placement(p);
  CHECK(p3.x(0, 0) == doctest::Approx(4.9));
  CHECK(p3.x(0, 1) == doctest::Approx(5.0));
  CHECK(p3.x(0, 2) == doctest::Approx(5.1));
  for (int m = 0; m < 3; ++m) {
    CHECK(p3.x(0, m) >= 0.0);
    CHECK(p3.x(0, m) <= p.region_length);
    if (m > 0) CHECK(p3.x(0, m) - p3.x(0, m - 1) >= p.min_spacing - 1e-15);
  }

  SystemParams bad = SystemParams::desk_defaults();
  bad.n_pas_per_wg = 4;
  bad.region_length = 0.2;
  CHECK_THROWS(fixed_pa_placement(bad));
}

TEST_CASE("json round trips") {
  SystemParams p = SystemParams::table_defaults();
  p.rician_factor_db = 4.5;
  p.finalize();
  const SystemParams q = params_from_json(params_to_json(p));
  CHECK(q.n_waveguides == p.n_waveguides);
  CHECK(q.rician_factor_db == p.rician_factor_db);
  CHECK(q.kappa_linear() == p.kappa_linear());

  const Scenario sc = sample_scenario(SystemParams::desk_defaults(), 7);
  const Scenario rt = scenario_from_json(scenario_to_json(sc));
  CHECK(rt.user_positions == sc.user_positions);
  CHECK(rt.nlos_pa_ris == sc.nlos_pa_ris);
  CHECK(rt.nlos_ris_user == sc.nlos_ris_user);
  CHECK(rt.rng_seed == sc.rng_seed);
}

TEST_CASE("dataset generation is reproducible") {
  const SystemParams p = SystemParams::desk_defaults();
  const Dataset a = make_dataset(p, 10, 99);
  const Dataset b = make_dataset(p, 10, 99);
  REQUIRE(a.scenarios.size() == b.scenarios.size());
  for (std::size_t i = 0; i < a.scenarios.size(); ++i) {
    CHECK(a.scenarios[i].user_positions == b.scenarios[i].user_positions);
    CHECK(a.scenarios[i].nlos_pa_ris == b.scenarios[i].nlos_pa_ris);
  }
  const std::string path = "test_dataset_tmp.json";
  save_dataset(a, path);
  const Dataset c = load_dataset(path);
  CHECK(c.seed == a.seed);
  REQUIRE(c.scenarios.size() == a.scenarios.size());
  for (std::size_t i = 0; i < a.scenarios.size(); ++i)
    CHECK(c.scenarios[i].user_positions == a.scenarios[i].user_positions);
  std::remove(path.c_str());
}

TEST_SUITE_END();
