#include <doctest.h>

#include <cmath>

#include "paris/feasible.hpp"
#include "paris/rng.hpp"

using namespace paris;

TEST_SUITE_BEGIN("feasible");

TEST_CASE("sigmoid scaling of raw spacings") {
  SystemParams p = SystemParams::desk_defaults();
  const double dmax = delta_max(p);
  const SpacingVars sv = raw_to_spacing(Eigen::MatrixXd::Zero(2, 2), p);
  for (int n = 0; n < 2; ++n)
    for (int m = 0; m < 2; ++m) CHECK(sv.delta(n, m) == doctest::Approx(0.5 * dmax));

  // saturated rows exceed the budget and get rescaled onto it
  const SpacingVars big = raw_to_spacing(Eigen::MatrixXd::Constant(2, 2, 50.0), p);
  for (int n = 0; n < 2; ++n) {
    CHECK(big.delta.row(n).sum() == doctest::Approx(dmax).epsilon(1e-12));
    CHECK(big.delta(n, 0) == doctest::Approx(dmax / 2.0).epsilon(1e-9));
  }
}

TEST_CASE("maximum available spacing at full scale") {
  const SystemParams p = SystemParams::table_defaults();  // D=10, M=8, gap 0.1
  CHECK(delta_max(p) == doctest::Approx(9.3));
}

TEST_CASE("position recovery from spacings") {
  SystemParams p = SystemParams::desk_defaults();
  p.n_waveguides = 1;
  p.n_pas_per_wg = 3;
  p.n_users = 1;
  p.region_length = 20.0;
  p.finalize();
  SpacingVars sv;
  sv.delta.resize(1, 3);
  sv.delta << 1.0, 2.0, 3.0;
  const PAPlacement pl = spacing_to_positions(sv, p);
  CHECK(pl.x(0, 0) == doctest::Approx(1.0));
  CHECK(pl.x(0, 1) == doctest::Approx(3.1));
  CHECK(pl.x(0, 2) == doctest::Approx(6.2));

  sv.delta.setZero();
  const PAPlacement tight = spacing_to_positions(sv, p);
  for (int m = 0; m < 3; ++m) CHECK(tight.x(0, m) == doctest::Approx(m * 0.1));

  // a row using the whole budget ends exactly at the region edge
  sv.delta << delta_max(p), 0.0, 0.0;
  CHECK(spacing_to_positions(sv, p).x(0, 2) == doctest::Approx(p.region_length));
}

TEST_CASE("spacing round trip is the identity") {
  SystemParams p = SystemParams::desk_defaults();
  p.n_pas_per_wg = 4;
  p.finalize();
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd raw(p.n_waveguides, p.n_pas_per_wg);
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = rng.normal();
    const PAPlacement pl = spacing_to_positions(raw_to_spacing(raw, p), p);
    const PAPlacement rt = spacing_to_positions(positions_to_spacing(pl, p), p);
    CHECK((rt.x - pl.x).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fuzzed raw inputs always produce feasible placements and powers") {
  SystemParams p = SystemParams::desk_defaults();
  p.n_pas_per_wg = 4;
  p.finalize();
  Rng rng(7);
  const int trials = 125000;  // about 1e6 scalar draws
  for (int t = 0; t < trials; ++t) {
    Eigen::MatrixXd raw(p.n_waveguides, p.n_pas_per_wg);
    for (Eigen::Index i = 0; i < raw.size(); ++i)
      raw.data()[i] = 20.0 * rng.normal();
    const PAPlacement pl = spacing_to_positions(raw_to_spacing(raw, p), p);
    for (int n = 0; n < p.n_waveguides; ++n)
      for (int m = 0; m < p.n_pas_per_wg; ++m) {
        REQUIRE(pl.x(n, m) >= 0.0);
        REQUIRE(pl.x(n, m) <= p.region_length + 1e-12);
        if (m > 0) REQUIRE(pl.x(n, m) - pl.x(n, m - 1) >= p.min_spacing - 1e-12);
      }
    Eigen::VectorXd praw(p.n_users);
    for (int k = 0; k < p.n_users; ++k) praw(k) = 30.0 * rng.normal();
    const Eigen::VectorXd pw = normalize_power(raw_power(praw, p), p);
    REQUIRE(pw.sum() <= p.power_budget + 1e-12);
    REQUIRE(pw.minCoeff() >= 0.0);
  }
}

TEST_CASE("phase normalization") {
  Eigen::VectorXcd raw(3);
  raw << std::complex<double>(3.0, 4.0), std::complex<double>(-1.0, 0.0),
      std::complex<double>(0.0, 0.0);
  const RISConfig r = normalize_phase(raw);
  const Eigen::VectorXcd u = r.unit_vector();
  CHECK(u(0).real() == doctest::Approx(0.6));
  CHECK(u(0).imag() == doctest::Approx(0.8));
  CHECK(r.phases(1) == doctest::Approx(M_PI));
  CHECK(u(2) == std::complex<double>(1.0, 0.0));  // zero input convention
  for (int l = 0; l < 3; ++l) {
    CHECK(r.phases(l) >= 0.0);
    CHECK(r.phases(l) < 2.0 * M_PI);
    CHECK(std::abs(std::abs(u(l)) - 1.0) < 1e-12);
  }
}

TEST_CASE("power activations") {
  const SystemParams p = SystemParams::desk_defaults();  // P_max = 10
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  const Eigen::VectorXd pt = raw_power(zero, p);
  CHECK(pt(0) == doctest::Approx(5.0));
  CHECK(raw_power(Eigen::VectorXd::Constant(1, 100.0), p)(0) ==
        doctest::Approx(10.0).epsilon(1e-9));

  // composition lands exactly on the budget
  const Eigen::VectorXd composed = normalize_power(pt, p);
  CHECK(composed(0) == 5.0);
  CHECK(composed(1) == 5.0);
  CHECK(composed.sum() == 10.0);

  Eigen::VectorXd over(2);
  over << 6.0, 6.0;
  const Eigen::VectorXd scaled = normalize_power(over, p);
  CHECK(scaled(0) == doctest::Approx(5.0));
  CHECK(scaled(1) == doctest::Approx(5.0));

  Eigen::VectorXd under(2);
  under << 2.0, 3.0;
  CHECK(normalize_power(under, p) == under);

  Eigen::VectorXd edge(1);
  edge << 10.0;
  CHECK(normalize_power(edge, p)(0) == 10.0);
}

TEST_SUITE_END();
