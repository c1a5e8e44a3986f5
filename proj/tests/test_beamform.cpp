#include <doctest.h>

#include <cmath>

#include "paris/beamform.hpp"
#include "paris/rng.hpp"

using namespace paris;
using cd = std::complex<double>;

namespace {

Eigen::MatrixXcd random_eff(int K, int N, Rng& rng, double scale = 1e-4) {
  Eigen::MatrixXcd m(K, N);
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < N; ++n) m(k, n) = scale * cd(rng.normal(), rng.normal());
  return m;
}

double angle_between(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
  return std::acos(std::min(1.0, c)) * 180.0 / M_PI;
}

} // namespace

TEST_SUITE_BEGIN("beamform");

TEST_CASE("pseudo-inverse of a diagonal channel") {
  Eigen::MatrixXcd Z(2, 2);
  Z << cd(1, 0), cd(0, 0), cd(0, 0), cd(2, 0);
  const Eigen::MatrixXcd U = zf_matrix(Z);
  CHECK(std::abs(U(0, 0) - cd(1, 0)) < 1e-12);
  CHECK(std::abs(U(1, 1) - cd(0.5, 0)) < 1e-12);
  CHECK(std::abs(U(0, 1)) < 1e-12);
  CHECK(std::abs(U(1, 0)) < 1e-12);
}

TEST_CASE("rank-one pseudo-inverse") {
  Rng rng(3);
  const Eigen::MatrixXcd Z = random_eff(1, 3, rng, 1.0);
  const Eigen::MatrixXcd U = zf_matrix(Z);
  const Eigen::VectorXcd want = Z.row(0).adjoint() / Z.row(0).squaredNorm();
  CHECK((U.col(0) - want).norm() < 1e-12);
}

TEST_CASE("zero-forcing residual stays small on well-conditioned draws") {
  Rng rng(5);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = 2 + int(rng.next_u64() % 3);  // 2..4
    const int N = K + int(rng.next_u64() % 3);  // K..K+2
    const Eigen::MatrixXcd Z = random_eff(K, N, rng, 1.0);
    ZfDiag diag;
    const Eigen::MatrixXcd U = zf_matrix(Z, &diag);
    if (diag.cond_zzh >= 1e8) continue;
    ++checked;
    const Eigen::MatrixXcd R =
        Z * U - Eigen::MatrixXcd::Identity(K, K);
    REQUIRE(R.norm() <= 1e-8);
  }
  CHECK(checked > 900);
}

TEST_CASE("near-singular channels fall back to the jittered inverse") {
  Eigen::MatrixXcd Z(2, 2);
  Z << cd(1, 0), cd(0, 1), cd(1, 0), cd(0, 1);  // identical rows
  ZfDiag diag;
  const Eigen::MatrixXcd U = zf_matrix(Z, &diag);
  CHECK(diag.jittered);
  CHECK(U.allFinite());
}

TEST_CASE("hybrid direction endpoints") {
  Rng rng(7);
  const Eigen::MatrixXcd eff = random_eff(2, 3, rng);
  const Eigen::MatrixXcd U = zf_matrix(eff);
  const Eigen::VectorXcd zf_dir = U.col(0) / U.col(0).norm();
  const Eigen::VectorXcd mrt_dir = eff.row(0).adjoint().normalized();
  CHECK((hzm_direction(0, 1.0, eff) - zf_dir).norm() < 1e-12);
  CHECK((hzm_direction(0, 0.0, eff) - mrt_dir).norm() < 1e-12);
  CHECK_THROWS_AS(hzm_direction(0, 1.5, eff), std::invalid_argument);

  // K = 1: both endpoints coincide
  const Eigen::MatrixXcd one = random_eff(1, 3, rng);
  const Eigen::VectorXcd m1 = one.row(0).adjoint().normalized();
  for (double a : {0.0, 0.3, 1.0})
    CHECK((hzm_direction(0, a, one) - m1).norm() < 1e-10);
}

TEST_CASE("hybrid assembly meets the power budget exactly") {
  Rng rng(9);
  const Eigen::MatrixXcd eff = random_eff(3, 4, rng);
  HzmParams hp;
  hp.alpha.resize(3);
  hp.alpha << 0.2, 0.9, 0.5;
  hp.power.resize(3);
  hp.power << 1.0, 4.0, 2.5;
  const Beamformer b = assemble_hzm(hp, eff);
  CHECK(b.total_power() == doctest::Approx(7.5).epsilon(1e-12));
  for (int k = 0; k < 3; ++k)
    CHECK(b.W.col(k).norm() == doctest::Approx(std::sqrt(hp.power(k))).epsilon(1e-12));

  HzmParams zero = hp;
  zero.power(1) = 0.0;
  CHECK(assemble_hzm(zero, eff).W.col(1).norm() == 0.0);
}

TEST_CASE("regularized closed form") {
  SystemParams p = SystemParams::desk_defaults();
  Rng rng(11);

  // one user: the regularized direction is the matched one
  const Eigen::MatrixXcd one = random_eff(1, 3, rng);
  const Beamformer b1 = rzf_closed_form(one, p);
  const Eigen::VectorXcd mrt =
      std::sqrt(p.power_budget) * one.row(0).adjoint().normalized();
  CHECK((b1.W.col(0) - mrt).norm() < 1e-10);

  // zero regularization gives matched directions for every user
  const Eigen::MatrixXcd eff = random_eff(2, 3, rng);
  const Eigen::VectorXd pw = Eigen::VectorXd::Constant(2, 5.0);
  const Beamformer b0 = rzf_closed_form(eff, p, pw, Eigen::VectorXd::Zero(2));
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXcd want =
        std::sqrt(5.0) * eff.row(k).adjoint().normalized();
    CHECK((b0.W.col(k) - want).norm() < 1e-10);
  }

  // vanishing noise approaches zero forcing
  SystemParams tiny = p;
  tiny.noise_power = 1e-15;
  tiny.finalize();
  const Eigen::MatrixXcd sq = random_eff(3, 3, rng, 1.0);
  const Beamformer bz = rzf_closed_form(sq, tiny);
  const Eigen::MatrixXcd U = zf_matrix(sq);
  for (int k = 0; k < 3; ++k)
    CHECK(angle_between(bz.W.col(k), U.col(k)) < 1.0);
}

TEST_CASE("single-user refinement converges to full-power matched beam") {
  SystemParams p = SystemParams::desk_defaults();
  Rng rng(13);
  const Eigen::MatrixXcd eff = random_eff(1, 2, rng);
  Beamformer init;
  init.W.resize(2, 1);
  init.W << cd(1e-2, 2e-2), cd(-3e-2, 1e-2);
  const RefineResult r = refine_beams(eff, p, Objective::sum_rate, init, 500);
  CHECK(r.beams.total_power() == doctest::Approx(p.power_budget).epsilon(1e-6));
  const Eigen::VectorXcd mrt = eff.row(0).adjoint().normalized();
  CHECK(angle_between(r.beams.W.col(0), mrt) < 0.5);
}

TEST_CASE("refinement never loses ground") {
  SystemParams p = SystemParams::desk_defaults();
  Rng rng(15);
  for (int trial = 0; trial < 500; ++trial) {
    const int K = 1 + int(rng.next_u64() % 3);
    const int N = K + int(rng.next_u64() % 2);
    const Eigen::MatrixXcd eff = random_eff(K, N, rng);
    Beamformer init;
    init.W.resize(N, K);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < K; ++k) init.W(i, k) = cd(rng.normal(), rng.normal());
    init.W *= std::sqrt(p.power_budget / init.W.squaredNorm()) * 0.7;
    const Objective obj =
        trial % 2 == 0 ? Objective::sum_rate : Objective::energy_efficiency;
    const double before =
        obj == Objective::sum_rate
            ? sum_rate(eff, init, p)
            : sum_rate(eff, init, p) / (init.total_power() + p.circuit_power);
    const RefineResult r = refine_beams(eff, p, obj, init, 40);
    REQUIRE(r.objective >= before - 1e-9);
  }
}

TEST_CASE("refinement at an optimum is a fixed point") {
  SystemParams p = SystemParams::desk_defaults();
  Rng rng(17);
  const Eigen::MatrixXcd eff = random_eff(1, 2, rng);
  Beamformer opt;
  opt.W = std::sqrt(p.power_budget) * eff.row(0).adjoint().normalized();
  const double before = sum_rate(eff, opt, p);
  const RefineResult r = refine_beams(eff, p, Objective::sum_rate, opt, 200);
  CHECK(std::abs(r.objective - before) < 1e-6);
}

TEST_CASE("efficiency refinement improves the ratio") {
  SystemParams p = SystemParams::desk_defaults();
  Rng rng(19);
  const Eigen::MatrixXcd eff = random_eff(2, 3, rng);
  Beamformer init;
  init.W.resize(3, 2);
  for (Eigen::Index i = 0; i < init.W.size(); ++i)
    init.W.data()[i] = cd(rng.normal(), rng.normal());
  init.W *= std::sqrt(p.power_budget / init.W.squaredNorm());
  const double ee0 =
      sum_rate(eff, init, p) / (init.total_power() + p.circuit_power);
  const RefineResult r =
      refine_beams(eff, p, Objective::energy_efficiency, init, 400);
  CHECK(r.objective >= ee0);
  // with full power the efficiency objective should strictly drop power usage
  CHECK(r.beams.total_power() <= p.power_budget + 1e-9);
}

TEST_SUITE_END();
