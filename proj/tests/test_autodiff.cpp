#include <doctest.h>

#include "gradcheck.hpp"
#include "paris/autodiff.hpp"
#include "paris/rng.hpp"

using namespace paris;
using ad::CMat;
using ad::cplx;
using ad::Tape;
using ad::Var;

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("abs2 value and gradient at 3+4j") {
  Tape t;
  CMat z(1, 1);
  z.at(0, 0) = cplx(3.0, 4.0);
  Var v = t.leaf(z, true);
  Var loss = t.sum_all(t.abs2(v));
  CHECK(t.val(loss).at(0, 0).real() == doctest::Approx(25.0));
  t.backward(loss);
  const CMat g = t.grad(v);
  CHECK(g.at(0, 0).real() == doctest::Approx(6.0));
  CHECK(g.at(0, 0).imag() == doctest::Approx(8.0));
}

TEST_CASE("exp_j at zero is one") {
  Tape t;
  Var v = t.constant(CMat::zeros(2, 2));
  const CMat& out = t.val(t.exp_j(v));
  for (const cplx& z : out.d) {
    CHECK(z.real() == doctest::Approx(1.0));
    CHECK(z.imag() == doctest::Approx(0.0));
  }
}

TEST_CASE("matmul by identity is a passthrough") {
  Rng rng(7);
  Tape t;
  Var A = t.leaf(gc::random_cmat(3, 3, rng), true);
  Var I = t.constant(CMat::identity(3));
  Var P = t.matmul(I, A);
  for (std::size_t i = 0; i < t.val(A).size(); ++i)
    CHECK(t.val(P).d[i] == t.val(A).d[i]);
  Var loss = t.sum_all(t.abs2(P));
  t.backward(loss);
  const CMat g = t.grad(A);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(g.d[i] == 2.0 * t.val(A).d[i]);
}

TEST_CASE("quadratic loss has exact gradient 2z") {
  Rng rng(9);
  Tape t;
  CMat z = gc::random_cmat(4, 3, rng);
  Var v = t.leaf(z, true);
  Var loss = t.sum_all(t.abs2(v));
  t.backward(loss);
  const CMat g = t.grad(v);
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK(g.d[i].real() == doctest::Approx(2.0 * z.d[i].real()));
    CHECK(g.d[i].imag() == doctest::Approx(2.0 * z.d[i].imag()));
  }
}

TEST_CASE("constant leaves receive zero gradient") {
  Rng rng(11);
  Tape t;
  Var a = t.leaf(gc::random_cmat(2, 2, rng), true);
  Var c = t.constant(gc::random_cmat(2, 2, rng));
  Var loss = t.sum_all(t.abs2(t.mul(a, c)));
  t.backward(loss);
  CHECK(t.grad(c).size() == 4);
  for (const cplx& z : t.grad(c).d) CHECK(z == cplx(0.0, 0.0));
  // and a leaf the loss never touches stays zero
  Var untouched = t.leaf(gc::random_cmat(2, 2, rng), true);
  (void)untouched;
  t.backward(loss);
  for (const cplx& z : t.grad(untouched).d) CHECK(z == cplx(0.0, 0.0));
}

TEST_CASE("repeated backward passes are bit-identical") {
  Rng rng(13);
  Tape t;
  Var a = t.leaf(gc::random_cmat(3, 2, rng), true);
  Var b = t.leaf(gc::random_cmat(2, 4, rng), true);
  Var loss = t.mean_all(t.abs2(t.matmul(a, b)));
  t.backward(loss);
  const CMat g1 = t.grad(a);
  t.backward(loss);
  const CMat g2 = t.grad(a);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1.d[i] == g2.d[i]);
}

TEST_CASE("backward rejects non-scalar and non-real losses") {
  Rng rng(15);
  Tape t;
  Var a = t.leaf(gc::random_cmat(2, 2, rng), true);
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);
  Var s = t.sum_all(a);  // complex scalar
  CHECK_THROWS_AS(t.backward(s), std::invalid_argument);
}

TEST_CASE("shape mismatches are rejected") {
  Rng rng(17);
  Tape t;
  Var a = t.leaf(gc::random_cmat(2, 3, rng), true);
  Var b = t.leaf(gc::random_cmat(3, 2, rng), true);
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.mul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(t.recip_r(a), std::invalid_argument);  // complex input
}

TEST_CASE("gradcheck: elementwise complex ops") {
  Rng rng(21);
  auto A = gc::random_cmat(2, 3, rng);
  auto B = gc::random_cmat(2, 3, rng);
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.add(v[0], v[1])));
  }, {A, B});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.sub(v[0], v[1])));
  }, {A, B});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.mul(v[0], v[1])));
  }, {A, B});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.scale(v[0], cplx(0.7, -1.3))));
  }, {A});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.conj(v[0])));
  }, {A});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.add_scalar(v[0], cplx(0.3, 0.4))));
  }, {A});
}

TEST_CASE("gradcheck: real/imag split and recombination") {
  Rng rng(23);
  auto A = gc::random_cmat(3, 2, rng);
  auto R = gc::random_rmat(3, 2, rng, -2.0, 2.0);
  auto I = gc::random_rmat(3, 2, rng, -2.0, 2.0);
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.mul(t.real(v[0]), t.real(v[0])));
  }, {A});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.mul(t.imag(v[0]), t.imag(v[0])));
  }, {A});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.make_complex(v[0], v[1])));
  }, {R, I}, {true, true});
}

TEST_CASE("gradcheck: exp_j chained into a complex product") {
  Rng rng(25);
  auto TH = gc::random_rmat(2, 4, rng, -2.5, 2.5);
  auto W = gc::random_cmat(2, 4, rng);
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.mul(t.exp_j(v[0]), v[1])));
  }, {TH, W}, {true, false});
}

TEST_CASE("gradcheck: scalar real functions") {
  Rng rng(27);
  auto P = gc::random_rmat(2, 3, rng, 0.5, 3.0);   // positive domain
  auto X = gc::random_rmat(2, 3, rng, -3.0, 3.0);  // free domain
  auto pos_build = [](auto op) {
    return [op](Tape& t, const std::vector<Var>& v) {
      return t.sum_all(t.mul(op(t, v[0]), op(t, v[0])));
    };
  };
  gc::check(pos_build([](Tape& t, Var a) { return t.sqrt_r(a); }), {P}, {true});
  gc::check(pos_build([](Tape& t, Var a) { return t.log_r(a); }), {P}, {true});
  gc::check(pos_build([](Tape& t, Var a) { return t.recip_r(a); }), {P}, {true});
  gc::check(pos_build([](Tape& t, Var a) { return t.pow_r(a, -1.4); }), {P}, {true});
  gc::check(pos_build([](Tape& t, Var a) { return t.exp_r(a); }), {X}, {true});
  gc::check(pos_build([](Tape& t, Var a) { return t.sigmoid_r(a); }), {X}, {true});
  gc::check(pos_build([](Tape& t, Var a) { return t.leaky_relu_r(a, 0.2); }), {X}, {true});
  gc::check(pos_build([](Tape& t, Var a) { return t.clamp_min_r(a, 0.25); }), {X}, {true});
}

TEST_CASE("gradcheck: complex relu") {
  Rng rng(29);
  auto A = gc::random_cmat(3, 3, rng);
  // keep entries away from the activation kink
  for (auto& z : A.d) {
    double re = z.real(), im = z.imag();
    if (std::abs(re) < 0.1) re += 0.3;
    if (std::abs(im) < 0.1) im += 0.3;
    z = cplx(re, im);
  }
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.relu_c(v[0])));
  }, {A});
}

TEST_CASE("gradcheck: matmul, transpose, and block ops") {
  Rng rng(31);
  auto A = gc::random_cmat(4, 3, rng);
  auto B = gc::random_cmat(3, 2, rng);
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.matmul(v[0], v[1])));
  }, {A, B});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.transpose(v[0])));
  }, {A});

  auto BA = gc::random_cmat(6, 3, rng);  // two blocks of 3x3
  auto BB = gc::random_cmat(6, 2, rng);  // two blocks of 3x2
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.bmm(v[0], v[1], 2)));
  }, {BA, BB});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.block_hermitian(v[0], 2)));
  }, {BA});
}

TEST_CASE("gradcheck: block inverse") {
  Rng rng(33);
  // well-conditioned blocks: dominant diagonal
  auto A = gc::random_cmat(4, 2, rng, 0.3);
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 2; ++i) A.at(b * 2 + i, i) += 3.0;
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.block_inverse(v[0])));
  }, {A}, {}, 1e-6, 5e-5);

  Tape t;
  Var inv = t.block_inverse(t.constant(A));
  Var gram = t.bmm(t.constant(A), inv, 2);
  const CMat& g = t.val(gram);
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(std::abs(g.at(b * 2 + i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
}

TEST_CASE("gradcheck: reductions") {
  Rng rng(35);
  auto A = gc::random_cmat(6, 3, rng);
  auto run = [&](auto op) {
    gc::check([op](Tape& t, const std::vector<Var>& v) {
      return t.sum_all(t.abs2(op(t, v[0])));
    }, {A});
  };
  run([](Tape& t, Var a) { return t.sum_cols(a); });
  run([](Tape& t, Var a) { return t.mean_cols(a); });
  run([](Tape& t, Var a) { return t.sum_rows(a); });
  run([](Tape& t, Var a) { return t.sum_group_rows(a, 2); });
  run([](Tape& t, Var a) { return t.mean_group_rows(a, 3); });
  run([](Tape& t, Var a) { return t.sum_all(a); });
  run([](Tape& t, Var a) { return t.mean_all(a); });
}

TEST_CASE("gradcheck: shaping ops") {
  Rng rng(37);
  auto A = gc::random_cmat(4, 3, rng);
  auto B = gc::random_cmat(4, 2, rng);
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.repeat_rows(v[0], 3)));
  }, {A});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.tile_group(v[0], 2)));
  }, {A});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.concat_cols(v[0], v[1])));
  }, {A, B});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.slice_cols(v[0], 1, 2)));
  }, {A});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.reshape(v[0], 2, 6)));
  }, {A});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.cumsum_rows(v[0])));
  }, {A});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.block_diag_cols(v[0], 2, 2)));
  }, {gc::random_cmat(3, 4, rng)});
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.abs2(t.take_diag(v[0])));
  }, {gc::random_cmat(6, 3, rng)});
}

TEST_CASE("gradcheck: softmax rows") {
  Rng rng(39);
  auto A = gc::random_rmat(3, 4, rng, -2.0, 2.0);
  auto W = gc::random_rmat(3, 4, rng, 0.2, 2.0);
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.mul(t.softmax_rows(v[0]), v[1]));
  }, {A, W}, {true, true});
  // rows sum to one
  Tape t;
  Var s = t.softmax_rows(t.constant(A));
  for (int i = 0; i < 3; ++i) {
    double acc = 0.0;
    for (int j = 0; j < 4; ++j) acc += t.val(s).at(i, j).real();
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gradcheck: row clip-rescale on both branches") {
  Rng rng(41);
  CMat A(2, 3);
  // first row passes through, second row triggers the rescale
  A.at(0, 0) = 0.2; A.at(0, 1) = 0.3; A.at(0, 2) = 0.1;
  A.at(1, 0) = 1.4; A.at(1, 1) = 2.0; A.at(1, 2) = 0.8;
  auto W = gc::random_rmat(2, 3, rng, 0.2, 1.5);
  gc::check([](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.mul(t.row_sum_clip_rescale(v[0], 1.0), v[1]));
  }, {A, W}, {true, true});

  Tape t;
  const CMat& out = t.val(t.row_sum_clip_rescale(t.constant(A), 1.0));
  CHECK(out.at(0, 1).real() == doctest::Approx(0.3));
  double s = 0.0;
  for (int j = 0; j < 3; ++j) s += out.at(1, j).real();
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("composite: normalization keeps unit modulus and correct gradient") {
  Rng rng(43);
  auto A = gc::random_cmat(2, 5, rng);
  gc::check([](Tape& t, const std::vector<Var>& v) {
    Var mod2 = t.clamp_min_r(t.abs2(v[0]), 1e-60);
    Var unit = t.mul(v[0], t.recip_r(t.sqrt_r(mod2)));
    Var w = t.constant(CMat::full(2, 5, cplx(0.4, -0.2)));
    return t.sum_all(t.abs2(t.add(unit, w)));
  }, {A});
}

TEST_SUITE_END();
