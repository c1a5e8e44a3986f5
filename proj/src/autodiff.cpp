#include "paris/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "paris/parallel.hpp"

namespace paris::ad {

namespace {

constexpr std::int64_t kCutoff = 4096; // elements below this stay serial

[[noreturn]] void fail(const char* op, const std::string& msg) {
  throw std::invalid_argument(std::string("ad::") + op + ": " + msg);
}

void check_real(const char* op, const CMat& m) {
  for (const cplx& z : m.d)
    if (z.imag() != 0.0) fail(op, "input must be real-valued");
}

void add_into(CMat& dst, const CMat& src) {
  const std::int64_t n = std::int64_t(dst.size());
  cplx* d = dst.d.data();
  const cplx* s = src.d.data();
#pragma omp parallel for if (par::on() && n > kCutoff) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
}

} // namespace

int Var::rows() const { return tape->val(*this).rows; }
int Var::cols() const { return tape->val(*this).cols; }

Var Tape::push(CMat v, bool rg, std::function<void()> back) {
  nodes_.push_back(Node{std::move(v), CMat(), rg, std::move(back)});
  return Var{this, int(nodes_.size()) - 1};
}

Var Tape::leaf(CMat v, bool requires_grad) {
  return push(std::move(v), requires_grad);
}

Var Tape::constant_scalar(cplx v) {
  CMat m(1, 1);
  m.at(0, 0) = v;
  return constant(std::move(m));
}

const CMat& Tape::val(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= int(nodes_.size()))
    fail("val", "invalid handle");
  return nodes_[v.id].val;
}

bool Tape::requires_grad(Var v) const { return nodes_.at(v.id).rg; }

CMat& Tape::adj(int id) {
  Node& n = nodes_[id];
  if (n.adj.rows == 0) n.adj = CMat::zeros(n.val.rows, n.val.cols);
  return n.adj;
}

CMat Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.adj.rows == 0) return CMat::zeros(n.val.rows, n.val.cols);
  return n.adj;
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.adj = CMat();
}

void Tape::backward(Var loss) {
  if (loss.tape != this) fail("backward", "loss from another tape");
  const CMat& lv = val(loss);
  if (lv.rows != 1 || lv.cols != 1) fail("backward", "loss must be 1x1");
  if (lv.at(0, 0).imag() != 0.0) fail("backward", "loss must be real-valued");
  zero_grad();
  adj(loss.id).at(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.rg || !n.back) continue;
    if (n.adj.rows == 0) continue; // not reached by this loss
    n.back();
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  const CMat& A = val(a);
  const CMat& B = val(b);
  if (!A.same_shape(B)) fail("add", "shape mismatch");
  CMat out(A.rows, A.cols);
  const std::int64_t n = std::int64_t(out.size());
#pragma omp parallel for if (par::on() && n > kCutoff) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out.d[i] = A.d[i] + B.d[i];
  const bool rg = nodes_[a.id].rg || nodes_[b.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, ib = b.id, io] {
      const CMat& g = nodes_[io].adj;
      if (nodes_[ia].rg) add_into(adj(ia), g);
      if (nodes_[ib].rg) add_into(adj(ib), g);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::sub(Var a, Var b) {
  const CMat& A = val(a);
  const CMat& B = val(b);
  if (!A.same_shape(B)) fail("sub", "shape mismatch");
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.d[i] = A.d[i] - B.d[i];
  const bool rg = nodes_[a.id].rg || nodes_[b.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, ib = b.id, io] {
      const CMat& g = nodes_[io].adj;
      if (nodes_[ia].rg) add_into(adj(ia), g);
      if (nodes_[ib].rg) {
        CMat& gb = adj(ib);
        for (std::size_t i = 0; i < gb.size(); ++i) gb.d[i] -= g.d[i];
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::neg(Var a) { return scale(a, cplx(-1.0, 0.0)); }

Var Tape::mul(Var a, Var b) {
  const CMat& A = val(a);
  const CMat& B = val(b);
  if (!A.same_shape(B)) fail("mul", "shape mismatch");
  CMat out(A.rows, A.cols);
  const std::int64_t n = std::int64_t(out.size());
#pragma omp parallel for if (par::on() && n > kCutoff) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out.d[i] = A.d[i] * B.d[i];
  const bool rg = nodes_[a.id].rg || nodes_[b.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, ib = b.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& A2 = nodes_[ia].val;
      const CMat& B2 = nodes_[ib].val;
      if (nodes_[ia].rg) {
        CMat& ga = adj(ia);
        for (std::size_t i = 0; i < ga.size(); ++i)
          ga.d[i] += g.d[i] * std::conj(B2.d[i]);
      }
      if (nodes_[ib].rg) {
        CMat& gb = adj(ib);
        for (std::size_t i = 0; i < gb.size(); ++i)
          gb.d[i] += g.d[i] * std::conj(A2.d[i]);
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::scale(Var a, cplx s) {
  const CMat& A = val(a);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.d[i] = A.d[i] * s;
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, s] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      const cplx cs = std::conj(s);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.d[i] += g.d[i] * cs;
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::add_scalar(Var a, cplx s) {
  const CMat& A = val(a);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.d[i] = A.d[i] + s;
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] { add_into(adj(ia), nodes_[io].adj); };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::conj(Var a) {
  const CMat& A = val(a);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.d[i] = std::conj(A.d[i]);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.d[i] += std::conj(g.d[i]);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::real(Var a) {
  const CMat& A = val(a);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.d[i] = A.d[i].real();
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.d[i] += g.d[i].real();
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::imag(Var a) {
  const CMat& A = val(a);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.d[i] = A.d[i].imag();
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.d[i] += cplx(0.0, g.d[i].real());
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::make_complex(Var re, Var im) {
  const CMat& R = val(re);
  const CMat& I = val(im);
  if (!R.same_shape(I)) fail("make_complex", "shape mismatch");
  check_real("make_complex", R);
  check_real("make_complex", I);
  CMat out(R.rows, R.cols);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.d[i] = cplx(R.d[i].real(), I.d[i].real());
  const bool rg = nodes_[re.id].rg || nodes_[im.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ir = re.id, ii = im.id, io] {
      const CMat& g = nodes_[io].adj;
      if (nodes_[ir].rg) {
        CMat& gr = adj(ir);
        for (std::size_t i = 0; i < gr.size(); ++i) gr.d[i] += g.d[i].real();
      }
      if (nodes_[ii].rg) {
        CMat& gi = adj(ii);
        for (std::size_t i = 0; i < gi.size(); ++i) gi.d[i] += g.d[i].imag();
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::abs2(Var a) {
  const CMat& A = val(a);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.d[i] = std::norm(A.d[i]);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& A2 = nodes_[ia].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.d[i] += 2.0 * g.d[i].real() * A2.d[i];
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::exp_j(Var a) {
  const CMat& A = val(a);
  check_real("exp_j", A);
  CMat out(A.rows, A.cols);
  const std::int64_t n = std::int64_t(out.size());
#pragma omp parallel for if (par::on() && n > kCutoff) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = A.d[i].real();
    out.d[i] = cplx(std::cos(x), std::sin(x));
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& W = nodes_[io].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const cplx t = cplx(0.0, 1.0) * W.d[i]; // dW/dx
        ga.d[i] += g.d[i].real() * t.real() + g.d[i].imag() * t.imag();
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::sqrt_r(Var a) {
  const CMat& A = val(a);
  check_real("sqrt_r", A);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = A.d[i].real();
    if (!(x > 0.0)) fail("sqrt_r", "input must be positive");
    out.d[i] = std::sqrt(x);
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& W = nodes_[io].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.d[i] += g.d[i].real() / (2.0 * W.d[i].real());
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::log_r(Var a) {
  const CMat& A = val(a);
  check_real("log_r", A);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = A.d[i].real();
    if (!(x > 0.0)) fail("log_r", "input must be positive");
    out.d[i] = std::log(x);
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& A2 = nodes_[ia].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.d[i] += g.d[i].real() / A2.d[i].real();
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::exp_r(Var a) {
  const CMat& A = val(a);
  check_real("exp_r", A);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.d[i] = std::exp(A.d[i].real());
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& W = nodes_[io].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.d[i] += g.d[i].real() * W.d[i].real();
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::recip_r(Var a) {
  const CMat& A = val(a);
  check_real("recip_r", A);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = A.d[i].real();
    if (x == 0.0) fail("recip_r", "reciprocal of zero");
    out.d[i] = 1.0 / x;
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& W = nodes_[io].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const double y = W.d[i].real();
        ga.d[i] += -g.d[i].real() * y * y;
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::pow_r(Var a, double p) {
  const CMat& A = val(a);
  check_real("pow_r", A);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = A.d[i].real();
    if (!(x > 0.0)) fail("pow_r", "input must be positive");
    out.d[i] = std::pow(x, p);
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, p] {
      const CMat& g = nodes_[io].adj;
      const CMat& A2 = nodes_[ia].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const double x = A2.d[i].real();
        ga.d[i] += g.d[i].real() * p * std::pow(x, p - 1.0);
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
} // namespace

Var Tape::sigmoid_r(Var a) {
  const CMat& A = val(a);
  check_real("sigmoid_r", A);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.d[i] = stable_sigmoid(A.d[i].real());
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& W = nodes_[io].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const double s = W.d[i].real();
        ga.d[i] += g.d[i].real() * s * (1.0 - s);
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::leaky_relu_r(Var a, double slope) {
  const CMat& A = val(a);
  check_real("leaky_relu_r", A);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = A.d[i].real();
    out.d[i] = x > 0.0 ? x : slope * x;
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, slope] {
      const CMat& g = nodes_[io].adj;
      const CMat& A2 = nodes_[ia].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.d[i] += g.d[i].real() * (A2.d[i].real() > 0.0 ? 1.0 : slope);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::relu_c(Var a) {
  const CMat& A = val(a);
  CMat out(A.rows, A.cols);
  const std::int64_t n = std::int64_t(out.size());
#pragma omp parallel for if (par::on() && n > kCutoff) schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    out.d[i] = cplx(std::max(A.d[i].real(), 0.0), std::max(A.d[i].imag(), 0.0));
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& A2 = nodes_[ia].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.d[i] += cplx(A2.d[i].real() > 0.0 ? g.d[i].real() : 0.0,
                        A2.d[i].imag() > 0.0 ? g.d[i].imag() : 0.0);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::clamp_min_r(Var a, double lo) {
  const CMat& A = val(a);
  check_real("clamp_min_r", A);
  CMat out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.d[i] = std::max(A.d[i].real(), lo);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, lo] {
      const CMat& g = nodes_[io].adj;
      const CMat& A2 = nodes_[ia].val;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (A2.d[i].real() >= lo) ga.d[i] += g.d[i].real();
    };
  return push(std::move(out), rg, std::move(bk));
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

namespace {

// C += or = A(b) * B(b) over blocks: rows of A/C partitioned into `blocks`
// groups of r rows; B has blocks of m rows. blocks==1 gives a plain matmul.
void bmm_vals(const CMat& A, const CMat& B, CMat& C, int blocks) {
  const int r = A.rows / blocks;
  const int m = A.cols;
  const int c = B.cols;
  const std::int64_t nrows = A.rows;
#pragma omp parallel for if (par::on() && nrows * m * c > 16384) schedule(static)
  for (std::int64_t row = 0; row < nrows; ++row) {
    const int b = int(row) / r;
    cplx* crow = &C.d[std::size_t(row) * c];
    const cplx* arow = &A.d[std::size_t(row) * m];
    for (int kk = 0; kk < m; ++kk) {
      const cplx av = arow[kk];
      const cplx* brow = &B.d[(std::size_t(b) * m + kk) * c];
      for (int j = 0; j < c; ++j) crow[j] += av * brow[j];
    }
  }
}

// gA(b) += g(b) * B(b)^H
void bmm_back_a(const CMat& g, const CMat& B, CMat& gA, int blocks) {
  const int r = gA.rows / blocks;
  const int m = gA.cols;
  const int c = B.cols;
  const std::int64_t nrows = gA.rows;
#pragma omp parallel for if (par::on() && nrows * m * c > 16384) schedule(static)
  for (std::int64_t row = 0; row < nrows; ++row) {
    const int b = int(row) / r;
    cplx* garow = &gA.d[std::size_t(row) * m];
    const cplx* grow = &g.d[std::size_t(row) * c];
    for (int kk = 0; kk < m; ++kk) {
      const cplx* brow = &B.d[(std::size_t(b) * m + kk) * c];
      cplx acc = 0.0;
      for (int j = 0; j < c; ++j) acc += grow[j] * std::conj(brow[j]);
      garow[kk] += acc;
    }
  }
}

// gB(b) += A(b)^H * g(b)
void bmm_back_b(const CMat& A, const CMat& g, CMat& gB, int blocks) {
  const int r = A.rows / blocks;
  const int m = A.cols;
  const int c = gB.cols;
  const std::int64_t nbrows = gB.rows; // blocks * m
#pragma omp parallel for if (par::on() && nbrows * r * c > 16384) schedule(static)
  for (std::int64_t brow = 0; brow < nbrows; ++brow) {
    const int b = int(brow) / m;
    const int kk = int(brow) % m;
    cplx* gbrow = &gB.d[std::size_t(brow) * c];
    for (int i = 0; i < r; ++i) {
      const cplx ac = std::conj(A.d[(std::size_t(b) * r + i) * A.cols + kk]);
      const cplx* grow = &g.d[(std::size_t(b) * r + i) * c];
      for (int j = 0; j < c; ++j) gbrow[j] += ac * grow[j];
    }
  }
}

} // namespace

Var Tape::matmul(Var a, Var b) {
  const CMat& A = val(a);
  const CMat& B = val(b);
  if (A.cols != B.rows) fail("matmul", "inner dimension mismatch");
  CMat out = CMat::zeros(A.rows, B.cols);
  bmm_vals(A, B, out, 1);
  const bool rg = nodes_[a.id].rg || nodes_[b.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, ib = b.id, io] {
      const CMat& g = nodes_[io].adj;
      if (nodes_[ia].rg) bmm_back_a(g, nodes_[ib].val, adj(ia), 1);
      if (nodes_[ib].rg) bmm_back_b(nodes_[ia].val, g, adj(ib), 1);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::bmm(Var a, Var b, int blocks) {
  const CMat& A = val(a);
  const CMat& B = val(b);
  if (blocks <= 0 || A.rows % blocks != 0) fail("bmm", "bad block count");
  if (B.rows != blocks * A.cols) fail("bmm", "inner dimension mismatch");
  CMat out = CMat::zeros(A.rows, B.cols);
  bmm_vals(A, B, out, blocks);
  const bool rg = nodes_[a.id].rg || nodes_[b.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, ib = b.id, io, blocks] {
      const CMat& g = nodes_[io].adj;
      if (nodes_[ia].rg) bmm_back_a(g, nodes_[ib].val, adj(ia), blocks);
      if (nodes_[ib].rg) bmm_back_b(nodes_[ia].val, g, adj(ib), blocks);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::transpose(Var a) {
  const CMat& A = val(a);
  CMat out(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) out.at(j, i) = A.at(i, j);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (int i = 0; i < ga.rows; ++i)
        for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(j, i);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::block_hermitian(Var a, int blocks) {
  const CMat& A = val(a);
  if (blocks <= 0 || A.rows % blocks != 0) fail("block_hermitian", "bad block count");
  const int r = A.rows / blocks;
  const int c = A.cols;
  CMat out(blocks * c, r);
  for (int b = 0; b < blocks; ++b)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        out.at(b * c + j, i) = std::conj(A.at(b * r + i, j));
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, blocks, r, c] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (int b = 0; b < blocks; ++b)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            ga.at(b * r + i, j) += std::conj(g.at(b * c + j, i));
    };
  return push(std::move(out), rg, std::move(bk));
}

namespace {

// Gauss-Jordan inverse with partial pivoting; k is small (<= users count).
void invert_block(const cplx* src, cplx* dst, int k) {
  std::vector<cplx> a(src, src + std::size_t(k) * k);
  std::vector<cplx> inv(std::size_t(k) * k, 0.0);
  for (int i = 0; i < k; ++i) inv[std::size_t(i) * k + i] = 1.0;
  for (int col = 0; col < k; ++col) {
    int piv = col;
    double best = std::abs(a[std::size_t(col) * k + col]);
    for (int r = col + 1; r < k; ++r) {
      const double m = std::abs(a[std::size_t(r) * k + col]);
      if (m > best) {
        best = m;
        piv = r;
      }
    }
    if (!(best > 0.0)) fail("block_inverse", "singular block");
    if (piv != col) {
      for (int j = 0; j < k; ++j) {
        std::swap(a[std::size_t(piv) * k + j], a[std::size_t(col) * k + j]);
        std::swap(inv[std::size_t(piv) * k + j], inv[std::size_t(col) * k + j]);
      }
    }
    const cplx d = a[std::size_t(col) * k + col];
    for (int j = 0; j < k; ++j) {
      a[std::size_t(col) * k + j] /= d;
      inv[std::size_t(col) * k + j] /= d;
    }
    for (int r = 0; r < k; ++r) {
      if (r == col) continue;
      const cplx f = a[std::size_t(r) * k + col];
      if (f == cplx(0.0, 0.0)) continue;
      for (int j = 0; j < k; ++j) {
        a[std::size_t(r) * k + j] -= f * a[std::size_t(col) * k + j];
        inv[std::size_t(r) * k + j] -= f * inv[std::size_t(col) * k + j];
      }
    }
  }
  std::copy(inv.begin(), inv.end(), dst);
}

} // namespace

Var Tape::block_inverse(Var a) {
  const CMat& A = val(a);
  const int k = A.cols;
  if (k <= 0 || A.rows % k != 0) fail("block_inverse", "blocks must be square");
  const int blocks = A.rows / k;
  CMat out(A.rows, k);
#pragma omp parallel for if (par::on() && blocks > 8) schedule(static)
  for (int b = 0; b < blocks; ++b)
    invert_block(&A.d[std::size_t(b) * k * k], &out.d[std::size_t(b) * k * k], k);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, blocks, k] {
      // dX = -Y^H dY Y^H per block
      const CMat& g = nodes_[io].adj;
      const CMat& Y = nodes_[io].val;
      CMat& ga = adj(ia);
      for (int b = 0; b < blocks; ++b) {
        const cplx* y = &Y.d[std::size_t(b) * k * k];
        const cplx* gb = &g.d[std::size_t(b) * k * k];
        cplx* out = &ga.d[std::size_t(b) * k * k];
        std::vector<cplx> t(std::size_t(k) * k, 0.0); // g * Y^H
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            cplx acc = 0.0;
            for (int l = 0; l < k; ++l)
              acc += gb[std::size_t(i) * k + l] * std::conj(y[std::size_t(j) * k + l]);
            t[std::size_t(i) * k + j] = acc;
          }
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            cplx acc = 0.0;
            for (int l = 0; l < k; ++l)
              acc += std::conj(y[std::size_t(l) * k + i]) * t[std::size_t(l) * k + j];
            out[std::size_t(i) * k + j] -= acc;
          }
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var Tape::sum_all(Var a) {
  const CMat& A = val(a);
  cplx acc = 0.0;
  for (const cplx& z : A.d) acc += z;
  CMat out(1, 1);
  out.at(0, 0) = acc;
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const cplx g = nodes_[io].adj.at(0, 0);
      CMat& ga = adj(ia);
      for (cplx& z : ga.d) z += g;
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::mean_all(Var a) {
  const CMat& A = val(a);
  return scale(sum_all(a), cplx(1.0 / double(A.size()), 0.0));
}

Var Tape::sum_cols(Var a) {
  const CMat& A = val(a);
  CMat out = CMat::zeros(1, A.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) out.at(0, j) += A.at(i, j);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (int i = 0; i < ga.rows; ++i)
        for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(0, j);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::mean_cols(Var a) {
  const CMat& A = val(a);
  return scale(sum_cols(a), cplx(1.0 / double(A.rows), 0.0));
}

Var Tape::sum_rows(Var a) {
  const CMat& A = val(a);
  CMat out = CMat::zeros(A.rows, 1);
  for (int i = 0; i < A.rows; ++i) {
    cplx acc = 0.0;
    for (int j = 0; j < A.cols; ++j) acc += A.at(i, j);
    out.at(i, 0) = acc;
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (int i = 0; i < ga.rows; ++i)
        for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(i, 0);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::sum_group_rows(Var a, int groups) {
  const CMat& A = val(a);
  if (groups <= 0 || A.rows % groups != 0) fail("sum_group_rows", "bad group count");
  const int r = A.rows / groups;
  CMat out = CMat::zeros(groups, A.cols);
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < A.cols; ++j) out.at(g, j) += A.at(g * r + i, j);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, groups, r] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (int b = 0; b < groups; ++b)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < ga.cols; ++j) ga.at(b * r + i, j) += g.at(b, j);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::mean_group_rows(Var a, int groups) {
  const CMat& A = val(a);
  const int r = A.rows / groups;
  return scale(sum_group_rows(a, groups), cplx(1.0 / double(r), 0.0));
}

// ---------------------------------------------------------------------------
// shaping
// ---------------------------------------------------------------------------

Var Tape::repeat_rows(Var a, int times) {
  const CMat& A = val(a);
  if (times <= 0) fail("repeat_rows", "times must be positive");
  CMat out(A.rows * times, A.cols);
  const std::int64_t orows = out.rows;
#pragma omp parallel for if (par::on() && orows * A.cols > kCutoff) schedule(static)
  for (std::int64_t i = 0; i < orows; ++i) {
    const int src = int(i) / times;
    std::copy(&A.d[std::size_t(src) * A.cols], &A.d[std::size_t(src) * A.cols] + A.cols,
              &out.d[std::size_t(i) * A.cols]);
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, times] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      const std::int64_t arows = ga.rows;
#pragma omp parallel for if (par::on() && arows * ga.cols > kCutoff) schedule(static)
      for (std::int64_t r = 0; r < arows; ++r)
        for (int t = 0; t < times; ++t)
          for (int j = 0; j < ga.cols; ++j)
            ga.at(int(r), j) += g.at(int(r) * times + t, j);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::tile_group(Var a, int group_rows) {
  const CMat& A = val(a);
  if (group_rows <= 0 || A.rows % group_rows != 0) fail("tile_group", "bad group size");
  const int blocks = A.rows / group_rows;
  const int K = group_rows;
  CMat out(A.rows * K, A.cols);
  for (int b = 0; b < blocks; ++b)
    for (int k = 0; k < K; ++k)
      for (int kp = 0; kp < K; ++kp)
        std::copy(&A.d[(std::size_t(b) * K + kp) * A.cols],
                  &A.d[(std::size_t(b) * K + kp) * A.cols] + A.cols,
                  &out.d[((std::size_t(b) * K + k) * K + kp) * A.cols]);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, blocks, K] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (int b = 0; b < blocks; ++b)
        for (int k = 0; k < K; ++k)
          for (int kp = 0; kp < K; ++kp)
            for (int j = 0; j < ga.cols; ++j)
              ga.at(b * K + kp, j) += g.at((b * K + k) * K + kp, j);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::concat_cols(Var a, Var b) {
  const CMat& A = val(a);
  const CMat& B = val(b);
  if (A.rows != B.rows) fail("concat_cols", "row mismatch");
  CMat out(A.rows, A.cols + B.cols);
  for (int i = 0; i < A.rows; ++i) {
    std::copy(&A.d[std::size_t(i) * A.cols], &A.d[std::size_t(i) * A.cols] + A.cols,
              &out.d[std::size_t(i) * out.cols]);
    std::copy(&B.d[std::size_t(i) * B.cols], &B.d[std::size_t(i) * B.cols] + B.cols,
              &out.d[std::size_t(i) * out.cols + A.cols]);
  }
  const bool rg = nodes_[a.id].rg || nodes_[b.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, ib = b.id, io] {
      const CMat& g = nodes_[io].adj;
      const int ca = nodes_[ia].val.cols;
      if (nodes_[ia].rg) {
        CMat& ga = adj(ia);
        for (int i = 0; i < ga.rows; ++i)
          for (int j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
      }
      if (nodes_[ib].rg) {
        CMat& gb = adj(ib);
        for (int i = 0; i < gb.rows; ++i)
          for (int j = 0; j < gb.cols; ++j) gb.at(i, j) += g.at(i, ca + j);
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::slice_cols(Var a, int c0, int len) {
  const CMat& A = val(a);
  if (c0 < 0 || len <= 0 || c0 + len > A.cols) fail("slice_cols", "bad range");
  CMat out(A.rows, len);
  for (int i = 0; i < A.rows; ++i)
    std::copy(&A.d[std::size_t(i) * A.cols + c0],
              &A.d[std::size_t(i) * A.cols + c0] + len,
              &out.d[std::size_t(i) * len]);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, c0, len] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (int i = 0; i < ga.rows; ++i)
        for (int j = 0; j < len; ++j) ga.at(i, c0 + j) += g.at(i, j);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::reshape(Var a, int r, int c) {
  const CMat& A = val(a);
  if (std::size_t(r) * std::size_t(c) != A.size()) fail("reshape", "size mismatch");
  CMat out(r, c);
  out.d = A.d;
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.d[i] += g.d[i];
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::softmax_rows(Var a) {
  const CMat& A = val(a);
  check_real("softmax_rows", A);
  CMat out(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    double mx = A.at(i, 0).real();
    for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j).real());
    double s = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      const double e = std::exp(A.at(i, j).real() - mx);
      out.at(i, j) = e;
      s += e;
    }
    for (int j = 0; j < A.cols; ++j) out.at(i, j) /= s;
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      const CMat& S = nodes_[io].val;
      CMat& ga = adj(ia);
      for (int i = 0; i < ga.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < ga.cols; ++j)
          dot += g.at(i, j).real() * S.at(i, j).real();
        for (int j = 0; j < ga.cols; ++j)
          ga.at(i, j) += S.at(i, j).real() * (g.at(i, j).real() - dot);
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::row_sum_clip_rescale(Var a, double cap) {
  const CMat& A = val(a);
  check_real("row_sum_clip_rescale", A);
  if (!(cap > 0.0)) fail("row_sum_clip_rescale", "cap must be positive");
  CMat out(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < A.cols; ++j) s += A.at(i, j).real();
    const double f = s > cap ? cap / s : 1.0;
    for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j).real() * f;
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, cap] {
      const CMat& g = nodes_[io].adj;
      const CMat& A2 = nodes_[ia].val;
      CMat& ga = adj(ia);
      for (int i = 0; i < ga.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < ga.cols; ++j) s += A2.at(i, j).real();
        if (s <= cap) {
          for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(i, j).real();
        } else {
          // out_j = cap*x_j/s; dout_i/dx_j = (cap/s)(delta_ij - x_i/s)
          double gx = 0.0;
          for (int j = 0; j < ga.cols; ++j)
            gx += g.at(i, j).real() * A2.at(i, j).real();
          const double f = cap / s;
          for (int j = 0; j < ga.cols; ++j)
            ga.at(i, j) += f * (g.at(i, j).real() - gx / s);
        }
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::cumsum_rows(Var a) {
  const CMat& A = val(a);
  CMat out(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    cplx acc = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      acc += A.at(i, j);
      out.at(i, j) = acc;
    }
  }
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (int i = 0; i < ga.rows; ++i) {
        cplx acc = 0.0;
        for (int j = ga.cols - 1; j >= 0; --j) {
          acc += g.at(i, j);
          ga.at(i, j) += acc;
        }
      }
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::block_diag_cols(Var a, int m_per_block, int n_blocks) {
  const CMat& A = val(a);
  if (A.cols != m_per_block * n_blocks) fail("block_diag_cols", "column count mismatch");
  const int B = A.rows;
  const int mn = m_per_block * n_blocks;
  CMat out = CMat::zeros(B * mn, n_blocks);
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < n_blocks; ++n)
      for (int m = 0; m < m_per_block; ++m)
        out.at(b * mn + n * m_per_block + m, n) = A.at(b, n * m_per_block + m);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, m_per_block, n_blocks] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      const int mn = m_per_block * n_blocks;
      for (int b = 0; b < ga.rows; ++b)
        for (int n = 0; n < n_blocks; ++n)
          for (int m = 0; m < m_per_block; ++m)
            ga.at(b, n * m_per_block + m) += g.at(b * mn + n * m_per_block + m, n);
    };
  return push(std::move(out), rg, std::move(bk));
}

Var Tape::take_diag(Var a) {
  const CMat& A = val(a);
  const int K = A.cols;
  if (K <= 0 || A.rows % K != 0) fail("take_diag", "rows must be a multiple of cols");
  const int B = A.rows / K;
  CMat out(B, K);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) out.at(b, k) = A.at(b * K + k, k);
  const bool rg = nodes_[a.id].rg;
  const int io = int(nodes_.size());
  std::function<void()> bk;
  if (rg)
    bk = [this, ia = a.id, io, B, K] {
      const CMat& g = nodes_[io].adj;
      CMat& ga = adj(ia);
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) ga.at(b * K + k, k) += g.at(b, k);
    };
  return push(std::move(out), rg, std::move(bk));
}

} // namespace paris::ad
