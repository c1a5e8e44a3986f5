#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace paris::ad {

using cplx = std::complex<double>;

/// Dense row-major complex matrix. Row-major keeps per-sample row blocks
/// contiguous, which is what the batched graph kernels slice on.
struct CMat {
  int rows = 0;
  int cols = 0;
  std::vector<cplx> d;

  CMat() = default;
  CMat(int r, int c) : rows(r), cols(c), d(std::size_t(r) * std::size_t(c)) {}

  static CMat zeros(int r, int c) { return CMat(r, c); }
  static CMat full(int r, int c, cplx v) {
    CMat m(r, c);
    std::fill(m.d.begin(), m.d.end(), v);
    return m;
  }
  static CMat identity(int n) {
    CMat m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  cplx& at(int r, int c) { return d[std::size_t(r) * cols + c]; }
  const cplx& at(int r, int c) const { return d[std::size_t(r) * cols + c]; }
  std::size_t size() const { return d.size(); }
  bool same_shape(const CMat& o) const { return rows == o.rows && cols == o.cols; }
};

class Tape;

/// Handle to a node of a Tape. Cheap to copy; owns nothing.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
  int rows() const;
  int cols() const;
};

/// Define-by-run reverse-mode tape over complex matrices.
///
/// Gradient convention: for a real scalar loss L, the adjoint stored at a
/// node z packs the pair of real derivatives as a complex number,
///   grad(z) = dL/dRe(z) + j * dL/dIm(z),
/// i.e. twice the conjugate Wirtinger derivative. Real-valued leaves read
/// the real part of their adjoint.
///
/// Ops suffixed `_r` require real-valued inputs (imaginary part exactly 0)
/// and produce real-valued outputs. Block ops treat the row dimension as
/// `blocks` stacked sub-matrices; this is how a whole mini-batch lives in
/// one graph.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(CMat v, bool requires_grad = true);
  Var constant(CMat v) { return leaf(std::move(v), false); }
  Var constant_scalar(cplx v);

  const CMat& val(Var v) const;
  /// Adjoint of any node reached by the last backward(); zeros if untouched.
  CMat grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t num_nodes() const { return nodes_.size(); }

  /// Seeds dL/dL = 1 and sweeps the graph in reverse creation order.
  /// `loss` must be 1x1 with zero imaginary part.
  void backward(Var loss);
  /// Clears all adjoints so backward() can run again from scratch.
  void zero_grad();

  // -- elementwise --------------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var mul(Var a, Var b);
  Var scale(Var a, cplx s);
  Var add_scalar(Var a, cplx s);
  Var conj(Var a);
  Var real(Var a);
  Var imag(Var a);
  Var make_complex(Var re, Var im);
  Var abs2(Var a);
  Var exp_j(Var a);            // e^{j a}, a real
  Var sqrt_r(Var a);
  Var log_r(Var a);
  Var exp_r(Var a);
  Var recip_r(Var a);
  Var pow_r(Var a, double p);  // a > 0
  Var sigmoid_r(Var a);
  Var leaky_relu_r(Var a, double slope);
  Var relu_c(Var a);           // ReLU on Re and Im independently
  Var clamp_min_r(Var a, double lo);

  // -- linear algebra -----------------------------------------------------
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  /// Per-block product: a is (blocks*r)xm, b is (blocks*m)xc.
  Var bmm(Var a, Var b, int blocks);
  /// Per-block conjugate transpose: (blocks*r)xc -> (blocks*c)xr.
  Var block_hermitian(Var a, int blocks);
  /// Per-block inverse of square blocks: (blocks*k)xk, k = cols.
  Var block_inverse(Var a);

  // -- reductions ---------------------------------------------------------
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var sum_cols(Var a);   // over rows -> 1xC
  Var mean_cols(Var a);  // over rows -> 1xC
  Var sum_rows(Var a);   // over cols -> Rx1
  Var sum_group_rows(Var a, int groups);   // (groups*r)xC -> groupsxC
  Var mean_group_rows(Var a, int groups);

  // -- shaping ------------------------------------------------------------
  Var repeat_rows(Var a, int times);   // each row repeated `times` consecutively
  Var tile_group(Var a, int group_rows); // each block of group_rows rows tiled group_rows times
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, int c0, int len);
  Var reshape(Var a, int r, int c);
  Var softmax_rows(Var a);             // real, per row
  /// Rows with sum <= cap pass through; rows with sum > cap are scaled by
  /// cap/sum. Gradient follows the active branch. Inputs real, nonnegative.
  Var row_sum_clip_rescale(Var a, double cap);
  Var cumsum_rows(Var a);
  /// a is blocksx(N*M); output (blocks*M*N)xN, per block the column-wise
  /// block-diagonal with M-entry diagonal blocks.
  Var block_diag_cols(Var a, int m_per_block, int n_blocks);
  Var take_diag(Var a);                // (B*K)xK -> BxK

 private:
  struct Node {
    CMat val;
    CMat adj;     // sized lazily on first accumulation
    bool rg = false;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  Var push(CMat v, bool rg, std::function<void()> back = nullptr);
  CMat& adj(int id);
  friend struct Var;
};

} // namespace paris::ad
