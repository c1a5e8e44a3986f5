#pragma once

#include <doctest.h>
#include <functional>
#include <vector>

#include "paris/autodiff.hpp"
#include "paris/rng.hpp"

namespace gc {

using paris::ad::CMat;
using paris::ad::cplx;
using paris::ad::Tape;
using paris::ad::Var;

using BuildFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_loss(const BuildFn& build, const std::vector<CMat>& vals) {
  Tape t;
  std::vector<Var> leaves;
  for (const CMat& v : vals) leaves.push_back(t.leaf(v, true));
  return t.val(build(t, leaves)).at(0, 0).real();
}

/// Central finite differences on every real component of every leaf against
/// the reverse-mode adjoints. `real_leaf[i]` skips the imaginary component.
inline void check(const BuildFn& build, std::vector<CMat> vals,
                  std::vector<bool> real_leaf = {}, double step = 1e-6,
                  double tol = 2e-5) {
  if (real_leaf.empty()) real_leaf.assign(vals.size(), false);
  Tape t;
  std::vector<Var> leaves;
  for (const CMat& v : vals) leaves.push_back(t.leaf(v, true));
  Var loss = build(t, leaves);
  t.backward(loss);
  std::vector<CMat> grads;
  for (Var l : leaves) grads.push_back(t.grad(l));

  for (std::size_t li = 0; li < vals.size(); ++li) {
    for (std::size_t e = 0; e < vals[li].size(); ++e) {
      for (int comp = 0; comp < (real_leaf[li] ? 1 : 2); ++comp) {
        std::vector<CMat> vp = vals, vm = vals;
        if (comp == 0) {
          vp[li].d[e] += step;
          vm[li].d[e] -= step;
        } else {
          vp[li].d[e] += cplx(0.0, step);
          vm[li].d[e] -= cplx(0.0, step);
        }
        const double fd = (eval_loss(build, vp) - eval_loss(build, vm)) / (2.0 * step);
        const double an = comp == 0 ? grads[li].d[e].real() : grads[li].d[e].imag();
        INFO("leaf ", li, " entry ", e, " comp ", comp, " fd=", fd, " ad=", an);
        CHECK(std::abs(an - fd) <= tol * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

inline CMat random_cmat(int r, int c, paris::Rng& rng, double scale = 1.0) {
  CMat m(r, c);
  for (auto& z : m.d) z = cplx(scale * rng.normal(), scale * rng.normal());
  return m;
}

inline CMat random_rmat(int r, int c, paris::Rng& rng, double lo, double hi) {
  CMat m(r, c);
  for (auto& z : m.d) z = cplx(rng.uniform(lo, hi), 0.0);
  return m;
}

} // namespace gc
