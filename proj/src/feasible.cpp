#include "paris/feasible.hpp"

#include <cmath>
#include <stdexcept>

namespace paris {

namespace {
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
} // namespace

SpacingVars raw_to_spacing(const Eigen::MatrixXd& raw, const SystemParams& p) {
  const double dmax = delta_max(p);
  SpacingVars sv;
  sv.delta.resizeLike(raw);
  for (Eigen::Index n = 0; n < raw.rows(); ++n) {
    double sum = 0.0;
    for (Eigen::Index m = 0; m < raw.cols(); ++m) {
      sv.delta(n, m) = dmax * sigmoid(raw(n, m));
      sum += sv.delta(n, m);
    }
    if (sum > dmax) sv.delta.row(n) *= dmax / sum;
  }
  return sv;
}

PAPlacement spacing_to_positions(const SpacingVars& sv, const SystemParams& p) {
  PAPlacement pl;
  pl.x.resizeLike(sv.delta);
  for (Eigen::Index n = 0; n < sv.delta.rows(); ++n) {
    double acc = 0.0;
    for (Eigen::Index m = 0; m < sv.delta.cols(); ++m) {
      acc += sv.delta(n, m);
      pl.x(n, m) = acc + double(m) * p.min_spacing;
    }
  }
  return pl;
}

SpacingVars positions_to_spacing(const PAPlacement& pl, const SystemParams& p) {
  SpacingVars sv;
  sv.delta.resizeLike(pl.x);
  for (Eigen::Index n = 0; n < pl.x.rows(); ++n) {
    sv.delta(n, 0) = pl.x(n, 0);
    for (Eigen::Index m = 1; m < pl.x.cols(); ++m)
      sv.delta(n, m) = pl.x(n, m) - pl.x(n, m - 1) - p.min_spacing;
  }
  return sv;
}

RISConfig normalize_phase(const Eigen::VectorXcd& raw) {
  RISConfig r;
  r.phases.resize(raw.size());
  for (Eigen::Index l = 0; l < raw.size(); ++l) {
    const double mod = std::abs(raw(l));
    const std::complex<double> unit = mod == 0.0 ? std::complex<double>(1.0, 0.0)
                                                 : raw(l) / mod;
    double ph = std::arg(unit);
    if (ph < 0.0) ph += 2.0 * M_PI;
    if (ph >= 2.0 * M_PI) ph = 0.0;
    r.phases(l) = ph;
  }
  return r;
}

Eigen::VectorXd raw_power(const Eigen::VectorXd& raw, const SystemParams& p) {
  Eigen::VectorXd out(raw.size());
  for (Eigen::Index k = 0; k < raw.size(); ++k)
    out(k) = p.power_budget * sigmoid(raw(k));
  return out;
}

Eigen::VectorXd normalize_power(const Eigen::VectorXd& p_tilde,
                                const SystemParams& p) {
  const double sum = p_tilde.sum();
  if (sum <= p.power_budget) return p_tilde;
  return p_tilde * (p.power_budget / sum);
}

} // namespace paris
