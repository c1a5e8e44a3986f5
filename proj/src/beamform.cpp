#include "paris/beamform.hpp"

#include <cmath>
#include <stdexcept>

namespace paris {

namespace {
constexpr double kJitter = 1e-10;
constexpr double kCondLimit = 1e10;
} // namespace

Eigen::MatrixXcd zf_matrix(const Eigen::MatrixXcd& Z, ZfDiag* diag) {
  const int K = int(Z.rows());
  const int N = int(Z.cols());
  if (K > N) throw std::invalid_argument("zf_matrix: needs K <= N");
  Eigen::MatrixXcd gram = Z * Z.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  const double cond = emin > 0.0 ? emax / emin : std::numeric_limits<double>::infinity();
  bool jittered = false;
  if (!(cond < kCondLimit)) {
    gram += kJitter * Eigen::MatrixXcd::Identity(K, K);
    jittered = true;
  }
  if (diag) {
    diag->jittered = jittered;
    diag->cond_zzh = cond;
  }
  return Z.adjoint() * gram.inverse();
}

Eigen::VectorXcd hzm_direction(int k, double alpha_k,
                               const Eigen::MatrixXcd& eff) {
  if (alpha_k < 0.0 || alpha_k > 1.0)
    throw std::invalid_argument("hzm_direction: alpha outside [0,1]");
  const Eigen::VectorXcd h = eff.row(k).adjoint();
  const double hn = h.norm();
  if (hn == 0.0) throw std::domain_error("hzm_direction: zero channel");
  const Eigen::VectorXcd mrt = h / hn;
  const Eigen::MatrixXcd U = zf_matrix(eff);
  const Eigen::VectorXcd u = U.col(k);
  const double un = u.norm();
  if (un == 0.0) throw std::domain_error("hzm_direction: zero ZF column");
  Eigen::VectorXcd v = alpha_k * (u / un) + (1.0 - alpha_k) * mrt;
  const double vn = v.norm();
  if (vn < 1e-14) return mrt;  // exact cancellation
  return v / vn;
}

Beamformer assemble_hzm(const HzmParams& hp, const Eigen::MatrixXcd& eff) {
  const int K = int(eff.rows());
  const int N = int(eff.cols());
  if (hp.alpha.size() != K || hp.power.size() != K)
    throw std::invalid_argument("assemble_hzm: dimension mismatch");
  const Eigen::MatrixXcd U = zf_matrix(eff);
  Beamformer b;
  b.W.resize(N, K);
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXcd h = eff.row(k).adjoint();
    const Eigen::VectorXcd mrt = h / h.norm();
    const Eigen::VectorXcd u = U.col(k);
    Eigen::VectorXcd v = hp.alpha(k) * (u / u.norm()) + (1.0 - hp.alpha(k)) * mrt;
    const double vn = v.norm();
    const Eigen::VectorXcd dir = vn < 1e-14 ? mrt : Eigen::VectorXcd(v / vn);
    b.W.col(k) = std::sqrt(hp.power(k)) * dir;
  }
  return b;
}

Beamformer rzf_closed_form(const Eigen::MatrixXcd& eff, const SystemParams& p,
                           const Eigen::VectorXd& power,
                           const Eigen::VectorXd& lambda_reg) {
  const int K = int(eff.rows());
  const int N = int(eff.cols());
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(N, N);
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXcd h = eff.row(k).adjoint();
    A += (lambda_reg(k) / p.noise_power) * (h * h.adjoint());
  }
  const Eigen::LLT<Eigen::MatrixXcd> llt(A);
  Beamformer b;
  b.W.resize(N, K);
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXcd h = eff.row(k).adjoint();
    Eigen::VectorXcd u = llt.solve(h);
    b.W.col(k) = std::sqrt(power(k)) * u / u.norm();
  }
  return b;
}

Beamformer rzf_closed_form(const Eigen::MatrixXcd& eff, const SystemParams& p) {
  const int K = int(eff.rows());
  const Eigen::VectorXd uniform =
      Eigen::VectorXd::Constant(K, p.power_budget / double(K));
  return rzf_closed_form(eff, p, uniform, uniform);
}

namespace {

// Conjugate-Wirtinger gradient of the sum rate with respect to W.
Eigen::MatrixXcd sum_rate_grad(const Eigen::MatrixXcd& eff,
                               const Eigen::MatrixXcd& W, double sigma2) {
  const int K = int(eff.rows());
  const Eigen::MatrixXcd S = eff * W;
  Eigen::MatrixXd P = S.cwiseAbs2();
  Eigen::VectorXd den(K), tot(K);
  for (int k = 0; k < K; ++k) {
    double interf = 0.0;
    for (int j = 0; j < K; ++j)
      if (j != k) interf += P(k, j);
    den(k) = sigma2 + interf;
    tot(k) = den(k) + P(k, k);
  }
  Eigen::MatrixXd C(K, int(W.cols()));
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < W.cols(); ++j)
      C(k, j) = (j == k) ? 1.0 / tot(k) : (1.0 / tot(k) - 1.0 / den(k));
  const double inv_ln2 = 1.0 / std::log(2.0);
  return inv_ln2 * (eff.adjoint() * (C.cast<std::complex<double>>().cwiseProduct(S)));
}

void project_power(Eigen::MatrixXcd& W, double budget) {
  const double pw = W.squaredNorm();
  if (pw > budget) W *= std::sqrt(budget / pw);
}

struct PgaResult {
  int used = 0;
  bool stationary = false;
};

// Projected gradient ascent on f(W) = SR(W) - lambda * (||W||^2 + Pc).
// lambda = 0 gives the plain SR problem. Only improving steps are accepted.
PgaResult pga(const Eigen::MatrixXcd& eff, const SystemParams& p, double lambda,
              Eigen::MatrixXcd& W, int budget) {
  PgaResult res;
  auto value = [&](const Eigen::MatrixXcd& M) {
    Beamformer b;
    b.W = M;
    return sum_rate(eff, b, p) - lambda * (M.squaredNorm() + p.circuit_power);
  };
  double f = value(W);
  double step = 1.0;
  for (int it = 0; it < budget; ++it) {
    ++res.used;
    Eigen::MatrixXcd G = sum_rate_grad(eff, W, p.noise_power);
    if (lambda != 0.0) G -= lambda * W;
    const double gn2 = G.squaredNorm();
    if (gn2 < 1e-18 * std::max(1.0, W.squaredNorm())) {
      res.stationary = true;
      break;
    }
    bool accepted = false;
    double t = step;
    for (int ls = 0; ls < 40; ++ls) {
      Eigen::MatrixXcd Wn = W + t * G;
      project_power(Wn, p.power_budget);
      const double fn = value(Wn);
      if (fn >= f + 1e-4 * t * gn2) {
        W = Wn;
        f = fn;
        step = t * 2.0;  // let the next iteration start more ambitiously
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      res.stationary = true;
      break;
    }
  }
  return res;
}

} // namespace

RefineResult refine_beams(const Eigen::MatrixXcd& eff, const SystemParams& p,
                          Objective obj, const Beamformer& init, int budget) {
  RefineResult out;
  out.beams = init;
  Eigen::MatrixXcd W = init.W;
  project_power(W, p.power_budget);

  auto obj_value = [&](const Eigen::MatrixXcd& M) {
    Beamformer b;
    b.W = M;
    const double sr = sum_rate(eff, b, p);
    if (obj == Objective::sum_rate) return sr;
    return sr / (M.squaredNorm() + p.circuit_power);
  };

  if (obj == Objective::sum_rate) {
    const PgaResult r = pga(eff, p, 0.0, W, budget);
    out.iterations = r.used;
    out.converged = r.stationary;
  } else {
    int remaining = budget;
    double lambda = obj_value(W);  // EE of the current iterate
    out.converged = false;
    while (remaining > 0) {
      const int chunk = std::min(remaining, 50);
      const PgaResult r = pga(eff, p, lambda, W, chunk);
      remaining -= r.used;
      out.iterations += r.used;
      Beamformer b;
      b.W = W;
      const double sr = sum_rate(eff, b, p);
      const double powc = W.squaredNorm() + p.circuit_power;
      const double gap = sr - lambda * powc;
      lambda = sr / powc;
      if (std::abs(gap) < 1e-6 && r.stationary) {
        out.converged = true;
        break;
      }
    }
  }

  // never return something worse than the starting point
  if (obj_value(W) >= obj_value(init.W)) out.beams.W = W;
  out.objective = obj_value(out.beams.W);
  return out;
}

} // namespace paris
