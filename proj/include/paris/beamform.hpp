#pragma once

#include <Eigen/Dense>

#include "paris/objective.hpp"

namespace paris {

/// Hybrid decomposition of a beamformer: per-user mixing coefficient between
/// the zero-forcing and matched directions, plus per-user transmit power.
struct HzmParams {
  Eigen::VectorXd alpha;  // K, in (0, 1) when produced by the network heads
  Eigen::VectorXd power;  // K, nonnegative, sums to at most the budget
};

struct ZfDiag {
  bool jittered = false;     // Tikhonov term applied due to poor conditioning
  double cond_zzh = 0.0;     // condition number estimate of Z Z^H
};

/// Pseudo-inverse beamforming matrix U = Z^H (Z Z^H)^{-1} for channel rows Z
/// (K x N, K <= N). Near-singular Gram matrices get a 1e-10 jitter and the
/// diagnostic flag is set.
Eigen::MatrixXcd zf_matrix(const Eigen::MatrixXcd& Z, ZfDiag* diag = nullptr);

/// Unit-norm mix of the normalized ZF and matched-filter directions. An exact
/// cancellation falls back to the matched direction.
Eigen::VectorXcd hzm_direction(int k, double alpha_k,
                               const Eigen::MatrixXcd& eff);

Beamformer assemble_hzm(const HzmParams& hp, const Eigen::MatrixXcd& eff);

/// Closed-form regularized zero forcing: column k is the normalized solution
/// of (I + sum_k' lambda_k'/sigma^2 h_k' h_k'^H) u = h_k, scaled by sqrt(p_k).
Beamformer rzf_closed_form(const Eigen::MatrixXcd& eff, const SystemParams& p,
                           const Eigen::VectorXd& power,
                           const Eigen::VectorXd& lambda_reg);

/// Defaults p_k = lambda_k = P_max / K.
Beamformer rzf_closed_form(const Eigen::MatrixXcd& eff, const SystemParams& p);

struct RefineResult {
  Beamformer beams;
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
};

/// Monotone first-order refinement at fixed placement and phases: projected
/// gradient ascent on the sum rate over the power ball; for the EE objective a
/// Dinkelbach outer loop converts the ratio into subtractive subproblems.
/// The returned objective never drops below the initial one.
RefineResult refine_beams(const Eigen::MatrixXcd& eff, const SystemParams& p,
                          Objective obj, const Beamformer& init, int budget);

} // namespace paris
