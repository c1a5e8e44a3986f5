#pragma once

#include <Eigen/Dense>

#include "paris/channel.hpp"
#include "paris/scenario.hpp"

namespace paris {

/// Per-waveguide gaps between adjacent PAs (first entry measured from x = 0).
struct SpacingVars {
  Eigen::MatrixXd delta;  // N x M, nonnegative, row sums <= delta_max
};

inline double delta_max(const SystemParams& p) {
  return p.region_length - (p.n_pas_per_wg - 1) * p.min_spacing;
}

/// Sigmoid-scaled spacings; rows whose sum exceeds the available range are
/// rescaled onto it. Output always satisfies the SpacingVars invariants.
SpacingVars raw_to_spacing(const Eigen::MatrixXd& raw, const SystemParams& p);

/// Cumulative-sum recovery of positions; feasible by construction.
PAPlacement spacing_to_positions(const SpacingVars& sv, const SystemParams& p);

/// Inverse of spacing_to_positions for a feasible placement.
SpacingVars positions_to_spacing(const PAPlacement& pl, const SystemParams& p);

/// Projects raw complex values onto the unit circle; zero maps to 1+0j.
/// Phases are reported in [0, 2*pi).
RISConfig normalize_phase(const Eigen::VectorXcd& raw);

/// P_max * sigmoid per user.
Eigen::VectorXd raw_power(const Eigen::VectorXd& raw, const SystemParams& p);

/// Pass-through if the total fits the budget, otherwise uniform rescale.
Eigen::VectorXd normalize_power(const Eigen::VectorXd& p_tilde,
                                const SystemParams& p);

} // namespace paris
