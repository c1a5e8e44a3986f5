#pragma once

#include <Eigen/Dense>
#include <vector>

#include "paris/channel.hpp"
#include "paris/scenario.hpp"

namespace paris {

struct Beamformer {
  Eigen::MatrixXcd W;  // N x K, column k serves user k

  double total_power() const { return W.squaredNorm(); }
};

struct Solution {
  PAPlacement placement;
  RISConfig ris;
  Beamformer beam;
};

enum class Objective { sum_rate, energy_efficiency };

/// Loss guard: rates below this floor are clipped before taking reciprocals.
inline constexpr double kRateFloor = 1e-8;

/// Per-user rates from precomputed effective channel rows (K x N).
Eigen::VectorXd user_rates(const Eigen::MatrixXcd& eff, const Beamformer& beam,
                           const SystemParams& p);

double user_rate(int k, const Solution& sol, const Scenario& sc,
                 const SystemParams& p);
double sum_rate(const Solution& sol, const Scenario& sc, const SystemParams& p);
double sum_rate(const Eigen::MatrixXcd& eff, const Beamformer& beam,
                const SystemParams& p);
double energy_efficiency(const Solution& sol, const Scenario& sc,
                         const SystemParams& p);

/// Batch-mean reciprocal sum rate.
double loss_sr(const std::vector<double>& sum_rates);
/// Batch-mean (transmit power + circuit power) / sum rate.
double loss_ee(const std::vector<double>& sum_rates,
               const std::vector<double>& tx_powers, double circuit_power);

double loss_sr(const std::vector<Solution>& sols,
               const std::vector<Scenario>& scs, const SystemParams& p);
double loss_ee(const std::vector<Solution>& sols,
               const std::vector<Scenario>& scs, const SystemParams& p);

} // namespace paris
