#include "paris/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace paris {

Eigen::VectorXd user_rates(const Eigen::MatrixXcd& eff, const Beamformer& beam,
                           const SystemParams& p) {
  const int K = int(eff.rows());
  if (beam.W.cols() != K || beam.W.rows() != eff.cols())
    throw std::invalid_argument("user_rates: dimension mismatch");
  const Eigen::MatrixXcd S = eff * beam.W;  // S(k, k') = h_k^H w_{k'}
  Eigen::VectorXd r(K);
  const double inv_ln2 = 1.0 / std::log(2.0);
  for (int k = 0; k < K; ++k) {
    double sig = std::norm(S(k, k));
    double interf = 0.0;
    for (int j = 0; j < K; ++j)
      if (j != k) interf += std::norm(S(k, j));
    r(k) = std::log1p(sig / (interf + p.noise_power)) * inv_ln2;
  }
  return r;
}

double user_rate(int k, const Solution& sol, const Scenario& sc,
                 const SystemParams& p) {
  const Eigen::MatrixXcd eff = effective_channels(sol.placement, sol.ris, sc, p);
  return user_rates(eff, sol.beam, p)(k);
}

double sum_rate(const Eigen::MatrixXcd& eff, const Beamformer& beam,
                const SystemParams& p) {
  return user_rates(eff, beam, p).sum();
}

double sum_rate(const Solution& sol, const Scenario& sc, const SystemParams& p) {
  const Eigen::MatrixXcd eff = effective_channels(sol.placement, sol.ris, sc, p);
  return sum_rate(eff, sol.beam, p);
}

double energy_efficiency(const Solution& sol, const Scenario& sc,
                         const SystemParams& p) {
  return sum_rate(sol, sc, p) / (sol.beam.total_power() + p.circuit_power);
}

double loss_sr(const std::vector<double>& sum_rates) {
  if (sum_rates.empty()) throw std::invalid_argument("loss_sr: empty batch");
  double acc = 0.0;
  for (double sr : sum_rates) acc += 1.0 / std::max(sr, kRateFloor);
  return acc / double(sum_rates.size());
}

double loss_ee(const std::vector<double>& sum_rates,
               const std::vector<double>& tx_powers, double circuit_power) {
  if (sum_rates.empty() || sum_rates.size() != tx_powers.size())
    throw std::invalid_argument("loss_ee: bad batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < sum_rates.size(); ++i)
    acc += (tx_powers[i] + circuit_power) / std::max(sum_rates[i], kRateFloor);
  return acc / double(sum_rates.size());
}

double loss_sr(const std::vector<Solution>& sols,
               const std::vector<Scenario>& scs, const SystemParams& p) {
  std::vector<double> srs;
  srs.reserve(sols.size());
  for (std::size_t i = 0; i < sols.size(); ++i)
    srs.push_back(sum_rate(sols[i], scs[i], p));
  return loss_sr(srs);
}

double loss_ee(const std::vector<Solution>& sols,
               const std::vector<Scenario>& scs, const SystemParams& p) {
  std::vector<double> srs, pw;
  for (std::size_t i = 0; i < sols.size(); ++i) {
    srs.push_back(sum_rate(sols[i], scs[i], p));
    pw.push_back(sols[i].beam.total_power());
  }
  return loss_ee(srs, pw, p.circuit_power);
}

} // namespace paris
