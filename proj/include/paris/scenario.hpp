#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace paris {

inline constexpr double kSpeedOfLight = 3.0e8;

/// Physical constants and dimensions of one deployment. dB-valued inputs are
/// converted to linear scale once, by finalize().
struct SystemParams {
  int n_waveguides = 2;    // N
  int n_pas_per_wg = 2;    // M
  int n_users = 2;         // K
  int n_ris = 8;           // L
  double region_length = 10.0; // D, meters along x
  double region_width = 10.0;  // S, meters along y
  double height = 5.0;         // H
  double min_spacing = 0.1;    // minimum gap between adjacent PAs
  double power_budget = 10.0;  // watts
  double circuit_power = 5.0;  // watts
  double noise_power = 1e-9;   // watts (-60 dBm)
  double carrier_freq = 6e9;   // Hz
  double refractive_index = 1.4;
  double rician_factor_db = 3.0;
  bool los_only = false;       // Rician factor -> infinity
  double fading_exponent = 2.8;
  double ref_gain_db = -20.0;  // gain at 1 m
  double element_sep = 0.025;  // RIS element spacing, lambda/2 at 6 GHz
  std::array<double, 3> ris_position{5.0, 0.0, 2.5};

  double wavelength() const { return kSpeedOfLight / carrier_freq; }
  double guided_wavelength() const { return wavelength() / refractive_index; }
  /// Free-space reference gain eta = (c / (4 pi f_c))^2.
  double eta() const;
  double kappa_linear() const { return kappa_lin_; }
  double beta0_linear() const { return beta0_lin_; }

  /// Recomputes cached linear-scale factors and checks invariants. Throws
  /// std::invalid_argument on a malformed parameter set.
  void finalize();

  /// Full-size parameter set used throughout the reference experiments.
  static SystemParams table_defaults();
  /// Small configuration for quick runs and tests.
  static SystemParams desk_defaults();

 private:
  double kappa_lin_ = 1.9952623149688795;
  double beta0_lin_ = 0.01;
};

/// One random problem instance: user drops plus frozen small-scale fading.
/// Fading draws attach to (waveguide, PA slot) and user indices and do not
/// move with the PAs, so the objective stays deterministic in the positions.
struct Scenario {
  Eigen::MatrixXd user_positions;  // K x 3, z = 0
  Eigen::MatrixXcd nlos_pa_ris;    // L x (N*M), column (n-1)*M + m
  Eigen::MatrixXcd nlos_ris_user;  // L x K
  std::uint64_t rng_seed = 0;
};

/// y-coordinate of waveguide n (1-based), evenly spaced and symmetric about 0.
double waveguide_y(int n, const SystemParams& p);

/// All waveguide y-coordinates as a vector.
Eigen::VectorXd waveguide_ys(const SystemParams& p);

/// Default RIS deployment point (D/2, 0, H/2).
std::array<double, 3> default_ris_position(const SystemParams& p);

/// Draws a Scenario: users uniform over the region, fading CSCG(0,1).
/// Deterministic given (params, seed).
Scenario sample_scenario(const SystemParams& p, std::uint64_t seed);

struct PAPlacement {
  Eigen::MatrixXd x;  // N x M, x-coordinates, ascending within each row
};

/// Uniform lattice at spacing min_spacing centered at D/2, same on every
/// waveguide. Throws if (M-1)*min_spacing > D.
PAPlacement fixed_pa_placement(const SystemParams& p);

// --- serialization ---------------------------------------------------------

std::string params_to_json(const SystemParams& p);
SystemParams params_from_json(const std::string& text);

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

/// Dataset container: shared params + scenario list, versioned JSON.
struct Dataset {
  SystemParams params;
  std::vector<Scenario> scenarios;
  std::uint64_t seed = 0;
};

Dataset make_dataset(const SystemParams& p, int count, std::uint64_t seed);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

} // namespace paris
