#pragma once

#include <Eigen/Dense>

#include "paris/scenario.hpp"

namespace paris {

/// Unit-modulus phase shifts of the passive surface.
struct RISConfig {
  Eigen::VectorXd phases;  // L, radians in [0, 2*pi)

  Eigen::VectorXcd unit_vector() const {
    Eigen::VectorXcd v(phases.size());
    for (Eigen::Index l = 0; l < phases.size(); ++l)
      v(l) = std::polar(1.0, phases(l));
    return v;
  }
  static RISConfig identity(int L) {
    RISConfig r;
    r.phases = Eigen::VectorXd::Zero(L);
    return r;
  }
};

/// All channel blocks for one (placement, scenario) pair.
struct ChannelSet {
  Eigen::MatrixXcd G;       // (M*N) x N block diagonal, unit-modulus entries
  Eigen::MatrixXcd f;       // (M*N) x K, column k is the direct link of user k
  Eigen::MatrixXcd H_ris;   // L x (M*N)
  Eigen::MatrixXcd h_user;  // L x K
};

/// Phase replica emitted by each PA of one waveguide relative to its feed.
Eigen::VectorXcd pinching_vector(const Eigen::VectorXd& x_row, double y_n,
                                 const SystemParams& p);

Eigen::MatrixXcd assemble_G(const PAPlacement& pl, const SystemParams& p);

/// Direct link from every PA to one user; entry modulus sqrt(eta)/distance.
Eigen::VectorXcd pa_user_channel(const PAPlacement& pl,
                                 const Eigen::Vector3d& user,
                                 const SystemParams& p,
                                 const Eigen::VectorXd& ys);

/// Uniform-linear-array response for a given direction cosine, |phi| <= 1.
Eigen::VectorXcd steering_vector(double cos_aod, const SystemParams& p);

/// Rician link from all PAs to the surface, columns per (waveguide, slot).
Eigen::MatrixXcd pa_ris_channel(const PAPlacement& pl, const Scenario& sc,
                                const SystemParams& p, const Eigen::VectorXd& ys);

/// Rician links from the surface to each user (L x K).
Eigen::MatrixXcd ris_user_channel(const Scenario& sc, const SystemParams& p);

ChannelSet compute_channels(const PAPlacement& pl, const Scenario& sc,
                            const SystemParams& p);

/// End-to-end channel rows h_k^H = (f_k^H + h_k^H diag(e^{j phi}) H) G, K x N.
Eigen::MatrixXcd effective_channels(const PAPlacement& pl, const RISConfig& ris,
                                    const Scenario& sc, const SystemParams& p);

/// Same with the all-ones initial phase configuration.
Eigen::MatrixXcd effective_channels_initial(const PAPlacement& pl,
                                            const Scenario& sc,
                                            const SystemParams& p);

/// Direct paths only; the surface contribution is removed.
Eigen::MatrixXcd effective_channels_pa_only(const PAPlacement& pl,
                                            const Scenario& sc,
                                            const SystemParams& p);

/// Variants taking explicit waveguide y-coordinates (geometry overrides).
Eigen::MatrixXcd effective_channels(const PAPlacement& pl, const RISConfig& ris,
                                    const Scenario& sc, const SystemParams& p,
                                    const Eigen::VectorXd& ys);

} // namespace paris
