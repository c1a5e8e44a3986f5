#include "paris/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace paris {

namespace {

Eigen::Vector3d ris_pos(const SystemParams& p) {
  return {p.ris_position[0], p.ris_position[1], p.ris_position[2]};
}

} // namespace

Eigen::VectorXcd pinching_vector(const Eigen::VectorXd& x_row, double y_n,
                                 const SystemParams& p) {
  (void)y_n;  // feed point shares y and height, distance reduces to x
  const double k_g = 2.0 * M_PI / p.guided_wavelength();
  Eigen::VectorXcd g(x_row.size());
  for (Eigen::Index m = 0; m < x_row.size(); ++m)
    g(m) = std::polar(1.0, -k_g * std::abs(x_row(m)));
  return g;
}

Eigen::MatrixXcd assemble_G(const PAPlacement& pl, const SystemParams& p) {
  const int N = int(pl.x.rows());
  const int M = int(pl.x.cols());
  Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(N * M, N);
  for (int n = 0; n < N; ++n) {
    const Eigen::VectorXcd g = pinching_vector(pl.x.row(n), waveguide_y(n + 1, p), p);
    G.block(n * M, n, M, 1) = g;
  }
  return G;
}

Eigen::VectorXcd pa_user_channel(const PAPlacement& pl,
                                 const Eigen::Vector3d& user,
                                 const SystemParams& p,
                                 const Eigen::VectorXd& ys) {
  const int N = int(pl.x.rows());
  const int M = int(pl.x.cols());
  const double amp = std::sqrt(p.eta());
  const double k0 = 2.0 * M_PI / p.wavelength();
  Eigen::VectorXcd f(N * M);
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) {
      const double dx = user(0) - pl.x(n, m);
      const double dy = user(1) - ys(n);
      const double dz = user(2) - p.height;
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (d == 0.0)
        throw std::domain_error("pa_user_channel: user coincides with a PA");
      f(n * M + m) = std::polar(amp / d, -k0 * d);
    }
  }
  return f;
}

Eigen::VectorXcd steering_vector(double cos_aod, const SystemParams& p) {
  if (std::abs(cos_aod) > 1.0 + 1e-12)
    throw std::domain_error("steering_vector: |cos| must be <= 1");
  const double step = -2.0 * M_PI / p.wavelength() * p.element_sep * cos_aod;
  Eigen::VectorXcd v(p.n_ris);
  for (int l = 0; l < p.n_ris; ++l) v(l) = std::polar(1.0, step * l);
  return v;
}

namespace {

// Rician mixture weighted by the large-scale factor sqrt(beta0 / d^alpha).
Eigen::VectorXcd rician_link(double dist, double cos_aod,
                             const Eigen::VectorXcd& nlos,
                             const SystemParams& p) {
  if (dist == 0.0) throw std::domain_error("rician_link: zero distance");
  const double large = std::sqrt(p.beta0_linear() / std::pow(dist, p.fading_exponent));
  const Eigen::VectorXcd los = steering_vector(cos_aod, p);
  if (p.los_only) return large * los;
  const double kap = p.kappa_linear();
  const double w_los = std::sqrt(kap / (1.0 + kap));
  const double w_nlos = std::sqrt(1.0 / (1.0 + kap));
  return large * (w_los * los + w_nlos * nlos);
}

} // namespace

Eigen::MatrixXcd pa_ris_channel(const PAPlacement& pl, const Scenario& sc,
                                const SystemParams& p, const Eigen::VectorXd& ys) {
  const int N = int(pl.x.rows());
  const int M = int(pl.x.cols());
  const Eigen::Vector3d r = ris_pos(p);
  Eigen::MatrixXcd H(p.n_ris, N * M);
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) {
      const int c = n * M + m;
      const double dx = r(0) - pl.x(n, m);
      const double dy = r(1) - ys(n);
      const double dz = r(2) - p.height;
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (d == 0.0) throw std::domain_error("pa_ris_channel: PA at the RIS");
      const double cos_aod = dx / d;
      H.col(c) = rician_link(d, cos_aod, sc.nlos_pa_ris.col(c), p);
    }
  }
  return H;
}

Eigen::MatrixXcd ris_user_channel(const Scenario& sc, const SystemParams& p) {
  const int K = int(sc.user_positions.rows());
  const Eigen::Vector3d r = ris_pos(p);
  Eigen::MatrixXcd h(p.n_ris, K);
  for (int k = 0; k < K; ++k) {
    const Eigen::Vector3d u = sc.user_positions.row(k);
    const Eigen::Vector3d dvec = r - u;
    const double d = dvec.norm();
    if (d == 0.0) throw std::domain_error("ris_user_channel: user at the RIS");
    const double cos_aod = dvec(0) / d;
    h.col(k) = rician_link(d, cos_aod, sc.nlos_ris_user.col(k), p);
  }
  return h;
}

ChannelSet compute_channels(const PAPlacement& pl, const Scenario& sc,
                            const SystemParams& p) {
  const Eigen::VectorXd ys = waveguide_ys(p);
  ChannelSet cs;
  cs.G = assemble_G(pl, p);
  const int K = int(sc.user_positions.rows());
  cs.f.resize(pl.x.rows() * pl.x.cols(), K);
  for (int k = 0; k < K; ++k)
    cs.f.col(k) = pa_user_channel(pl, sc.user_positions.row(k), p, ys);
  if (p.n_ris > 0) {
    cs.H_ris = pa_ris_channel(pl, sc, p, ys);
    cs.h_user = ris_user_channel(sc, p);
  } else {
    cs.H_ris.resize(0, pl.x.rows() * pl.x.cols());
    cs.h_user.resize(0, K);
  }
  return cs;
}

Eigen::MatrixXcd effective_channels(const PAPlacement& pl, const RISConfig& ris,
                                    const Scenario& sc, const SystemParams& p,
                                    const Eigen::VectorXd& ys) {
  const int N = int(pl.x.rows());
  const int M = int(pl.x.cols());
  const int K = int(sc.user_positions.rows());

  Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(N * M, N);
  for (int n = 0; n < N; ++n) {
    const double k_g = 2.0 * M_PI / p.guided_wavelength();
    for (int m = 0; m < M; ++m)
      G(n * M + m, n) = std::polar(1.0, -k_g * std::abs(pl.x(n, m)));
  }

  Eigen::MatrixXcd rows(K, N * M);  // f_k^H plus the cascaded term
  for (int k = 0; k < K; ++k)
    rows.row(k) = pa_user_channel(pl, sc.user_positions.row(k), p, ys).adjoint();

  if (p.n_ris > 0 && ris.phases.size() > 0) {
    const Eigen::MatrixXcd H = pa_ris_channel(pl, sc, p, ys);
    const Eigen::MatrixXcd hu = ris_user_channel(sc, p);
    const Eigen::VectorXcd phi = ris.unit_vector();
    for (int k = 0; k < K; ++k)
      rows.row(k) += (hu.col(k).adjoint() * phi.asDiagonal()) * H;
  }
  return rows * G;
}

Eigen::MatrixXcd effective_channels(const PAPlacement& pl, const RISConfig& ris,
                                    const Scenario& sc, const SystemParams& p) {
  return effective_channels(pl, ris, sc, p, waveguide_ys(p));
}

Eigen::MatrixXcd effective_channels_initial(const PAPlacement& pl,
                                            const Scenario& sc,
                                            const SystemParams& p) {
  return effective_channels(pl, RISConfig::identity(p.n_ris), sc, p);
}

Eigen::MatrixXcd effective_channels_pa_only(const PAPlacement& pl,
                                            const Scenario& sc,
                                            const SystemParams& p) {
  RISConfig none;
  none.phases.resize(0);
  return effective_channels(pl, none, sc, p);
}

} // namespace paris
