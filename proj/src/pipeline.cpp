#include "paris/pipeline.hpp"

#include <cmath>
#include <stdexcept>

#include "paris/feasible.hpp"

namespace paris {

namespace ad_detail {

ad::CMat from_eigen(const Eigen::MatrixXcd& m) {
  ad::CMat out(int(m.rows()), int(m.cols()));
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) = m(i, j);
  return out;
}

ad::CMat from_eigen_real(const Eigen::MatrixXd& m) {
  ad::CMat out(int(m.rows()), int(m.cols()));
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) = ad::cplx(m(i, j), 0.0);
  return out;
}

Eigen::MatrixXcd to_eigen(const ad::CMat& m) {
  Eigen::MatrixXcd out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out(i, j) = m.at(i, j);
  return out;
}

Eigen::MatrixXd to_eigen_real(const ad::CMat& m) {
  Eigen::MatrixXd out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out(i, j) = m.at(i, j).real();
  return out;
}

} // namespace ad_detail

using ad_detail::from_eigen;
using ad_detail::from_eigen_real;
using ad_detail::to_eigen;
using ad_detail::to_eigen_real;

std::vector<ad::Var> register_model(ad::Tape& tape, const GnnModel& model,
                                    std::vector<ad::Var>* trainable_in_order) {
  std::vector<ad::Var> vars(model.tensors.size());
  for (std::size_t i = 0; i < model.tensors.size(); ++i) {
    const ParamTensor& t = model.tensors[i];
    vars[i] = tape.leaf(t.value, t.trainable);
    if (t.trainable && trainable_in_order) trainable_in_order->push_back(vars[i]);
  }
  return vars;
}

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

namespace {

ad::Var affine(ad::Tape& t, ad::Var V, ad::Var W, ad::Var b) {
  ad::Var lin = t.matmul(V, W);
  return t.add(lin, t.repeat_rows(b, lin.rows()));
}

ad::Var cgcl_apply(ad::Tape& t, const std::vector<ad::Var>& w, ad::Var V,
                   int batch, int k_users) {
  (void)batch;
  const ad::Var &Wq1 = w[0], &bq1 = w[1], &Wq2 = w[2], &bq2 = w[3];
  const ad::Var &Wc1 = w[4], &bc1 = w[5], &Wc2 = w[6], &bc2 = w[7];
  // all ordered node pairs, self-loops included
  ad::Var left = t.repeat_rows(V, k_users);
  ad::Var right = t.tile_group(V, k_users);
  ad::Var pairs = t.concat_cols(left, right);
  ad::Var msg = affine(t, t.relu_c(affine(t, pairs, Wq1, bq1)), Wq2, bq2);
  ad::Var agg = t.sum_group_rows(msg, V.rows());  // sum over senders
  ad::Var comb = t.concat_cols(V, agg);
  return affine(t, t.relu_c(affine(t, comb, Wc1, bc1)), Wc2, bc2);
}

ad::Var cgal_apply(ad::Tape& t, const LayerSpec& spec,
                   const std::vector<ad::Var>& w, ad::Var V, int batch,
                   int k_users) {
  ad::Var agg;
  for (int h = 0; h < spec.heads; ++h) {
    ad::Var Wh = w[2 * h];
    ad::Var ah = w[2 * h + 1];
    ad::Var VW = t.matmul(V, Wh);
    ad::Var pairs = t.concat_cols(t.repeat_rows(VW, k_users), t.tile_group(VW, k_users));
    ad::Var logit = t.leaky_relu_r(t.real(t.matmul(pairs, ah)), 0.2);
    ad::Var A = t.softmax_rows(t.reshape(logit, V.rows(), k_users));
    ad::Var head = t.bmm(A, VW, batch);
    agg = h == 0 ? head : t.concat_cols(agg, head);
  }
  ad::Var out = t.relu_c(agg);
  if (spec.residual) {
    ad::Var Wres = w[2 * spec.heads];
    out = t.add(out, t.matmul(V, Wres));
  }
  return out;
}

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;  // weight of the fresh batch statistics

// Standardizes real and imaginary parts separately over all rows (the rows
// span batch x node, which keeps node permutations immaterial).
ad::Var batch_norm(ad::Tape& t, GnnModel& model, const LayerParams& lp,
                   const std::vector<ad::Var>& leaf_of_tensor, ad::Var lin,
                   bool train_mode) {
  const int rows = lin.rows();
  ad::Var gamma = leaf_of_tensor[lp.weight_ids[2]];
  ad::Var beta = leaf_of_tensor[lp.weight_ids[3]];
  ad::Var xr = t.real(lin);
  ad::Var xi = t.imag(lin);
  ad::Var nr, ni;
  if (train_mode) {
    ad::Var mr = t.mean_cols(xr);
    ad::Var mi = t.mean_cols(xi);
    ad::Var cr = t.sub(xr, t.repeat_rows(mr, rows));
    ad::Var ci = t.sub(xi, t.repeat_rows(mi, rows));
    ad::Var vr = t.mean_cols(t.mul(cr, cr));
    ad::Var vi = t.mean_cols(t.mul(ci, ci));
    nr = t.mul(cr, t.repeat_rows(t.recip_r(t.sqrt_r(t.add_scalar(vr, kBnEps))), rows));
    ni = t.mul(ci, t.repeat_rows(t.recip_r(t.sqrt_r(t.add_scalar(vi, kBnEps))), rows));
    // refresh running statistics from the detached batch values
    ad::CMat& rmean = model.tensors[lp.buffer_ids[0]].value;
    ad::CMat& rvar = model.tensors[lp.buffer_ids[1]].value;
    const ad::CMat& mrv = t.val(mr);
    const ad::CMat& miv = t.val(mi);
    const ad::CMat& vrv = t.val(vr);
    const ad::CMat& viv = t.val(vi);
    for (int j = 0; j < rmean.cols; ++j) {
      const double m_re = (1.0 - kBnMomentum) * rmean.at(0, j).real() +
                          kBnMomentum * mrv.at(0, j).real();
      const double m_im = (1.0 - kBnMomentum) * rmean.at(0, j).imag() +
                          kBnMomentum * miv.at(0, j).real();
      const double v_re = (1.0 - kBnMomentum) * rvar.at(0, j).real() +
                          kBnMomentum * vrv.at(0, j).real();
      const double v_im = (1.0 - kBnMomentum) * rvar.at(0, j).imag() +
                          kBnMomentum * viv.at(0, j).real();
      rmean.at(0, j) = ad::cplx(m_re, m_im);
      rvar.at(0, j) = ad::cplx(v_re, v_im);
    }
  } else {
    const ad::CMat& rmean = model.tensors[lp.buffer_ids[0]].value;
    const ad::CMat& rvar = model.tensors[lp.buffer_ids[1]].value;
    ad::CMat mr(1, rmean.cols), mi(1, rmean.cols), sr(1, rmean.cols), si(1, rmean.cols);
    for (int j = 0; j < rmean.cols; ++j) {
      mr.at(0, j) = rmean.at(0, j).real();
      mi.at(0, j) = rmean.at(0, j).imag();
      sr.at(0, j) = 1.0 / std::sqrt(rvar.at(0, j).real() + kBnEps);
      si.at(0, j) = 1.0 / std::sqrt(rvar.at(0, j).imag() + kBnEps);
    }
    nr = t.mul(t.sub(xr, t.repeat_rows(t.constant(mr), rows)),
               t.repeat_rows(t.constant(sr), rows));
    ni = t.mul(t.sub(xi, t.repeat_rows(t.constant(mi), rows)),
               t.repeat_rows(t.constant(si), rows));
  }
  ad::Var z = t.make_complex(nr, ni);
  z = t.mul(z, t.repeat_rows(gamma, rows));
  return t.add(z, t.repeat_rows(beta, rows));
}

} // namespace

ad::Var layer_apply(ad::Tape& tape, GnnModel& model, const LayerParams& lp,
                    const std::vector<ad::Var>& leaf_of_tensor, ad::Var V,
                    int batch, int k_users, bool train_mode) {
  std::vector<ad::Var> w;
  w.reserve(lp.weight_ids.size());
  for (int id : lp.weight_ids) w.push_back(leaf_of_tensor[id]);
  switch (lp.spec.kind) {
    case LayerKind::cgcl:
      return cgcl_apply(tape, w, V, batch, k_users);
    case LayerKind::cgal:
      return cgal_apply(tape, lp.spec, w, V, batch, k_users);
    case LayerKind::cfl: {
      ad::Var lin = affine(tape, V, w[0], w[1]);
      if (lp.spec.batch_norm)
        lin = batch_norm(tape, model, lp, leaf_of_tensor, lin, train_mode);
      return lp.spec.activation ? tape.relu_c(lin) : lin;
    }
  }
  throw std::logic_error("layer_apply: unknown layer kind");
}

namespace {

ad::Var run_stack(ad::Tape& t, GnnModel& m, const std::vector<LayerParams>& ls,
                  const std::vector<ad::Var>& leaves, ad::Var V, int batch,
                  int k_users, bool train_mode) {
  for (const LayerParams& lp : ls)
    V = layer_apply(t, m, lp, leaves, V, batch, k_users, train_mode);
  return V;
}

// ---------------------------------------------------------------------------
// feasibility heads
// ---------------------------------------------------------------------------

// raw (B x N*M, real) -> positions ((B*N) x M) satisfying range and spacing.
ad::Var spacing_head(ad::Tape& t, ad::Var raw, const SystemParams& p, int batch) {
  const int N = p.n_waveguides;
  const int M = p.n_pas_per_wg;
  const double dmax = delta_max(p);
  ad::Var delta = t.scale(t.sigmoid_r(raw), dmax);
  delta = t.reshape(delta, batch * N, M);
  delta = t.row_sum_clip_rescale(delta, dmax);
  ad::Var cum = t.cumsum_rows(delta);
  ad::CMat off(batch * N, M);
  for (int r = 0; r < off.rows; ++r)
    for (int m = 0; m < M; ++m) off.at(r, m) = double(m) * p.min_spacing;
  return t.add(cum, t.constant(std::move(off)));
}

// pooled complex logits (B x L) -> unit-modulus phases (B x L).
ad::Var phase_head(ad::Tape& t, ad::Var pooled) {
  ad::Var mod2 = t.clamp_min_r(t.abs2(pooled), 1e-60);
  ad::Var inv = t.recip_r(t.sqrt_r(mod2));
  return t.mul(pooled, inv);
}

// raw (B x K, real) -> power allocation within the budget.
ad::Var power_head(ad::Tape& t, ad::Var raw, const SystemParams& p) {
  ad::Var pt = t.clamp_min_r(t.scale(t.sigmoid_r(raw), p.power_budget), 1e-30);
  return t.row_sum_clip_rescale(pt, p.power_budget);
}

// ---------------------------------------------------------------------------
// channel graphs
// ---------------------------------------------------------------------------

struct ChannelConsts {
  int B = 0, K = 0, N = 0, M = 0, L = 0;
  ad::Var xu;          // (B*K) x NM user x-coordinates
  ad::Var cf;          // (B*K) x NM squared transverse distance to users
  ad::Var xr;          // B x NM surface x-coordinate
  ad::Var cr;          // B x NM squared transverse distance to the surface
  ad::Var steer_coeff; // (B*L) x NM per-element phase slope
  ad::Var hu_conj;     // (B*K) x L conjugated surface-user links
  ad::Var nlos;        // (B*L) x NM frozen fading draws
  ad::Var eye_n;       // (B*N) x N stacked identities (RZF)
  double w_los = 1.0, w_nlos = 0.0;
};

ChannelConsts make_channel_consts(ad::Tape& t, const SystemParams& p,
                                  const std::vector<const Scenario*>& batch,
                                  bool use_ris) {
  ChannelConsts c;
  c.B = int(batch.size());
  c.K = int(batch[0]->user_positions.rows());
  c.N = p.n_waveguides;
  c.M = p.n_pas_per_wg;
  c.L = use_ris ? p.n_ris : 0;
  const int NM = c.N * c.M;
  const Eigen::VectorXd ys = waveguide_ys(p);

  ad::CMat xu(c.B * c.K, NM), cf(c.B * c.K, NM);
  for (int b = 0; b < c.B; ++b) {
    const Eigen::MatrixXd& up = batch[b]->user_positions;
    for (int k = 0; k < c.K; ++k)
      for (int n = 0; n < c.N; ++n)
        for (int m = 0; m < c.M; ++m) {
          const int row = b * c.K + k;
          const int col = n * c.M + m;
          xu.at(row, col) = up(k, 0);
          const double dy = ys(n) - up(k, 1);
          const double dz = p.height - up(k, 2);
          cf.at(row, col) = dy * dy + dz * dz;
        }
  }
  c.xu = t.constant(std::move(xu));
  c.cf = t.constant(std::move(cf));

  if (c.L > 0) {
    ad::CMat xr(c.B, NM), cr(c.B, NM);
    for (int b = 0; b < c.B; ++b)
      for (int n = 0; n < c.N; ++n)
        for (int m = 0; m < c.M; ++m) {
          const int col = n * c.M + m;
          xr.at(b, col) = p.ris_position[0];
          const double dy = p.ris_position[1] - ys(n);
          const double dz = p.ris_position[2] - p.height;
          cr.at(b, col) = dy * dy + dz * dz;
        }
    c.xr = t.constant(std::move(xr));
    c.cr = t.constant(std::move(cr));

    const double slope = -2.0 * M_PI / p.wavelength() * p.element_sep;
    ad::CMat sc(c.B * c.L, NM);
    for (int b = 0; b < c.B; ++b)
      for (int l = 0; l < c.L; ++l)
        for (int col = 0; col < NM; ++col)
          sc.at(b * c.L + l, col) = slope * double(l);
    c.steer_coeff = t.constant(std::move(sc));

    ad::CMat hu(c.B * c.K, c.L), nl(c.B * c.L, NM);
    for (int b = 0; b < c.B; ++b) {
      const Eigen::MatrixXcd h = ris_user_channel(*batch[b], p);  // L x K
      for (int k = 0; k < c.K; ++k)
        for (int l = 0; l < c.L; ++l)
          hu.at(b * c.K + k, l) = std::conj(h(l, k));
      for (int l = 0; l < c.L; ++l)
        for (int col = 0; col < NM; ++col)
          nl.at(b * c.L + l, col) = batch[b]->nlos_pa_ris(l, col);
    }
    c.hu_conj = t.constant(std::move(hu));
    c.nlos = t.constant(std::move(nl));

    if (p.los_only) {
      c.w_los = 1.0;
      c.w_nlos = 0.0;
    } else {
      const double kap = p.kappa_linear();
      c.w_los = std::sqrt(kap / (1.0 + kap));
      c.w_nlos = std::sqrt(1.0 / (1.0 + kap));
    }
  }
  return c;
}

struct ChannelGraph {
  ad::Var g_blocks;   // (B*M*N) x N pinching matrix blocks
  ad::Var f_rows;     // (B*K) x NM conjugated direct links
  ad::Var h_var;      // (B*L) x NM surface-side links, valid when L > 0
};

ChannelGraph build_channels(ad::Tape& t, const ChannelConsts& c, ad::Var x_flat,
                            const SystemParams& p) {
  ChannelGraph g;
  const double k_g = 2.0 * M_PI / p.guided_wavelength();
  g.g_blocks = t.block_diag_cols(t.exp_j(t.scale(x_flat, -k_g)), c.M, c.N);

  const double k0 = 2.0 * M_PI / p.wavelength();
  ad::Var xk = t.repeat_rows(x_flat, c.K);
  ad::Var dx = t.sub(c.xu, xk);
  ad::Var dist = t.sqrt_r(t.add(t.mul(dx, dx), c.cf));
  ad::Var amp = t.scale(t.recip_r(dist), std::sqrt(p.eta()));
  g.f_rows = t.mul(amp, t.exp_j(t.scale(dist, k0)));  // conjugated entries

  if (c.L > 0) {
    ad::Var dxr = t.sub(c.xr, x_flat);
    ad::Var dr = t.sqrt_r(t.add(t.mul(dxr, dxr), c.cr));
    ad::Var cosd = t.mul(dxr, t.recip_r(dr));
    ad::Var large = t.scale(t.pow_r(dr, -p.fading_exponent / 2.0),
                            std::sqrt(p.beta0_linear()));
    ad::Var phase = t.mul(c.steer_coeff, t.repeat_rows(cosd, c.L));
    ad::Var los = t.mul(t.exp_j(phase),
                        t.repeat_rows(t.scale(large, c.w_los), c.L));
    if (c.w_nlos > 0.0) {
      ad::Var nl = t.mul(c.nlos, t.repeat_rows(t.scale(large, c.w_nlos), c.L));
      g.h_var = t.add(los, nl);
    } else {
      g.h_var = los;
    }
  }
  return g;
}

// Effective channel rows (B*K) x N for a phase configuration (B x L) or the
// direct paths only when `phases` is invalid.
ad::Var effective_rows(ad::Tape& t, const ChannelConsts& c,
                       const ChannelGraph& g, ad::Var phases) {
  ad::Var rows = g.f_rows;
  if (phases.valid()) {
    ad::Var coeff = t.mul(c.hu_conj, t.repeat_rows(phases, c.K));
    rows = t.add(rows, t.bmm(coeff, g.h_var, c.B));
  }
  return t.bmm(rows, g.g_blocks, c.B);
}

// Per-block column norms: (B*r) x C -> B x C.
ad::Var block_col_norms(ad::Tape& t, ad::Var a, int blocks) {
  return t.sqrt_r(t.clamp_min_r(t.sum_group_rows(t.abs2(a), blocks), 1e-60));
}

ad::Var normalize_block_cols(ad::Tape& t, ad::Var a, int blocks) {
  const int r = a.rows() / blocks;
  ad::Var inv = t.recip_r(block_col_norms(t, a, blocks));
  return t.mul(a, t.repeat_rows(inv, r));
}

// HZM assembly: mixes normalized ZF and matched directions and applies the
// per-user power split. eff is (B*K) x N, alpha/power are B x K.
ad::Var hzm_beams(ad::Tape& t, ad::Var eff, ad::Var alpha, ad::Var power,
                  int B, int K, int N) {
  ad::Var ZH = t.block_hermitian(eff, B);        // (B*N) x K, columns h_k
  ad::Var gram = t.bmm(eff, ZH, B);              // (B*K) x K
  ad::Var ginv = t.block_inverse(gram);
  ad::Var U = t.bmm(ZH, ginv, B);                // (B*N) x K
  ad::Var Un = normalize_block_cols(t, U, B);
  ad::Var Hn = normalize_block_cols(t, ZH, B);
  ad::CMat ones(B, K);
  for (auto& z : ones.d) z = 1.0;
  ad::Var om = t.sub(t.constant(std::move(ones)), alpha);
  ad::Var mix = t.add(t.mul(Un, t.repeat_rows(alpha, N)),
                      t.mul(Hn, t.repeat_rows(om, N)));
  ad::Var dir = normalize_block_cols(t, mix, B);
  return t.mul(dir, t.repeat_rows(t.sqrt_r(power), N));
}

// Closed-form regularized ZF with p_k = lambda_k = P_max/K.
ad::Var rzf_beams(ad::Tape& t, const ChannelConsts& c, ad::Var eff,
                  const SystemParams& p) {
  const int B = c.B, K = c.K, N = c.N;
  ad::Var ZH = t.block_hermitian(eff, B);  // (B*N) x K
  ad::Var outer = t.bmm(ZH, eff, B);       // (B*N) x N
  const double lam = p.power_budget / double(K);
  ad::Var A = t.add(t.scale(outer, lam / p.noise_power), t.constant([&] {
    ad::CMat eye(B * N, N);
    for (int b = 0; b < B; ++b)
      for (int n = 0; n < N; ++n) eye.at(b * N + n, n) = 1.0;
    return eye;
  }()));
  ad::Var dirs = t.bmm(t.block_inverse(A), ZH, B);
  return t.scale(normalize_block_cols(t, dirs, B), std::sqrt(lam));
}

// Rates and losses from effective channels and beams.
struct RateGraph {
  ad::Var rates;      // B x K
  ad::Var sum_rates;  // B x 1
  ad::Var tx_power;   // B x 1
};

RateGraph build_rates(ad::Tape& t, ad::Var eff, ad::Var W, int B, int K,
                      const SystemParams& p) {
  RateGraph rg;
  ad::Var S = t.bmm(eff, W, B);              // (B*K) x K, h_k^H w_j
  ad::Var P = t.abs2(S);
  ad::Var sig = t.take_diag(P);              // B x K
  ad::Var tot = t.reshape(t.sum_rows(P), B, K);
  ad::Var interf = t.sub(tot, sig);
  ad::Var sinr = t.mul(sig, t.recip_r(t.add_scalar(interf, p.noise_power)));
  rg.rates = t.scale(t.log_r(t.add_scalar(sinr, 1.0)), 1.0 / std::log(2.0));
  rg.sum_rates = t.sum_rows(rg.rates);
  rg.tx_power = t.sum_rows(t.sum_group_rows(t.abs2(W), B));
  return rg;
}

ad::Var build_loss(ad::Tape& t, const RateGraph& rg, Objective obj,
                   const SystemParams& p) {
  ad::Var srf = t.clamp_min_r(rg.sum_rates, kRateFloor);
  if (obj == Objective::sum_rate) return t.mean_all(t.recip_r(srf));
  return t.mean_all(t.mul(t.add_scalar(rg.tx_power, p.circuit_power), t.recip_r(srf)));
}

} // namespace

// ---------------------------------------------------------------------------
// full pipeline
// ---------------------------------------------------------------------------

PipelineGraph build_pipeline(ad::Tape& tape, GnnModel& model,
                             const SystemParams& p,
                             const std::vector<const Scenario*>& batch,
                             const PipelineOptions& opt) {
  if (batch.empty()) throw std::invalid_argument("build_pipeline: empty batch");
  const int B = int(batch.size());
  const int K = int(batch[0]->user_positions.rows());
  for (const Scenario* sc : batch)
    if (int(sc->user_positions.rows()) != K)
      throw std::invalid_argument("build_pipeline: ragged user counts");
  if (model.mlp && K != model.mlp_k_train)
    throw std::invalid_argument("mlp: trained for K=" +
                                std::to_string(model.mlp_k_train) +
                                ", got K=" + std::to_string(K));
  if (model.n_waveguides != p.n_waveguides || model.n_pas_per_wg != p.n_pas_per_wg)
    throw std::invalid_argument("build_pipeline: model geometry mismatch");
  const bool use_ris = opt.use_ris && p.n_ris > 0;
  if (use_ris && !model.risgnn && !model.mlp)
    throw std::invalid_argument("build_pipeline: model has no phase stage");
  const bool want_hzm = !opt.rzf_beams;
  if (want_hzm && !model.beamgnn)
    throw std::invalid_argument("build_pipeline: model has no beam stage");
  if (!model.pagnn && opt.fixed_placement == nullptr)
    throw std::invalid_argument("build_pipeline: fixed placement required");

  PipelineGraph g;
  g.batch = B;
  ad::Tape& t = tape;
  std::vector<ad::Var> leaves = register_model(t, model, &g.leaves);

  ChannelConsts cc = make_channel_consts(t, p, batch, use_ris);
  const int NM = cc.N * cc.M;

  // MLP path computes every head from one trunk
  ad::Var mlp_out;
  int mlp_off = 0;
  if (model.mlp) {
    ad::CMat in(B, 3 * K);
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < K; ++k)
        for (int c = 0; c < 3; ++c)
          in.at(b, 3 * k + c) = batch[b]->user_positions(k, c);
    mlp_out = run_stack(t, model, model.mlp_layers, leaves,
                        t.constant(std::move(in)), B, 1, opt.train_mode);
  }

  // stage 1: placement (an explicit fixed placement wins over the stage)
  if (opt.fixed_placement != nullptr) {
    ad::CMat x(B * cc.N, cc.M);
    for (int b = 0; b < B; ++b)
      for (int n = 0; n < cc.N; ++n)
        for (int m = 0; m < cc.M; ++m)
          x.at(b * cc.N + n, m) = opt.fixed_placement->x(n, m);
    g.placement = t.constant(std::move(x));
    if (model.mlp && model.pagnn) mlp_off += NM;
  } else if (model.mlp && model.pagnn) {
    ad::Var raw = t.real(t.slice_cols(mlp_out, mlp_off, NM));
    mlp_off += NM;
    g.placement = spacing_head(t, raw, p, B);
  } else if (model.pagnn) {
    ad::CMat users(B * K, 3);
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < K; ++k)
        for (int c = 0; c < 3; ++c)
          users.at(b * K + k, c) = batch[b]->user_positions(k, c);
    ad::Var V = run_stack(t, model, model.stage1, leaves,
                          t.constant(std::move(users)), B, K, opt.train_mode);
    ad::Var raw = t.mean_group_rows(t.real(V), B);
    g.placement = spacing_head(t, raw, p, B);
  } else {
    throw std::logic_error("build_pipeline: no placement source");
  }
  ad::Var x_flat = t.reshape(g.placement, B, NM);
  ChannelGraph ch = build_channels(t, cc, x_flat, p);

  // stage 2: phases
  if (use_ris) {
    if (model.mlp) {
      ad::Var re = t.real(t.slice_cols(mlp_out, mlp_off, cc.L));
      ad::Var im = t.real(t.slice_cols(mlp_out, mlp_off + cc.L, cc.L));
      mlp_off += 2 * cc.L;
      g.phases = phase_head(t, t.make_complex(re, im));
    } else {
      ad::CMat ones(B, cc.L);
      for (auto& z : ones.d) z = 1.0;
      ad::Var eff2 = effective_rows(t, cc, ch, t.constant(std::move(ones)));
      ad::Var V = run_stack(t, model, model.stage2, leaves, eff2, B, K,
                            opt.train_mode);
      g.phases = phase_head(t, t.mean_group_rows(V, B));
    }
  }

  // stage 3: beams
  g.eff_stage3 = effective_rows(t, cc, ch, g.phases);
  if (opt.rzf_beams) {
    g.beams = rzf_beams(t, cc, g.eff_stage3, p);
  } else if (model.mlp) {
    ad::Var araw = t.real(t.slice_cols(mlp_out, mlp_off, K));
    ad::Var praw = t.real(t.slice_cols(mlp_out, mlp_off + K, K));
    g.alpha = t.sigmoid_r(araw);
    g.power = power_head(t, praw, p);
    g.beams = hzm_beams(t, g.eff_stage3, g.alpha, g.power, B, K, cc.N);
  } else {
    ad::Var va = run_stack(t, model, model.stage3a, leaves, g.eff_stage3, B, K,
                           opt.train_mode);
    ad::Var vp = run_stack(t, model, model.stage3b, leaves, g.eff_stage3, B, K,
                           opt.train_mode);
    g.alpha = t.reshape(t.sigmoid_r(t.real(va)), B, K);
    g.power = power_head(t, t.reshape(t.real(vp), B, K), p);
    g.beams = hzm_beams(t, g.eff_stage3, g.alpha, g.power, B, K, cc.N);
  }

  RateGraph rg = build_rates(t, g.eff_stage3, g.beams, B, K, p);
  g.rates = rg.rates;
  g.sum_rates = rg.sum_rates;
  g.tx_power = rg.tx_power;
  g.loss = build_loss(t, rg, opt.objective, p);
  return g;
}

std::vector<Solution> extract_solutions(const ad::Tape& tape,
                                        const PipelineGraph& g,
                                        const SystemParams& p) {
  const int B = g.batch;
  const int N = p.n_waveguides;
  const int M = p.n_pas_per_wg;
  std::vector<Solution> out(B);
  const ad::CMat& x = tape.val(g.placement);
  const ad::CMat& W = tape.val(g.beams);
  const int K = tape.val(g.rates).cols;
  for (int b = 0; b < B; ++b) {
    Solution& s = out[b];
    s.placement.x.resize(N, M);
    for (int n = 0; n < N; ++n)
      for (int m = 0; m < M; ++m)
        s.placement.x(n, m) = x.at(b * N + n, m).real();
    s.ris.phases = Eigen::VectorXd::Zero(p.n_ris);
    if (g.phases.valid()) {
      const ad::CMat& ph = tape.val(g.phases);
      for (int l = 0; l < p.n_ris; ++l) {
        double a = std::arg(ph.at(b, l));
        if (a < 0.0) a += 2.0 * M_PI;
        if (a >= 2.0 * M_PI) a = 0.0;
        s.ris.phases(l) = a;
      }
    }
    s.beam.W.resize(N, K);
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k) s.beam.W(n, k) = W.at(b * N + n, k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// plain single-instance wrappers
// ---------------------------------------------------------------------------

namespace {

Solution forward_one(const GnnModel& model, const Scenario& sc,
                     const SystemParams& p, bool use_ris) {
  GnnModel& m = const_cast<GnnModel&>(model);  // eval mode never mutates
  ad::Tape tape;
  PipelineOptions opt;
  opt.use_ris = use_ris;
  opt.train_mode = false;
  opt.rzf_beams = !model.beamgnn;
  PAPlacement fixed;
  if (!model.pagnn) {
    fixed = fixed_pa_placement(p);
    opt.fixed_placement = &fixed;
  }
  PipelineGraph g = build_pipeline(tape, m, p, {&sc}, opt);
  return extract_solutions(tape, g, p)[0];
}

} // namespace

Solution full_forward(const GnnModel& m, const Scenario& sc,
                      const SystemParams& p, bool use_ris) {
  if (m.mlp) throw std::invalid_argument("full_forward: got an MLP model");
  return forward_one(m, sc, p, use_ris);
}

Solution mlp_forward(const GnnModel& m, const Scenario& sc,
                     const SystemParams& p, bool use_ris) {
  if (!m.mlp) throw std::invalid_argument("mlp_forward: not an MLP model");
  return forward_one(m, sc, p, use_ris);
}

Eigen::MatrixXcd cgcl_forward(const GnnModel& m, const LayerParams& lp,
                              const Eigen::MatrixXcd& V) {
  GnnModel& mm = const_cast<GnnModel&>(m);
  ad::Tape t;
  std::vector<ad::Var> leaves = register_model(t, m, nullptr);
  ad::Var out = layer_apply(t, mm, lp, leaves, t.constant(from_eigen(V)), 1,
                            int(V.rows()), false);
  return to_eigen(t.val(out));
}

Eigen::MatrixXcd cgal_forward(const GnnModel& m, const LayerParams& lp,
                              const Eigen::MatrixXcd& V) {
  return cgcl_forward(m, lp, V);  // dispatch happens on the layer spec
}

Eigen::MatrixXcd cfl_forward(const GnnModel& m, const LayerParams& lp,
                             const Eigen::MatrixXcd& V) {
  return cgcl_forward(m, lp, V);
}

PAPlacement pagnn_forward(const GnnModel& m, const Eigen::MatrixXd& users,
                          const SystemParams& p) {
  if (!m.pagnn) throw std::invalid_argument("pagnn_forward: stage absent");
  GnnModel& mm = const_cast<GnnModel&>(m);
  ad::Tape t;
  std::vector<ad::Var> leaves = register_model(t, m, nullptr);
  ad::Var V = run_stack(t, mm, mm.stage1, leaves,
                        t.constant(from_eigen_real(users)), 1,
                        int(users.rows()), false);
  ad::Var raw = t.mean_group_rows(t.real(V), 1);
  ad::Var pos = spacing_head(t, raw, p, 1);
  PAPlacement pl;
  pl.x = to_eigen_real(t.val(pos));
  return pl;
}

RISConfig risgnn_forward(const GnnModel& m, const Eigen::MatrixXcd& eff_initial,
                         const SystemParams& p) {
  (void)p;
  if (!m.risgnn) throw std::invalid_argument("risgnn_forward: stage absent");
  GnnModel& mm = const_cast<GnnModel&>(m);
  ad::Tape t;
  std::vector<ad::Var> leaves = register_model(t, m, nullptr);
  ad::Var V = run_stack(t, mm, mm.stage2, leaves,
                        t.constant(from_eigen(eff_initial)), 1,
                        int(eff_initial.rows()), false);
  ad::Var unit = phase_head(t, t.mean_group_rows(V, 1));
  const ad::CMat& u = t.val(unit);
  Eigen::VectorXcd raw(u.cols);
  for (int l = 0; l < u.cols; ++l) raw(l) = u.at(0, l);
  return normalize_phase(raw);
}

HzmParams beamgnn_forward(const GnnModel& m, const Eigen::MatrixXcd& eff,
                          const SystemParams& p) {
  if (!m.beamgnn) throw std::invalid_argument("beamgnn_forward: stage absent");
  GnnModel& mm = const_cast<GnnModel&>(m);
  ad::Tape t;
  std::vector<ad::Var> leaves = register_model(t, m, nullptr);
  const int K = int(eff.rows());
  ad::Var in = t.constant(from_eigen(eff));
  ad::Var va = run_stack(t, mm, mm.stage3a, leaves, in, 1, K, false);
  ad::Var vp = run_stack(t, mm, mm.stage3b, leaves, in, 1, K, false);
  ad::Var alpha = t.reshape(t.sigmoid_r(t.real(va)), 1, K);
  ad::Var power = power_head(t, t.reshape(t.real(vp), 1, K), p);
  HzmParams hp;
  hp.alpha = to_eigen_real(t.val(alpha)).row(0);
  hp.power = to_eigen_real(t.val(power)).row(0);
  return hp;
}

} // namespace paris
