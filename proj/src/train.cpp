#include "paris/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "paris/rng.hpp"

namespace paris {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
} // namespace

void adam_step(GnnModel& model, const std::vector<ad::CMat>& grads,
               AdamState& state, double lr) {
  const std::vector<int> ids = model.trainable_ids();
  if (grads.size() != ids.size())
    throw std::invalid_argument("adam_step: gradient count mismatch");
  if (state.m.empty()) {
    for (int id : ids) {
      const ad::CMat& v = model.tensors[id].value;
      state.m.push_back(ad::CMat::zeros(v.rows, v.cols));
      state.v.push_back(ad::CMat::zeros(v.rows, v.cols));
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, double(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, double(state.step));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ParamTensor& t = model.tensors[ids[i]];
    const ad::CMat& g = grads[i];
    if (!g.same_shape(t.value)) throw std::invalid_argument("adam_step: shape mismatch");
    ad::CMat& m = state.m[i];
    ad::CMat& v = state.v[i];
    for (std::size_t e = 0; e < t.value.size(); ++e) {
      double gre = g.d[e].real();
      double gim = t.real_only ? 0.0 : g.d[e].imag();
      if (!std::isfinite(gre) || !std::isfinite(gim))
        throw std::runtime_error("adam_step: non-finite gradient in " + t.name);
      const double mre = kBeta1 * m.d[e].real() + (1.0 - kBeta1) * gre;
      const double mim = kBeta1 * m.d[e].imag() + (1.0 - kBeta1) * gim;
      const double vre = kBeta2 * v.d[e].real() + (1.0 - kBeta2) * gre * gre;
      const double vim = kBeta2 * v.d[e].imag() + (1.0 - kBeta2) * gim * gim;
      m.d[e] = ad::cplx(mre, mim);
      v.d[e] = ad::cplx(vre, vim);
      const double dre = lr * (mre / bc1) / (std::sqrt(vre / bc2) + kAdamEps);
      const double dim = lr * (mim / bc1) / (std::sqrt(vim / bc2) + kAdamEps);
      t.value.d[e] -= ad::cplx(dre, t.real_only ? 0.0 : dim);
    }
  }
}

SplitView split_dataset(const Dataset& d, const TrainConfig& cfg) {
  const int n = int(d.scenarios.size());
  const int n_train = int(std::floor(cfg.train_frac * n));
  const int n_val = int(std::floor(cfg.val_frac * n));
  SplitView s;
  for (int i = 0; i < n; ++i) {
    const Scenario* sc = &d.scenarios[i];
    if (i < n_train)
      s.train.push_back(sc);
    else if (i < n_train + n_val)
      s.val.push_back(sc);
    else
      s.test.push_back(sc);
  }
  return s;
}

EvalStats evaluate_model(GnnModel& model, const SystemParams& p,
                         const std::vector<const Scenario*>& scenarios,
                         bool use_ris, bool rzf_beams, int batch_size) {
  EvalStats st;
  if (scenarios.empty()) return st;
  PAPlacement fixed;
  PipelineOptions opt;
  opt.use_ris = use_ris;
  opt.train_mode = false;
  opt.rzf_beams = rzf_beams || !model.beamgnn;
  if (!model.pagnn) {
    fixed = fixed_pa_placement(p);
    opt.fixed_placement = &fixed;
  }
  std::vector<double> srs, pws;
  for (std::size_t at = 0; at < scenarios.size(); at += batch_size) {
    const std::size_t hi = std::min(scenarios.size(), at + batch_size);
    std::vector<const Scenario*> chunk(scenarios.begin() + at, scenarios.begin() + hi);
    ad::Tape tape;
    PipelineGraph g = build_pipeline(tape, model, p, chunk, opt);
    const ad::CMat& sr = tape.val(g.sum_rates);
    const ad::CMat& pw = tape.val(g.tx_power);
    for (int b = 0; b < int(chunk.size()); ++b) {
      srs.push_back(sr.at(b, 0).real());
      pws.push_back(pw.at(b, 0).real());
    }
  }
  double acc_sr = 0.0, acc_ee = 0.0;
  for (std::size_t i = 0; i < srs.size(); ++i) {
    acc_sr += srs[i];
    acc_ee += srs[i] / (pws[i] + p.circuit_power);
  }
  st.mean_sr = acc_sr / double(srs.size());
  st.mean_ee = acc_ee / double(srs.size());
  st.loss_sr = loss_sr(srs);
  st.loss_ee = loss_ee(srs, pws, p.circuit_power);
  return st;
}

namespace {

std::vector<ad::CMat> snapshot(const GnnModel& m) {
  std::vector<ad::CMat> vals;
  vals.reserve(m.tensors.size());
  for (const ParamTensor& t : m.tensors) vals.push_back(t.value);
  return vals;
}

void restore(GnnModel& m, const std::vector<ad::CMat>& vals) {
  for (std::size_t i = 0; i < vals.size(); ++i) m.tensors[i].value = vals[i];
}

double grad_global_norm(const std::vector<ad::CMat>& grads, const GnnModel& m) {
  const std::vector<int> ids = m.trainable_ids();
  double acc = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const bool real_only = m.tensors[ids[i]].real_only;
    for (const ad::cplx& z : grads[i].d) {
      acc += z.real() * z.real();
      if (!real_only) acc += z.imag() * z.imag();
    }
  }
  return std::sqrt(acc);
}

} // namespace

TrainResult train(GnnModel& model, const Dataset& data, const TrainConfig& cfg) {
  TrainResult res;
  if (data.scenarios.empty()) throw std::invalid_argument("train: empty dataset");
  const SystemParams& p = data.params;
  SplitView split = split_dataset(data, cfg);
  if (split.train.empty()) throw std::invalid_argument("train: empty train split");

  PAPlacement fixed;
  PipelineOptions opt;
  opt.objective = cfg.objective;
  opt.use_ris = cfg.use_ris;
  opt.train_mode = true;
  opt.rzf_beams = cfg.rzf_beams || !model.beamgnn;
  if (!model.pagnn) {
    fixed = fixed_pa_placement(p);
    opt.fixed_placement = &fixed;
  }

  AdamState adam;
  std::vector<ad::CMat> best = snapshot(model);
  res.best_val_loss = std::numeric_limits<double>::infinity();
  res.best_epoch = 0;
  int since_best = 0;

  std::vector<int> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    int decays = 0;
    for (int mstone : cfg.milestones)
      if (mstone < epoch) ++decays;
    const double lr = cfg.lr * std::pow(cfg.lr_decay, double(decays));

    // seeded in-place shuffle, independent of history
    Rng shuffle_rng(mix_seed(cfg.seed, 0xe90c0 + std::uint64_t(epoch)));
    for (int i = int(order.size()) - 1; i > 0; --i) {
      const int j = int(shuffle_rng.next_u64() % std::uint64_t(i + 1));
      std::swap(order[i], order[std::size_t(j)]);
    }

    double loss_acc = 0.0;
    int batches = 0;
    try {
      for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
        const std::size_t hi = std::min(order.size(), at + cfg.batch_size);
        std::vector<const Scenario*> chunk;
        chunk.reserve(hi - at);
        for (std::size_t i = at; i < hi; ++i) chunk.push_back(split.train[order[i]]);
        ad::Tape tape;
        PipelineGraph g = build_pipeline(tape, model, p, chunk, opt);
        const double loss = tape.val(g.loss).at(0, 0).real();
        if (!std::isfinite(loss)) throw std::runtime_error("train: loss diverged");
        loss_acc += loss;
        ++batches;
        tape.backward(g.loss);
        std::vector<ad::CMat> grads;
        grads.reserve(g.leaves.size());
        for (ad::Var leaf : g.leaves) grads.push_back(tape.grad(leaf));
        const double gn = grad_global_norm(grads, model);
        if (cfg.clip_norm > 0.0 && gn > cfg.clip_norm) {
          const double f = cfg.clip_norm / gn;
          for (ad::CMat& gm : grads)
            for (ad::cplx& z : gm.d) z *= f;
        }
        adam_step(model, grads, adam, lr);
      }
    } catch (const std::runtime_error& e) {
      restore(model, best);
      res.aborted = true;
      res.abort_reason = e.what();
      return res;
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = batches > 0 ? loss_acc / double(batches) : 0.0;
    st.lr = lr;
    if (!split.val.empty()) {
      const EvalStats ev = evaluate_model(model, p, split.val, cfg.use_ris,
                                          opt.rzf_beams, cfg.batch_size);
      st.val_loss = cfg.objective == Objective::sum_rate ? ev.loss_sr : ev.loss_ee;
      st.val_sr = ev.mean_sr;
      st.val_ee = ev.mean_ee;
    }
    res.history.push_back(st);

    if (split.val.empty() || st.val_loss < res.best_val_loss) {
      res.best_val_loss = st.val_loss;
      res.best_epoch = epoch;
      best = snapshot(model);
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }

  restore(model, best);
  return res;
}

void save_history_csv(const std::vector<EpochStats>& history,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "epoch,train_loss,val_loss,val_SR,val_EE,lr\n";
  out.precision(17);
  for (const EpochStats& s : history)
    out << s.epoch << ',' << s.train_loss << ',' << s.val_loss << ',' << s.val_sr
        << ',' << s.val_ee << ',' << s.lr << '\n';
}

} // namespace paris
