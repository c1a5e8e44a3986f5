#include "paris/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "paris/feasible.hpp"
#include "paris/parallel.hpp"

namespace paris {

std::string to_string(SystemConfig c) {
  switch (c) {
    case SystemConfig::ris_pa: return "ris_pa";
    case SystemConfig::pa_only: return "pa_only";
    case SystemConfig::fixed_pa_only: return "fixed_pa_only";
  }
  return "?";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::strategy_i: return "strategy_i";
    case Method::strategy_ii: return "strategy_ii";
    case Method::strategy_iii: return "strategy_iii";
    case Method::mlp: return "mlp";
    case Method::refine_only: return "refine_only";
  }
  return "?";
}

bool check_feasible(const Solution& s, const SystemParams& p, double tol) {
  const Eigen::MatrixXd& x = s.placement.x;
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    for (Eigen::Index m = 0; m < x.cols(); ++m) {
      if (x(n, m) < -tol || x(n, m) > p.region_length + tol) return false;
      if (m > 0 && x(n, m) - x(n, m - 1) < p.min_spacing - tol) return false;
    }
  }
  if (s.beam.total_power() > p.power_budget + tol) return false;
  for (Eigen::Index l = 0; l < s.ris.phases.size(); ++l) {
    const double ph = s.ris.phases(l);
    if (ph < -tol || ph >= 2.0 * M_PI + tol) return false;
  }
  return true;
}

Solution strategy_i(const GnnModel& model, const Scenario& sc,
                    const SystemParams& p, bool use_ris) {
  return model.mlp ? mlp_forward(model, sc, p, use_ris)
                   : full_forward(model, sc, p, use_ris);
}

namespace {

Eigen::MatrixXcd effective_for(const Solution& s, const Scenario& sc,
                               const SystemParams& p, bool use_ris) {
  if (!use_ris) return effective_channels_pa_only(s.placement, sc, p);
  return effective_channels(s.placement, s.ris, sc, p);
}

} // namespace

Solution strategy_ii(const GnnModel& model, const Scenario& sc,
                     const SystemParams& p, bool use_ris, Objective obj,
                     int budget) {
  Solution s = strategy_i(model, sc, p, use_ris);
  if (budget <= 0) return s;
  const Eigen::MatrixXcd eff = effective_for(s, sc, p, use_ris);
  s.beam = refine_beams(eff, p, obj, s.beam, budget).beams;
  return s;
}

Solution strategy_iii(const GnnModel& two_stage, const Scenario& sc,
                      const SystemParams& p, bool use_ris, Objective obj,
                      int budget) {
  // the two-stage model already emits closed-form regularized ZF beams
  Solution s = full_forward(two_stage, sc, p, use_ris);
  if (budget <= 0) return s;
  const Eigen::MatrixXcd eff = effective_for(s, sc, p, use_ris);
  s.beam = refine_beams(eff, p, obj, s.beam, budget).beams;
  return s;
}

Solution random_solution(const Scenario& sc, const SystemParams& p, Rng& rng) {
  Solution s;
  Eigen::MatrixXd raw(p.n_waveguides, p.n_pas_per_wg);
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    raw.data()[i] = rng.normal();
  s.placement = spacing_to_positions(raw_to_spacing(raw, p), p);
  s.ris.phases.resize(p.n_ris);
  for (int l = 0; l < p.n_ris; ++l)
    s.ris.phases(l) = rng.uniform(0.0, 2.0 * M_PI);
  const int K = int(sc.user_positions.rows());
  s.beam.W.resize(p.n_waveguides, K);
  for (Eigen::Index i = 0; i < s.beam.W.size(); ++i)
    s.beam.W.data()[i] = rng.cscg();
  s.beam.W *= std::sqrt(p.power_budget / s.beam.W.squaredNorm());
  return s;
}

void StrategyReport::finalize() {
  mean_sr = mean_ee = mean_time_ms = median_time_ms = 0.0;
  if (samples.empty()) return;
  std::vector<double> times;
  for (const SampleMetrics& s : samples) {
    mean_sr += s.sr;
    mean_ee += s.ee;
    mean_time_ms += s.time_ms;
    times.push_back(s.time_ms);
  }
  const double n = double(samples.size());
  mean_sr /= n;
  mean_ee /= n;
  mean_time_ms /= n;
  std::sort(times.begin(), times.end());
  median_time_ms = times[times.size() / 2];
}

StrategyReport baseline_eval(SystemConfig config, Method method,
                             const std::vector<Scenario>& scenarios,
                             const SystemParams& p, const GnnModel* model,
                             Objective obj, int budget) {
  const bool use_ris = config_uses_ris(config);
  const bool needs_model = method != Method::refine_only;
  if (needs_model && model == nullptr)
    throw std::invalid_argument("baseline_eval: method requires a trained model");

  StrategyReport rep;
  rep.system_config = to_string(config);
  rep.method = to_string(method);
  rep.samples.resize(scenarios.size());

  const PAPlacement fixed = fixed_pa_placement(p);
  const int n = int(scenarios.size());
#pragma omp parallel for if (par::on() && n > 1) schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const Scenario& sc = scenarios[i];
    const auto t0 = std::chrono::steady_clock::now();
    Solution s;
    switch (method) {
      case Method::strategy_i:
        s = strategy_i(*model, sc, p, use_ris);
        break;
      case Method::strategy_ii:
        s = strategy_ii(*model, sc, p, use_ris, obj, budget);
        break;
      case Method::strategy_iii:
        s = strategy_iii(*model, sc, p, use_ris, obj, budget);
        break;
      case Method::mlp:
        s = mlp_forward(*model, sc, p, use_ris);
        break;
      case Method::refine_only: {
        s.placement = fixed;
        s.ris.phases = Eigen::VectorXd::Zero(p.n_ris);
        const Eigen::MatrixXcd eff = effective_for(s, sc, p, use_ris);
        s.beam = refine_beams(eff, p, obj, rzf_closed_form(eff, p), budget).beams;
        break;
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    SampleMetrics& sm = rep.samples[i];
    sm.sample_id = i;
    sm.time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    sm.sr = use_ris ? sum_rate(s, sc, p)
                    : sum_rate(effective_channels_pa_only(s.placement, sc, p),
                               s.beam, p);
    sm.ee = sm.sr / (s.beam.total_power() + p.circuit_power);
    sm.feasible = check_feasible(s, p);
  }
  rep.finalize();
  return rep;
}

void save_report_csv(const StrategyReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "sample_id,SR,EE,time_ms,feasible\n";
  out.precision(17);
  for (const SampleMetrics& s : r.samples)
    out << s.sample_id << ',' << s.sr << ',' << s.ee << ',' << s.time_ms << ','
        << (s.feasible ? 1 : 0) << '\n';
  out << "# system=" << r.system_config << " method=" << r.method
      << " mean_SR=" << r.mean_sr << " mean_EE=" << r.mean_ee
      << " mean_time_ms=" << r.mean_time_ms
      << " median_time_ms=" << r.median_time_ms << '\n';
}

// ---------------------------------------------------------------------------
// exhaustive reference search
// ---------------------------------------------------------------------------

namespace {

// Enumerates per-waveguide position tuples on the grid honoring the spacing
// constraint, then takes the cross product across waveguides.
void waveguide_tuples(int M, const std::vector<double>& grid, double min_gap,
                      std::vector<double>& cur, std::vector<std::vector<double>>& out) {
  if (int(cur.size()) == M) {
    out.push_back(cur);
    return;
  }
  for (double x : grid) {
    if (!cur.empty() && x - cur.back() < min_gap) continue;
    cur.push_back(x);
    waveguide_tuples(M, grid, min_gap, cur, out);
    cur.pop_back();
  }
}

} // namespace

OracleResult grid_oracle(const Scenario& sc, const SystemParams& p,
                         const OracleSpec& spec) {
  const int K = int(sc.user_positions.rows());
  if (K != 1)
    throw std::invalid_argument("grid_oracle: single-user instances only");
  const int N = p.n_waveguides;
  const int M = p.n_pas_per_wg;

  std::vector<double> grid(spec.pos_grid);
  for (int i = 0; i < spec.pos_grid; ++i)
    grid[i] = p.region_length * double(i) / double(spec.pos_grid - 1);

  std::vector<std::vector<double>> tuples;
  std::vector<double> cur;
  waveguide_tuples(M, grid, p.min_spacing, cur, tuples);

  const double per_wg = double(tuples.size());
  const double n_pos = std::pow(per_wg, N);
  const double n_phase = std::pow(double(spec.phase_levels), double(p.n_ris));
  const double total = n_pos * n_phase;
  if (total > spec.max_evals)
    throw OracleBudgetError(
        "grid_oracle: " + std::to_string(total) +
            " evaluations exceed the budget of " + std::to_string(spec.max_evals),
        total);

  const std::int64_t pos_combos = std::int64_t(n_pos);
  const std::int64_t phase_combos = std::int64_t(n_phase);
  std::vector<double> best_sr(pos_combos, -1.0);
  std::vector<std::int64_t> best_phase(pos_combos, 0);

#pragma omp parallel for if (par::on() && pos_combos > 1) schedule(dynamic)
  for (std::int64_t pc = 0; pc < pos_combos; ++pc) {
    PAPlacement pl;
    pl.x.resize(N, M);
    std::int64_t rem = pc;
    for (int nw = 0; nw < N; ++nw) {
      const auto& tup = tuples[rem % std::int64_t(tuples.size())];
      rem /= std::int64_t(tuples.size());
      for (int m = 0; m < M; ++m) pl.x(nw, m) = tup[m];
    }
    RISConfig ris;
    ris.phases.resize(p.n_ris);
    for (std::int64_t ph = 0; ph < phase_combos; ++ph) {
      std::int64_t r = ph;
      for (int l = 0; l < p.n_ris; ++l) {
        ris.phases(l) =
            2.0 * M_PI * double(r % spec.phase_levels) / double(spec.phase_levels);
        r /= spec.phase_levels;
      }
      const Eigen::MatrixXcd eff = effective_channels(pl, ris, sc, p);
      // full-power matched beam is rate-optimal for one user
      const Eigen::VectorXcd h = eff.row(0).adjoint();
      const double gain = h.squaredNorm();
      const double sr = std::log2(1.0 + p.power_budget * gain / p.noise_power);
      if (sr > best_sr[pc]) {
        best_sr[pc] = sr;
        best_phase[pc] = ph;
      }
    }
  }

  std::int64_t arg = 0;
  for (std::int64_t pc = 1; pc < pos_combos; ++pc)
    if (best_sr[pc] > best_sr[arg]) arg = pc;

  OracleResult res;
  res.evals = total;
  res.sr = best_sr[arg];
  res.sol.placement.x.resize(N, M);
  std::int64_t rem = arg;
  for (int nw = 0; nw < N; ++nw) {
    const auto& tup = tuples[rem % std::int64_t(tuples.size())];
    rem /= std::int64_t(tuples.size());
    for (int m = 0; m < M; ++m) res.sol.placement.x(nw, m) = tup[m];
  }
  res.sol.ris.phases.resize(p.n_ris);
  std::int64_t r = best_phase[arg];
  for (int l = 0; l < p.n_ris; ++l) {
    res.sol.ris.phases(l) =
        2.0 * M_PI * double(r % spec.phase_levels) / double(spec.phase_levels);
    r /= spec.phase_levels;
  }
  const Eigen::MatrixXcd eff =
      effective_channels(res.sol.placement, res.sol.ris, sc, p);
  const Eigen::VectorXcd h = eff.row(0).adjoint();
  res.sol.beam.W = std::sqrt(p.power_budget) * (h / h.norm());
  return res;
}

} // namespace paris
