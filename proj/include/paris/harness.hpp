#pragma once

#include <string>
#include <vector>

#include "paris/beamform.hpp"
#include "paris/gnn.hpp"
#include "paris/objective.hpp"
#include "paris/rng.hpp"

namespace paris {

enum class SystemConfig { ris_pa, pa_only, fixed_pa_only };
enum class Method { strategy_i, strategy_ii, strategy_iii, mlp, refine_only };

std::string to_string(SystemConfig c);
std::string to_string(Method m);

inline bool config_uses_ris(SystemConfig c) { return c == SystemConfig::ris_pa; }

/// Re-checks the raw constraint set: positions in range and ordered with the
/// minimum gap, power within budget (slack down to -tol watts), phases in
/// [0, 2*pi). Independent of how the solution was built.
bool check_feasible(const Solution& s, const SystemParams& p, double tol = 1e-9);

Solution strategy_i(const GnnModel& model, const Scenario& sc,
                    const SystemParams& p, bool use_ris);
Solution strategy_ii(const GnnModel& model, const Scenario& sc,
                     const SystemParams& p, bool use_ris, Objective obj,
                     int budget);
Solution strategy_iii(const GnnModel& two_stage, const Scenario& sc,
                      const SystemParams& p, bool use_ris, Objective obj,
                      int budget);

/// Uniformly random feasible solution (reference floor for learned models).
Solution random_solution(const Scenario& sc, const SystemParams& p, Rng& rng);

struct SampleMetrics {
  int sample_id = 0;
  double sr = 0.0;
  double ee = 0.0;
  double time_ms = 0.0;
  bool feasible = false;
};

struct StrategyReport {
  std::string system_config;
  std::string method;
  std::vector<SampleMetrics> samples;
  double mean_sr = 0.0;
  double mean_ee = 0.0;
  double mean_time_ms = 0.0;
  double median_time_ms = 0.0;
  void finalize();
};

/// Evaluates one method on one system configuration over a scenario list.
/// `model` may be null for refine_only. Learned placement/phases come from
/// the model stages; the fixed configuration pins the PA lattice.
StrategyReport baseline_eval(SystemConfig config, Method method,
                             const std::vector<Scenario>& scenarios,
                             const SystemParams& p, const GnnModel* model,
                             Objective obj, int budget);

void save_report_csv(const StrategyReport& r, const std::string& path);

struct OracleSpec {
  int pos_grid = 41;       // positions per PA along the waveguide
  int phase_levels = 8;    // quantization levels per surface element
  double max_evals = 2e7;  // refusal threshold for the exhaustive search
};

struct OracleResult {
  Solution sol;
  double sr = 0.0;
  double evals = 0.0;
};

class OracleBudgetError : public std::runtime_error {
 public:
  OracleBudgetError(const std::string& msg, double estimate)
      : std::runtime_error(msg), estimate(estimate) {}
  double estimate;
};

/// Exhaustive search over quantized positions and phases with a full-power
/// matched beam; single-user instances only. Throws OracleBudgetError when
/// the grid would exceed max_evals.
OracleResult grid_oracle(const Scenario& sc, const SystemParams& p,
                         const OracleSpec& spec);

} // namespace paris
