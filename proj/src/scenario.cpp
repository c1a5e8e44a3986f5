#include "paris/scenario.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "paris/rng.hpp"

namespace paris {

using json = nlohmann::ordered_json;

double SystemParams::eta() const {
  const double v = kSpeedOfLight / (4.0 * M_PI * carrier_freq);
  return v * v;
}

void SystemParams::finalize() {
  if (n_waveguides < 1 || n_pas_per_wg < 1 || n_users < 1 || n_ris < 0)
    throw std::invalid_argument("params: dimensions must be positive");
  if (n_users > n_waveguides)
    throw std::invalid_argument("params: more users than waveguides");
  if (!(min_spacing > 0.0))
    throw std::invalid_argument("params: min_spacing must be positive");
  if ((n_pas_per_wg - 1) * min_spacing > region_length)
    throw std::invalid_argument("params: PAs do not fit on the waveguide");
  if (!(power_budget > 0.0) || !(noise_power > 0.0) || !(circuit_power > 0.0))
    throw std::invalid_argument("params: powers must be positive");
  if (!(carrier_freq > 0.0) || !(refractive_index > 0.0))
    throw std::invalid_argument("params: bad carrier configuration");
  kappa_lin_ = std::pow(10.0, rician_factor_db / 10.0);
  beta0_lin_ = std::pow(10.0, ref_gain_db / 10.0);
}

SystemParams SystemParams::table_defaults() {
  SystemParams p;
  p.n_waveguides = 8;
  p.n_pas_per_wg = 8;
  p.n_users = 4;
  p.n_ris = 32;
  p.region_length = 10.0;
  p.region_width = 10.0;
  p.ris_position = {5.0, 0.0, 2.5};
  p.finalize();
  return p;
}

SystemParams SystemParams::desk_defaults() {
  SystemParams p;  // struct defaults are the desk-scale set
  p.finalize();
  return p;
}

double waveguide_y(int n, const SystemParams& p) {
  const int N = p.n_waveguides;
  if (n < 1 || n > N) throw std::out_of_range("waveguide_y: index out of range");
  const double S = p.region_width;
  return (n - 1) * S / N - (N - 1) * S / (2.0 * N);
}

Eigen::VectorXd waveguide_ys(const SystemParams& p) {
  Eigen::VectorXd y(p.n_waveguides);
  for (int n = 1; n <= p.n_waveguides; ++n) y(n - 1) = waveguide_y(n, p);
  return y;
}

std::array<double, 3> default_ris_position(const SystemParams& p) {
  return {p.region_length / 2.0, 0.0, p.height / 2.0};
}

Scenario sample_scenario(const SystemParams& p, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5ce0ULL));
  Scenario s;
  s.rng_seed = seed;
  s.user_positions.resize(p.n_users, 3);
  for (int k = 0; k < p.n_users; ++k) {
    s.user_positions(k, 0) = rng.uniform(0.0, p.region_length);
    s.user_positions(k, 1) = rng.uniform(-p.region_width / 2.0, p.region_width / 2.0);
    s.user_positions(k, 2) = 0.0;
  }
  const int nm = p.n_waveguides * p.n_pas_per_wg;
  s.nlos_pa_ris.resize(p.n_ris, nm);
  for (int c = 0; c < nm; ++c)
    for (int l = 0; l < p.n_ris; ++l) s.nlos_pa_ris(l, c) = rng.cscg();
  s.nlos_ris_user.resize(p.n_ris, p.n_users);
  for (int k = 0; k < p.n_users; ++k)
    for (int l = 0; l < p.n_ris; ++l) s.nlos_ris_user(l, k) = rng.cscg();
  return s;
}

PAPlacement fixed_pa_placement(const SystemParams& p) {
  const int M = p.n_pas_per_wg;
  if ((M - 1) * p.min_spacing > p.region_length)
    throw std::invalid_argument("fixed_pa_placement: spacing infeasible");
  PAPlacement pl;
  pl.x.resize(p.n_waveguides, M);
  const double center = p.region_length / 2.0;
  for (int m = 0; m < M; ++m) {
    const double x = center + (m - (M - 1) / 2.0) * p.min_spacing;
    for (int n = 0; n < p.n_waveguides; ++n) pl.x(n, m) = x;
  }
  return pl;
}

// --- serialization ---------------------------------------------------------

namespace {

json cvec_to_json(const Eigen::MatrixXcd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXcd cvec_from_json(const json& rows) {
  const auto r = rows.size();
  const auto c = r == 0 ? 0 : rows[0].size();
  Eigen::MatrixXcd m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      m(i, j) = std::complex<double>(rows[i][j][0].get<double>(),
                                     rows[i][j][1].get<double>());
  return m;
}

json params_to_json_obj(const SystemParams& p) {
  return json{{"n_waveguides", p.n_waveguides},
              {"n_pas_per_wg", p.n_pas_per_wg},
              {"n_users", p.n_users},
              {"n_ris", p.n_ris},
              {"region_length", p.region_length},
              {"region_width", p.region_width},
              {"height", p.height},
              {"min_spacing", p.min_spacing},
              {"power_budget", p.power_budget},
              {"circuit_power", p.circuit_power},
              {"noise_power", p.noise_power},
              {"carrier_freq", p.carrier_freq},
              {"refractive_index", p.refractive_index},
              {"rician_factor_db", p.rician_factor_db},
              {"los_only", p.los_only},
              {"fading_exponent", p.fading_exponent},
              {"ref_gain_db", p.ref_gain_db},
              {"element_sep", p.element_sep},
              {"ris_position", p.ris_position}};
}

SystemParams params_from_json_obj(const json& j) {
  SystemParams p;
  p.n_waveguides = j.at("n_waveguides").get<int>();
  p.n_pas_per_wg = j.at("n_pas_per_wg").get<int>();
  p.n_users = j.at("n_users").get<int>();
  p.n_ris = j.at("n_ris").get<int>();
  p.region_length = j.at("region_length").get<double>();
  p.region_width = j.at("region_width").get<double>();
  p.height = j.at("height").get<double>();
  p.min_spacing = j.at("min_spacing").get<double>();
  p.power_budget = j.at("power_budget").get<double>();
  p.circuit_power = j.at("circuit_power").get<double>();
  p.noise_power = j.at("noise_power").get<double>();
  p.carrier_freq = j.at("carrier_freq").get<double>();
  p.refractive_index = j.at("refractive_index").get<double>();
  p.rician_factor_db = j.at("rician_factor_db").get<double>();
  p.los_only = j.value("los_only", false);
  p.fading_exponent = j.at("fading_exponent").get<double>();
  p.ref_gain_db = j.at("ref_gain_db").get<double>();
  p.element_sep = j.at("element_sep").get<double>();
  const auto& r = j.at("ris_position");
  p.ris_position = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
  p.finalize();
  return p;
}

json scenario_to_json_obj(const Scenario& s) {
  json users = json::array();
  for (Eigen::Index k = 0; k < s.user_positions.rows(); ++k)
    users.push_back({s.user_positions(k, 0), s.user_positions(k, 1),
                     s.user_positions(k, 2)});
  return json{{"seed", s.rng_seed},
              {"users", std::move(users)},
              {"nlos_pa_ris", cvec_to_json(s.nlos_pa_ris)},
              {"nlos_ris_user", cvec_to_json(s.nlos_ris_user)}};
}

Scenario scenario_from_json_obj(const json& j) {
  Scenario s;
  s.rng_seed = j.at("seed").get<std::uint64_t>();
  const auto& users = j.at("users");
  s.user_positions.resize(users.size(), 3);
  for (std::size_t k = 0; k < users.size(); ++k)
    for (int c = 0; c < 3; ++c)
      s.user_positions(Eigen::Index(k), c) = users[k][c].get<double>();
  s.nlos_pa_ris = cvec_from_json(j.at("nlos_pa_ris"));
  s.nlos_ris_user = cvec_from_json(j.at("nlos_ris_user"));
  return s;
}

} // namespace

std::string params_to_json(const SystemParams& p) {
  json j{{"format", "paris-params"}, {"version", 1}, {"params", params_to_json_obj(p)}};
  return j.dump();
}

SystemParams params_from_json(const std::string& text) {
  const json j = json::parse(text);
  return params_from_json_obj(j.contains("params") ? j.at("params") : j);
}

std::string scenario_to_json(const Scenario& s) {
  json j{{"format", "paris-scenario"}, {"version", 1},
         {"scenario", scenario_to_json_obj(s)}};
  return j.dump();
}

Scenario scenario_from_json(const std::string& text) {
  const json j = json::parse(text);
  return scenario_from_json_obj(j.contains("scenario") ? j.at("scenario") : j);
}

Dataset make_dataset(const SystemParams& p, int count, std::uint64_t seed) {
  Dataset d;
  d.params = p;
  d.seed = seed;
  d.scenarios.reserve(count);
  for (int i = 0; i < count; ++i)
    d.scenarios.push_back(sample_scenario(p, mix_seed(seed, std::uint64_t(i) + 1)));
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  json scenarios = json::array();
  for (const Scenario& s : d.scenarios) scenarios.push_back(scenario_to_json_obj(s));
  json j{{"format", "paris-dataset"},
         {"version", 1},
         {"seed", d.seed},
         {"params", params_to_json_obj(d.params)},
         {"scenarios", std::move(scenarios)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump() << '\n';
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  if (j.value("format", "") != "paris-dataset")
    throw std::runtime_error(path + ": not a dataset file");
  Dataset d;
  d.seed = j.at("seed").get<std::uint64_t>();
  d.params = params_from_json_obj(j.at("params"));
  for (const auto& s : j.at("scenarios"))
    d.scenarios.push_back(scenario_from_json_obj(s));
  return d;
}

} // namespace paris
