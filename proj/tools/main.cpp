#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "paris/harness.hpp"
#include "paris/parallel.hpp"
#include "paris/pipeline.hpp"
#include "paris/train.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace paris;

namespace {

struct CliConfig {
  SystemParams params = SystemParams::desk_defaults();
  TrainConfig train;
  std::string system = "ris_pa";
  std::string model_kind = "gnn";
  int hidden = 64;
  int heads = 1;
  int data_count = 2000;
  std::uint64_t data_seed = 7;
};

CliConfig load_config(const std::string& path) {
  CliConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  in >> j;
  if (j.contains("params")) c.params = params_from_json(j.at("params").dump());
  if (j.contains("system")) c.system = j.at("system").get<std::string>();
  if (j.contains("model")) {
    const json& m = j.at("model");
    c.model_kind = m.value("kind", c.model_kind);
    c.hidden = m.value("hidden", c.hidden);
    c.heads = m.value("heads", c.heads);
  }
  if (j.contains("data")) {
    c.data_count = j.at("data").value("count", c.data_count);
    c.data_seed = j.at("data").value("seed", c.data_seed);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    const std::string obj = t.value("objective", "sr");
    c.train.objective =
        obj == "ee" ? Objective::energy_efficiency : Objective::sum_rate;
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.lr = t.value("lr", c.train.lr);
    if (t.contains("milestones"))
      c.train.milestones = t.at("milestones").get<std::vector<int>>();
    c.train.lr_decay = t.value("lr_decay", c.train.lr_decay);
    c.train.patience = t.value("patience", c.train.patience);
    c.train.seed = t.value("seed", c.train.seed);
    c.train.train_frac = t.value("train_frac", c.train.train_frac);
    c.train.val_frac = t.value("val_frac", c.train.val_frac);
  }
  return c;
}

SystemConfig parse_system(const std::string& s) {
  if (s == "ris_pa") return SystemConfig::ris_pa;
  if (s == "pa_only") return SystemConfig::pa_only;
  if (s == "fixed_pa_only") return SystemConfig::fixed_pa_only;
  throw std::runtime_error("unknown system configuration: " + s);
}

std::string results_path(const std::string& name) {
  if (fs::path(name).is_absolute()) return name;
  const char* root = std::getenv("PARIS_RESULTS_ROOT");
  if (root == nullptr || *root == '\0') return name;
  fs::create_directories(root);
  return (fs::path(root) / name).string();
}

GnnModel build_model_for(const CliConfig& c, SystemConfig sys) {
  const bool pa = sys != SystemConfig::fixed_pa_only;
  const bool ris = sys == SystemConfig::ris_pa;
  if (c.model_kind == "mlp")
    return make_mlp_model(c.params, pa, ris, std::max(c.hidden, 16),
                          c.train.seed);
  if (c.model_kind == "two_stage") {
    if (!pa)
      throw std::runtime_error(
          "two_stage has nothing to learn with a fixed layout and no surface");
    return make_gnn_model(c.params, pa, ris, false, c.hidden, c.heads,
                          c.train.seed);
  }
  if (c.model_kind == "gnn")
    return make_gnn_model(c.params, pa, ris, true, c.hidden, c.heads,
                          c.train.seed);
  throw std::runtime_error("unknown model kind: " + c.model_kind);
}

int cmd_gen_data(const CliConfig& c, const std::string& out) {
  const Dataset d = make_dataset(c.params, c.data_count, c.data_seed);
  save_dataset(d, results_path(out));
  std::cout << "wrote " << d.scenarios.size() << " scenarios to "
            << results_path(out) << "\n";
  return 0;
}

int cmd_train(CliConfig c, const std::string& dataset_path,
              const std::string& model_out, const std::string& history_out) {
  const Dataset d = load_dataset(dataset_path);
  c.params = d.params;
  const SystemConfig sys = parse_system(c.system);
  c.train.use_ris = sys == SystemConfig::ris_pa;
  c.train.rzf_beams = c.model_kind == "two_stage";
  GnnModel m = build_model_for(c, sys);
  const TrainResult r = train(m, d, c.train);
  if (r.aborted) {
    std::cerr << "training aborted: " << r.abort_reason
              << " (best checkpoint restored)\n";
  }
  save_model(m, c.params, results_path(model_out));
  if (!history_out.empty()) save_history_csv(r.history, results_path(history_out));
  if (!r.history.empty())
    std::cout << "epochs=" << r.history.size() << " best_epoch=" << r.best_epoch
              << " best_val_loss=" << r.best_val_loss << "\n";
  std::cout << "wrote model to " << results_path(model_out) << "\n";
  return r.aborted ? 1 : 0;
}

int cmd_eval(CliConfig c, const std::string& dataset_path,
             const std::string& model_path, const std::string& strategy,
             const std::string& objective, int budget, int k_test,
             const std::string& out) {
  Dataset d = load_dataset(dataset_path);
  c.params = d.params;
  if (k_test > 0 && k_test != c.params.n_users) {
    c.params.n_users = k_test;
    c.params.finalize();
    std::vector<Scenario> fresh;
    for (std::size_t i = 0; i < d.scenarios.size(); ++i)
      fresh.push_back(
          sample_scenario(c.params, mix_seed(d.seed, 0xbeefULL + i)));
    d.scenarios = std::move(fresh);
  }
  const SystemConfig sys = parse_system(c.system);
  Method method;
  if (strategy == "I" || strategy == "i")
    method = Method::strategy_i;
  else if (strategy == "II" || strategy == "ii")
    method = Method::strategy_ii;
  else if (strategy == "III" || strategy == "iii")
    method = Method::strategy_iii;
  else if (strategy == "MLP" || strategy == "mlp")
    method = Method::mlp;
  else if (strategy == "refine")
    method = Method::refine_only;
  else
    throw std::runtime_error("unknown strategy: " + strategy);

  GnnModel model;
  const bool needs_model = method != Method::refine_only;
  if (needs_model) {
    if (model_path.empty()) throw std::runtime_error("eval: --model required");
    model = load_model(model_path, c.params);
  }
  const Objective obj =
      objective == "ee" ? Objective::energy_efficiency : Objective::sum_rate;
  const StrategyReport r =
      baseline_eval(sys, method, d.scenarios, c.params,
                    needs_model ? &model : nullptr, obj, budget);
  save_report_csv(r, results_path(out));
  std::cout << "system=" << r.system_config << " method=" << r.method
            << " samples=" << r.samples.size() << " mean_SR=" << r.mean_sr
            << " mean_EE=" << r.mean_ee
            << " median_time_ms=" << r.median_time_ms << "\n"
            << "wrote " << results_path(out) << "\n";
  return 0;
}

int cmd_oracle(CliConfig c, const std::string& dataset_path, int pos_grid,
               int phase_levels, double max_evals, int limit,
               const std::string& out) {
  const Dataset d = load_dataset(dataset_path);
  c.params = d.params;
  OracleSpec spec;
  spec.pos_grid = pos_grid;
  spec.phase_levels = phase_levels;
  spec.max_evals = max_evals;
  const int n = limit > 0 ? std::min<int>(limit, int(d.scenarios.size()))
                          : int(d.scenarios.size());
  std::ofstream os(results_path(out));
  if (!os) throw std::runtime_error("cannot open " + out);
  os << "sample_id,oracle_SR,evals\n";
  os.precision(17);
  for (int i = 0; i < n; ++i) {
    const OracleResult r = grid_oracle(d.scenarios[i], c.params, spec);
    os << i << ',' << r.sr << ',' << r.evals << '\n';
  }
  std::cout << "wrote " << n << " oracle rows to " << results_path(out) << "\n";
  return 0;
}

int cmd_bench(CliConfig c, int batch, int reps) {
  const SystemParams& p = c.params;
  const Dataset d = make_dataset(p, batch, 123);
  std::vector<const Scenario*> chunk;
  for (const Scenario& s : d.scenarios) chunk.push_back(&s);

  auto time_ms = [](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };

  auto run_mode = [&](par::Mode mode, bool backward) {
    par::set_mode(mode);
    GnnModel m = make_gnn_model(p, true, true, true, c.hidden, c.heads, 3);
    double total = 0.0;
    for (int r = 0; r < reps; ++r) {
      total += time_ms([&] {
        ad::Tape tape;
        PipelineOptions opt;
        opt.train_mode = backward;
        PipelineGraph g = build_pipeline(tape, m, p, chunk, opt);
        if (backward) tape.backward(g.loss);
      });
    }
    return total / reps;
  };

  std::cout << "workload: batch=" << batch << " hidden=" << c.hidden
            << " N=" << p.n_waveguides << " M=" << p.n_pas_per_wg
            << " K=" << p.n_users << " L=" << p.n_ris
            << " threads=" << par::threads() << " reps=" << reps << "\n";
  const double fwd_s = run_mode(par::Mode::serial, false);
  const double fwd_p = run_mode(par::Mode::openmp, false);
  const double bwd_s = run_mode(par::Mode::serial, true);
  const double bwd_p = run_mode(par::Mode::openmp, true);
  par::set_mode(par::Mode::openmp);
  std::cout << "forward batch      serial " << fwd_s << " ms | openmp " << fwd_p
            << " ms | speedup " << fwd_s / fwd_p << "x\n";
  std::cout << "forward+backward   serial " << bwd_s << " ms | openmp " << bwd_p
            << " ms | speedup " << bwd_s / bwd_p << "x\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"RIS-assisted pinching-antenna downlink: simulation, learned "
               "optimization, and reference baselines"};
  app.require_subcommand(1);

  std::string config_path;
  int threads = 0;
  bool serial = false;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--threads", threads, "cap worker threads");
  app.add_flag("--serial", serial, "disable the threaded kernels");

  auto* gen = app.add_subcommand("gen-data", "sample a scenario dataset");
  int g_count = -1;
  std::uint64_t g_seed = 0;
  bool g_seed_set = false;
  std::string g_out = "dataset.json";
  gen->add_option("--count", g_count, "number of scenarios");
  gen->add_option("--seed", g_seed, "dataset seed")->each([&](const std::string&) {
    g_seed_set = true;
  });
  gen->add_option("--out", g_out, "output path");

  auto* tr = app.add_subcommand("train", "unsupervised training");
  std::string t_dataset, t_out = "model.json", t_history = "history.csv";
  std::string t_objective, t_system, t_kind;
  int t_epochs = -1, t_batch = -1, t_hidden = -1;
  std::uint64_t t_seed = 0;
  bool t_seed_set = false;
  tr->add_option("--dataset", t_dataset, "dataset path")->required();
  tr->add_option("--out", t_out, "model output path");
  tr->add_option("--history", t_history, "history CSV path");
  tr->add_option("--objective", t_objective, "sr or ee");
  tr->add_option("--system", t_system, "ris_pa, pa_only, or fixed_pa_only");
  tr->add_option("--model-kind", t_kind, "gnn, two_stage, or mlp");
  tr->add_option("--epochs", t_epochs, "epoch count");
  tr->add_option("--batch", t_batch, "minibatch size");
  tr->add_option("--hidden", t_hidden, "hidden width");
  tr->add_option("--seed", t_seed, "training seed")->each([&](const std::string&) {
    t_seed_set = true;
  });

  auto* ev = app.add_subcommand("eval", "evaluate a strategy over a dataset");
  std::string e_dataset, e_model, e_strategy = "I", e_objective = "sr";
  std::string e_system, e_out = "report.csv";
  int e_budget = 500, e_ktest = 0;
  ev->add_option("--dataset", e_dataset, "dataset path")->required();
  ev->add_option("--model", e_model, "model path");
  ev->add_option("--strategy", e_strategy, "I, II, III, MLP, or refine");
  ev->add_option("--objective", e_objective, "sr or ee");
  ev->add_option("--system", e_system, "system configuration");
  ev->add_option("--budget", e_budget, "refinement iteration budget");
  ev->add_option("--k-test", e_ktest, "evaluate at a different user count");
  ev->add_option("--out", e_out, "report CSV path");

  auto* orc = app.add_subcommand("oracle", "exhaustive reference search");
  std::string o_dataset, o_out = "oracle.csv";
  int o_grid = 41, o_levels = 8, o_limit = 0;
  double o_max = 2e7;
  orc->add_option("--dataset", o_dataset, "dataset path")->required();
  orc->add_option("--pos-grid", o_grid, "grid points per position");
  orc->add_option("--phase-levels", o_levels, "levels per surface element");
  orc->add_option("--max-evals", o_max, "refusal threshold");
  orc->add_option("--limit", o_limit, "only the first N scenarios");
  orc->add_option("--out", o_out, "output CSV path");

  auto* bn = app.add_subcommand("bench", "compare serial and threaded kernels");
  int b_batch = 64, b_reps = 5;
  bn->add_option("--batch", b_batch, "scenarios per batch");
  bn->add_option("--reps", b_reps, "repetitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    CliConfig cfg = load_config(config_path);
    if (threads > 0) par::set_threads(threads);
    par::set_mode(serial ? par::Mode::serial : par::Mode::openmp);

    if (gen->parsed()) {
      if (g_count > 0) cfg.data_count = g_count;
      if (g_seed_set) cfg.data_seed = g_seed;
      return cmd_gen_data(cfg, g_out);
    }
    if (tr->parsed()) {
      if (!t_objective.empty())
        cfg.train.objective = t_objective == "ee" ? Objective::energy_efficiency
                                                  : Objective::sum_rate;
      if (!t_system.empty()) cfg.system = t_system;
      if (!t_kind.empty()) cfg.model_kind = t_kind;
      if (t_epochs >= 0) cfg.train.epochs = t_epochs;
      if (t_batch > 0) cfg.train.batch_size = t_batch;
      if (t_hidden > 0) cfg.hidden = t_hidden;
      if (t_seed_set) cfg.train.seed = t_seed;
      return cmd_train(cfg, t_dataset, t_out, t_history);
    }
    if (ev->parsed()) {
      if (!e_system.empty()) cfg.system = e_system;
      return cmd_eval(cfg, e_dataset, e_model, e_strategy, e_objective,
                      e_budget, e_ktest, e_out);
    }
    if (orc->parsed())
      return cmd_oracle(cfg, o_dataset, o_grid, o_levels, o_max, o_limit, o_out);
    if (bn->parsed()) return cmd_bench(cfg, b_batch, b_reps);
  } catch (const OracleBudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
