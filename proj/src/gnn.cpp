#include "paris/gnn.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "paris/rng.hpp"

namespace paris {

std::vector<int> GnnModel::trainable_ids() const {
  std::vector<int> ids;
  for (int i = 0; i < int(tensors.size()); ++i)
    if (tensors[i].trainable) ids.push_back(i);
  return ids;
}

std::int64_t GnnModel::parameter_count() const {
  std::int64_t n = 0;
  for (const ParamTensor& t : tensors)
    if (t.trainable) n += std::int64_t(t.value.size());
  return n;
}

namespace {

struct Builder {
  GnnModel* m;
  Rng rng;

  int weight(const std::string& name, int rows, int cols, bool real_only) {
    ParamTensor t;
    t.name = name;
    t.value = ad::CMat(rows, cols);
    t.real_only = real_only;
    const double fan_in = double(rows);
    if (real_only) {
      const double sd = std::sqrt(2.0 / fan_in);
      for (auto& z : t.value.d) z = ad::cplx(sd * rng.normal(), 0.0);
    } else {
      const double sd = std::sqrt(1.0 / fan_in);  // per component, total 2/fan_in
      for (auto& z : t.value.d) z = ad::cplx(sd * rng.normal(), sd * rng.normal());
    }
    m->tensors.push_back(std::move(t));
    return int(m->tensors.size()) - 1;
  }

  int bias(const std::string& name, int cols, bool real_only) {
    ParamTensor t;
    t.name = name;
    t.value = ad::CMat::zeros(1, cols);
    t.real_only = real_only;
    m->tensors.push_back(std::move(t));
    return int(m->tensors.size()) - 1;
  }

  int filled(const std::string& name, int cols, ad::cplx v, bool trainable) {
    ParamTensor t;
    t.name = name;
    t.value = ad::CMat::full(1, cols, v);
    t.trainable = trainable;
    m->tensors.push_back(std::move(t));
    return int(m->tensors.size()) - 1;
  }

  LayerParams cgcl(const std::string& tag, int in, int out) {
    LayerParams lp;
    lp.spec = LayerSpec{LayerKind::cgcl, in, out, out, false, false, true, 1};
    const int j = lp.spec.hidden;
    lp.weight_ids = {weight(tag + ".q.W1", 2 * in, j, false), bias(tag + ".q.b1", j, false),
                     weight(tag + ".q.W2", j, j, false),      bias(tag + ".q.b2", j, false),
                     weight(tag + ".c.W1", in + j, j, false), bias(tag + ".c.b1", j, false),
                     weight(tag + ".c.W2", j, out, false),    bias(tag + ".c.b2", out, false)};
    return lp;
  }

  LayerParams cgal(const std::string& tag, int in, int out, int heads) {
    if (out % heads != 0)
      throw std::invalid_argument("cgal: out_dim must be divisible by heads");
    LayerParams lp;
    lp.spec = LayerSpec{LayerKind::cgal, in, out, 0, false, true, true, heads};
    const int dh = out / heads;
    for (int h = 0; h < heads; ++h) {
      lp.weight_ids.push_back(weight(tag + ".W" + std::to_string(h), in, dh, false));
      lp.weight_ids.push_back(weight(tag + ".a" + std::to_string(h), 2 * dh, 1, false));
    }
    lp.weight_ids.push_back(weight(tag + ".Wres", in, out, false));
    return lp;
  }

  LayerParams cfl(const std::string& tag, int in, int out, bool bn, bool act,
                  bool real_only) {
    LayerParams lp;
    lp.spec = LayerSpec{LayerKind::cfl, in, out, 0, bn, false, act, 1};
    lp.weight_ids = {weight(tag + ".W", in, out, real_only),
                     bias(tag + ".b", out, real_only)};
    if (bn) {
      lp.weight_ids.push_back(filled(tag + ".bn.gamma", out, {1.0, 0.0}, true));
      lp.weight_ids.push_back(filled(tag + ".bn.beta", out, {0.0, 0.0}, true));
      lp.buffer_ids = {filled(tag + ".bn.rmean", out, {0.0, 0.0}, false),
                       filled(tag + ".bn.rvar", out, {1.0, 1.0}, false)};
    }
    return lp;
  }
};

std::vector<LayerParams> make_cgcl_stack(Builder& b, const std::string& tag,
                                         int in, int hidden, int out) {
  return {b.cgcl(tag + ".l0", in, hidden), b.cgcl(tag + ".l1", hidden, hidden),
          b.cgcl(tag + ".l2", hidden, out)};
}

std::vector<LayerParams> make_beam_branch(Builder& b, const std::string& tag,
                                          int in, int hidden, int heads) {
  std::vector<LayerParams> ls;
  ls.push_back(b.cgal(tag + ".g0", in, hidden, heads));
  ls.push_back(b.cgal(tag + ".g1", hidden, hidden, heads));
  ls.push_back(b.cgal(tag + ".g2", hidden, hidden, heads));
  const int half = std::max(1, hidden / 2);
  ls.push_back(b.cfl(tag + ".f0", hidden, hidden, true, true, false));
  ls.push_back(b.cfl(tag + ".f1", hidden, hidden, true, true, false));
  ls.push_back(b.cfl(tag + ".f2", hidden, hidden, true, true, false));
  ls.push_back(b.cfl(tag + ".f3", hidden, half, true, true, false));
  ls.push_back(b.cfl(tag + ".f4", half, 1, false, false, false));
  return ls;
}

} // namespace

GnnModel make_gnn_model(const SystemParams& p, bool pagnn, bool risgnn,
                        bool beamgnn, int hidden, int heads, std::uint64_t seed) {
  GnnModel m;
  m.pagnn = pagnn;
  m.risgnn = risgnn;
  m.beamgnn = beamgnn;
  m.hidden = hidden;
  m.heads = heads;
  m.n_waveguides = p.n_waveguides;
  m.n_pas_per_wg = p.n_pas_per_wg;
  m.n_ris = p.n_ris;
  Builder b{&m, Rng(mix_seed(seed, 0x6e6eULL))};
  const int N = p.n_waveguides;
  const int NM = p.n_waveguides * p.n_pas_per_wg;
  if (pagnn) m.stage1 = make_cgcl_stack(b, "s1", 3, hidden, NM);
  if (risgnn) m.stage2 = make_cgcl_stack(b, "s2", N, hidden, p.n_ris);
  if (beamgnn) {
    m.stage3a = make_beam_branch(b, "s3a", N, hidden, heads);
    m.stage3b = make_beam_branch(b, "s3b", N, hidden, heads);
  }
  return m;
}

GnnModel make_mlp_model(const SystemParams& p, bool placement_head,
                        bool phase_head, int hidden, std::uint64_t seed) {
  GnnModel m;
  m.mlp = true;
  m.pagnn = placement_head;
  m.risgnn = phase_head;
  m.beamgnn = true;
  m.hidden = hidden;
  m.n_waveguides = p.n_waveguides;
  m.n_pas_per_wg = p.n_pas_per_wg;
  m.n_ris = p.n_ris;
  m.mlp_k_train = p.n_users;
  Builder b{&m, Rng(mix_seed(seed, 0x3713ULL))};
  const int in = 3 * p.n_users;
  const int out = (placement_head ? p.n_waveguides * p.n_pas_per_wg : 0) +
                  (phase_head ? 2 * p.n_ris : 0) + 2 * p.n_users;
  m.mlp_layers.push_back(b.cfl("mlp.f0", in, hidden, false, true, true));
  m.mlp_layers.push_back(b.cfl("mlp.f1", hidden, hidden, false, true, true));
  m.mlp_layers.push_back(b.cfl("mlp.f2", hidden, out, false, false, true));
  return m;
}

// --- serialization ---------------------------------------------------------

namespace {

using json = nlohmann::ordered_json;

json tensor_to_json(const ParamTensor& t) {
  json data = json::array();
  for (const ad::cplx& z : t.value.d) data.push_back({z.real(), z.imag()});
  return json{{"name", t.name},
              {"rows", t.value.rows},
              {"cols", t.value.cols},
              {"trainable", t.trainable},
              {"real_only", t.real_only},
              {"data", std::move(data)}};
}

} // namespace

void save_model(const GnnModel& m, const SystemParams& p, const std::string& path) {
  json meta{{"mlp", m.mlp},
            {"pagnn", m.pagnn},
            {"risgnn", m.risgnn},
            {"beamgnn", m.beamgnn},
            {"hidden", m.hidden},
            {"heads", m.heads},
            {"n_waveguides", m.n_waveguides},
            {"n_pas_per_wg", m.n_pas_per_wg},
            {"n_ris", m.n_ris},
            {"mlp_k_train", m.mlp_k_train}};
  json tensors = json::array();
  for (const ParamTensor& t : m.tensors) tensors.push_back(tensor_to_json(t));
  json j{{"format", "paris-model"},
         {"version", 1},
         {"meta", std::move(meta)},
         {"params_fingerprint",
          {{"n_waveguides", p.n_waveguides},
           {"n_pas_per_wg", p.n_pas_per_wg},
           {"n_ris", p.n_ris},
           {"carrier_freq", p.carrier_freq}}},
         {"tensors", std::move(tensors)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump() << '\n';
}

GnnModel load_model(const std::string& path, const SystemParams& p) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  if (j.value("format", "") != "paris-model")
    throw std::runtime_error(path + ": not a model file");
  const json& meta = j.at("meta");
  const json& fp = j.at("params_fingerprint");
  if (fp.at("n_waveguides").get<int>() != p.n_waveguides ||
      fp.at("n_pas_per_wg").get<int>() != p.n_pas_per_wg ||
      fp.at("n_ris").get<int>() != p.n_ris)
    throw std::runtime_error(path + ": model was trained for another geometry");

  GnnModel m;
  if (meta.at("mlp").get<bool>()) {
    SystemParams q = p;
    q.n_users = meta.at("mlp_k_train").get<int>();
    q.finalize();
    m = make_mlp_model(q, meta.at("pagnn").get<bool>(),
                       meta.at("risgnn").get<bool>(),
                       meta.at("hidden").get<int>(), 0);
  } else {
    m = make_gnn_model(p, meta.at("pagnn").get<bool>(),
                       meta.at("risgnn").get<bool>(),
                       meta.at("beamgnn").get<bool>(), meta.at("hidden").get<int>(),
                       meta.at("heads").get<int>(), 0);
  }
  const json& tensors = j.at("tensors");
  if (tensors.size() != m.tensors.size())
    throw std::runtime_error(path + ": tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const json& tj = tensors[i];
    ParamTensor& t = m.tensors[i];
    if (tj.at("name").get<std::string>() != t.name ||
        tj.at("rows").get<int>() != t.value.rows ||
        tj.at("cols").get<int>() != t.value.cols)
      throw std::runtime_error(path + ": tensor layout mismatch at " + t.name);
    const json& data = tj.at("data");
    for (std::size_t e = 0; e < t.value.size(); ++e)
      t.value.d[e] = ad::cplx(data[e][0].get<double>(), data[e][1].get<double>());
  }
  return m;
}

} // namespace paris
