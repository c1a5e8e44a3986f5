#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "paris/autodiff.hpp"
#include "paris/beamform.hpp"
#include "paris/channel.hpp"
#include "paris/scenario.hpp"

namespace paris {

enum class LayerKind { cgcl, cgal, cfl };

struct LayerSpec {
  LayerKind kind = LayerKind::cfl;
  int in_dim = 0;
  int out_dim = 0;
  int hidden = 0;          // message width, CGCL only
  bool batch_norm = false; // CFL only
  bool residual = true;    // CGAL only
  bool activation = true;  // complex ReLU on the layer output (CFL)
  int heads = 1;           // CGAL only; out_dim must divide evenly
};

struct ParamTensor {
  std::string name;
  ad::CMat value;
  bool trainable = true;
  bool real_only = false;  // imaginary parts pinned to zero (MLP weights)
};

struct LayerParams {
  LayerSpec spec;
  std::vector<int> weight_ids;  // indices into GnnModel::tensors
  std::vector<int> buffer_ids;  // BN running stats, packed re+j*im
};

/// Learnable state of the network. Which stages exist depends on the system
/// configuration being trained (surface-less and fixed-geometry variants use
/// subsets). Parameter shapes are independent of the number of users.
struct GnnModel {
  bool pagnn = true;
  bool risgnn = true;
  bool beamgnn = true;
  bool mlp = false;

  int hidden = 64;
  int heads = 1;
  int n_waveguides = 0;
  int n_pas_per_wg = 0;
  int n_ris = 0;
  int mlp_k_train = 0;   // MLP input width is fixed at training time

  std::vector<LayerParams> stage1;   // user positions -> spacing logits
  std::vector<LayerParams> stage2;   // effective channels -> phase logits
  std::vector<LayerParams> stage3a;  // effective channels -> mixing logits
  std::vector<LayerParams> stage3b;  // effective channels -> power logits
  std::vector<LayerParams> mlp_layers;

  std::vector<ParamTensor> tensors;

  std::vector<int> trainable_ids() const;
  std::int64_t parameter_count() const;  // trainable complex entries
};

/// Builds and initializes a graph model. Weight entries are Kaiming-normal
/// with the variance split between real and imaginary parts; biases zero.
GnnModel make_gnn_model(const SystemParams& p, bool pagnn, bool risgnn,
                        bool beamgnn, int hidden, int heads, std::uint64_t seed);

/// Feed-forward baseline operating on flattened user coordinates. The input
/// width hard-codes the user count; evaluation at another K is an error.
GnnModel make_mlp_model(const SystemParams& p, bool placement_head,
                        bool phase_head, int hidden, std::uint64_t seed);

void save_model(const GnnModel& m, const SystemParams& p, const std::string& path);
GnnModel load_model(const std::string& path, const SystemParams& p);

// --- single-instance forward passes (inference mode) -----------------------

Eigen::MatrixXcd cgcl_forward(const GnnModel& m, const LayerParams& lp,
                              const Eigen::MatrixXcd& V);
Eigen::MatrixXcd cgal_forward(const GnnModel& m, const LayerParams& lp,
                              const Eigen::MatrixXcd& V);
Eigen::MatrixXcd cfl_forward(const GnnModel& m, const LayerParams& lp,
                             const Eigen::MatrixXcd& V);

PAPlacement pagnn_forward(const GnnModel& m, const Eigen::MatrixXd& users,
                          const SystemParams& p);
RISConfig risgnn_forward(const GnnModel& m, const Eigen::MatrixXcd& eff_initial,
                         const SystemParams& p);
HzmParams beamgnn_forward(const GnnModel& m, const Eigen::MatrixXcd& eff,
                          const SystemParams& p);

/// Runs all stages on one scenario and assembles a feasible Solution.
Solution full_forward(const GnnModel& m, const Scenario& sc,
                      const SystemParams& p, bool use_ris = true);

/// Same interface for the MLP baseline.
Solution mlp_forward(const GnnModel& m, const Scenario& sc,
                     const SystemParams& p, bool use_ris = true);

} // namespace paris
