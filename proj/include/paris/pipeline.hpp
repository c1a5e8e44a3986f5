#pragma once

#include <vector>

#include "paris/autodiff.hpp"
#include "paris/gnn.hpp"
#include "paris/objective.hpp"

namespace paris {

/// Options for one differentiable end-to-end pass over a mini-batch.
struct PipelineOptions {
  Objective objective = Objective::sum_rate;
  bool use_ris = true;        // cascade term included in effective channels
  bool train_mode = false;    // BN uses batch statistics and updates buffers
  bool rzf_beams = false;     // closed-form regularized ZF instead of stage 3
  const PAPlacement* fixed_placement = nullptr;  // required when !model.pagnn
};

/// Handles into the mini-batch graph. Matrices stack per-sample blocks along
/// rows: placement is (B*N)xM, effective channels (B*K)xN, beams (B*N)xK.
struct PipelineGraph {
  std::vector<ad::Var> leaves;  // trainable tensors in model order
  ad::Var placement;            // (B*N)xM real
  ad::Var phases;               // BxL unit-modulus, invalid when unused
  ad::Var alpha;                // BxK real, invalid when rzf or no stage 3
  ad::Var power;                // BxK real
  ad::Var beams;                // (B*N)xK
  ad::Var eff_stage3;           // (B*K)xN
  ad::Var rates;                // BxK
  ad::Var sum_rates;            // Bx1
  ad::Var tx_power;             // Bx1
  ad::Var loss;                 // 1x1
  int batch = 0;
};

/// Registers the model parameters as leaves and builds the whole
/// user-positions -> loss graph for `batch` scenarios on one tape.
PipelineGraph build_pipeline(ad::Tape& tape, GnnModel& model,
                             const SystemParams& p,
                             const std::vector<const Scenario*>& batch,
                             const PipelineOptions& opt);

/// Reads per-sample Solutions out of an evaluated pipeline graph.
std::vector<Solution> extract_solutions(const ad::Tape& tape,
                                        const PipelineGraph& g,
                                        const SystemParams& p);

/// Applies one layer to node features V ((batch*k_users) x D). Train mode
/// lets batch-norm layers consume batch statistics and refresh their buffers.
ad::Var layer_apply(ad::Tape& tape, GnnModel& model, const LayerParams& lp,
                    const std::vector<ad::Var>& leaf_of_tensor, ad::Var V,
                    int batch, int k_users, bool train_mode);

/// Registers every trainable tensor of the model on the tape (leaves) and
/// every buffer/frozen tensor as constants; indexed by tensor id.
std::vector<ad::Var> register_model(ad::Tape& tape, const GnnModel& model,
                                    std::vector<ad::Var>* trainable_in_order);

} // namespace paris
