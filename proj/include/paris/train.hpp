#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paris/gnn.hpp"
#include "paris/objective.hpp"
#include "paris/pipeline.hpp"

namespace paris {

struct TrainConfig {
  Objective objective = Objective::sum_rate;
  int batch_size = 128;
  int epochs = 20;
  double lr = 1e-3;
  std::vector<int> milestones = {50, 80};
  double lr_decay = 0.1;
  int patience = 10;
  std::uint64_t seed = 1;
  double train_frac = 0.8;
  double val_frac = 0.1;  // remainder is the test split
  double clip_norm = 10.0;
  bool use_ris = true;
  bool rzf_beams = false;  // train the two-stage variant against RZF beams
};

struct AdamState {
  std::vector<ad::CMat> m, v;  // first/second moments, re and im packed
  std::int64_t step = 0;
};

/// One Adam update over the trainable tensors. Gradients are consumed as
/// (d/dRe, d/dIm) pairs; real-only tensors ignore the imaginary component.
/// Throws on non-finite gradients.
void adam_step(GnnModel& model, const std::vector<ad::CMat>& grads,
               AdamState& state, double lr);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_sr = 0.0;
  double val_ee = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double best_val_loss = 0.0;
  int best_epoch = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct SplitView {
  std::vector<const Scenario*> train, val, test;
};

SplitView split_dataset(const Dataset& d, const TrainConfig& cfg);

struct EvalStats {
  double mean_sr = 0.0;
  double mean_ee = 0.0;
  double loss_sr = 0.0;
  double loss_ee = 0.0;
};

/// Batched inference-mode evaluation of a model over a scenario list.
EvalStats evaluate_model(GnnModel& model, const SystemParams& p,
                         const std::vector<const Scenario*>& scenarios,
                         bool use_ris, bool rzf_beams, int batch_size);

/// Unsupervised minibatch training. The model with the lowest validation
/// loss is restored on return. Deterministic for a fixed config.
TrainResult train(GnnModel& model, const Dataset& data, const TrainConfig& cfg);

void save_history_csv(const std::vector<EpochStats>& history,
                      const std::string& path);

} // namespace paris
