#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iwl/dataset.hpp"
#include "iwl/end_model.hpp"
#include "iwl/label_model.hpp"
#include "iwl/objective.hpp"

namespace iwl {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  int patience = 300;   // optimizer steps without validation-F1 improvement
  int max_steps = 10000;
  int eval_every = 10;  // steps between validation evaluations
  std::uint64_t seed = 0;
  double lambda_strong = 1.0;
  double lambda_weak = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool mv_init = true;              // majority-vote-initialize the label model
  bool freeze_label_model = false;  // keep label-model parameters at their initial values
};

struct AdamState {
  long t = 0;
  std::vector<double> m;
  std::vector<double> v;

  void reset(std::size_t n);
};

struct ParamBlock {
  const char* name;
  std::span<double> params;
  std::span<const double> grads;
};

/// One bias-corrected Adam update over the blocks (which share one moment
/// store, concatenated in block order). Throws, naming the offending block,
/// on a non-finite gradient.
void adam_step(std::span<const ParamBlock> blocks, AdamState& state, const TrainConfig& cfg);

struct EvalEvent {
  int step = 0;
  double total_loss = 0.0;  // negated objective of the step's batch (lower is better)
  double strong_term = 0.0;
  double weak_term = 0.0;
  double val_f1 = 0.0;
  double best_val_f1 = 0.0;
};

/// best_* is the snapshot with the highest validation F1 seen at any
/// evaluation (strict improvement); final_* is the last iterate, the right
/// object for studying what the objective alone converges to. When no
/// evaluation ever ran (max_steps = 0) best equals final and best_val_f1
/// stays at its -1 sentinel.
struct TrainResult {
  EndModel best_end;
  LabelModel best_label;
  EndModel final_end;
  LabelModel final_label;
  double best_val_f1 = -1.0;
  int best_step = 0;
  int steps_run = 0;
  std::vector<EvalEvent> history;     // one entry per evaluation
  std::vector<double> step_losses;    // negated batch objective, one per step
};

/// Joint maximum-likelihood training of (end model, label model) on a
/// labeled set and a weak-only set: per step one batch from each, combined
/// objective gradient, one Adam update over both parameter blocks; early
/// stopping on validation F1 of the end model alone. The label model is
/// majority-vote-initialized first (cfg.mv_init) unless frozen or K = 0.
TrainResult train(const LabelModel& label0, const EndModel& end0, const WeakDataset& strong,
                  const WeakDataset& weak, const WeakDataset& validation,
                  const TrainConfig& cfg);

/// Appends source K+1 that votes the strong label where present and abstains
/// elsewhere — the "-V" route for feeding strong labels to vote-based methods.
WeakDataset strong_label_voting_source(const WeakDataset& ds);

/// JSON Lines, one record per evaluation event.
void write_training_log(const TrainResult& result, const std::string& path);

namespace detail {

/// Per-step work: compute the batch objective and accumulate gradients of
/// its negative into the (pre-zeroed) buffers; label_grad is empty when the
/// label model is frozen or has no parameters.
using StepFn = std::function<LossReport(const EndModel& end, const LabelModel& label,
                                        const DualBatchSampler::Batch& batch,
                                        std::span<double> end_grad,
                                        std::span<double> label_grad)>;

/// The shared optimize/evaluate/early-stop loop. strong_size and weak_size
/// define the two index streams the sampler draws from; what the indices
/// mean is the step function's business.
TrainResult run_train_loop(const EndModel& end0, const LabelModel& label0,
                           std::size_t strong_size, std::size_t weak_size,
                           const WeakDataset& validation, const TrainConfig& cfg,
                           const StepFn& step);

}  // namespace detail

}  // namespace iwl
