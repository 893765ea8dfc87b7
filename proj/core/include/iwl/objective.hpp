#pragma once

#include <span>
#include <string>
#include <vector>

#include "iwl/dataset.hpp"
#include "iwl/end_model.hpp"
#include "iwl/label_model.hpp"

namespace iwl {

/// Weights of the two likelihood terms: total = lambda_strong * (mean joint
/// log-likelihood over labeled points) + lambda_weak * (mean weak marginal
/// log-likelihood over unlabeled points).
struct ObjectiveConfig {
  double lambda_strong = 1.0;
  double lambda_weak = 1.0;
};

/// Log-likelihood report for one batch pair (higher is better; the training
/// loop negates for minimization). per_source_weak[k] is the mean per-source
/// weak log-likelihood over all points of both batches, a diagnostic for
/// which sources the model explains well.
struct LossReport {
  double total = 0.0;
  double strong_term = 0.0;
  double weak_term = 0.0;
  std::vector<double> per_source_weak;
};

std::string loss_report_to_json(const LossReport& report);

/// A view of batch points: indices into ds->points. A null ds or empty index
/// list is an empty batch.
struct BatchRef {
  const WeakDataset* ds = nullptr;
  std::span<const std::size_t> indices;

  std::size_t size() const { return ds == nullptr ? 0 : indices.size(); }
};

/// log p(votes | x) with the true class marginalized under the end model:
/// sum_k log sum_y p(vote_k|y[,x]) p(y|x) for the per-source variants, and
/// log sum_h p(h|x) prod_k sum_y p(vote_k|y,h) p(y|x) for the latent model
/// (which collapses to the former at H=1). Abstains are modeled outcomes and
/// always contribute. Probabilities are floored at 1e-300 before logs.
double weak_marginal_loglik(const LabelModel& label, const EndModel& end,
                            std::span<const double> x, std::span<const int> votes);

/// Mean over the batch of [log p(y_n|x_n) + weak_marginal_loglik(x_n)].
/// Every point must carry a strong label. Empty batch -> 0.
double strong_loglik_term(const LabelModel& label, const EndModel& end, const BatchRef& batch);

/// Mean over the batch of weak_marginal_loglik. Empty batch -> 0.
double weak_loglik_term(const LabelModel& label, const EndModel& end, const BatchRef& batch);

LossReport combined_objective(const LabelModel& label, const EndModel& end,
                              const BatchRef& strong, const BatchRef& weak,
                              const ObjectiveConfig& cfg);

/// Same value as combined_objective, plus gradients of the NEGATIVE total
/// (minimization form) ACCUMULATED into end_grad / label_grad. Pass an empty
/// span to skip a block (e.g. frozen label model). Throws if both batches
/// are empty.
LossReport combined_objective_and_gradient(const LabelModel& label, const EndModel& end,
                                           const BatchRef& strong, const BatchRef& weak,
                                           const ObjectiveConfig& cfg,
                                           std::span<double> end_grad,
                                           std::span<double> label_grad);

}  // namespace iwl
