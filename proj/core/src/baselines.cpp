#include "iwl/baselines.hpp"

#include <stdexcept>

namespace iwl {

namespace {

/// Shared combination rule so every supervised-style loop reports totals
/// with the exact arithmetic of the integrated objective.
inline LossReport supervised_report(const TrainConfig& cfg, double strong_term) {
  LossReport report;
  report.strong_term = strong_term;
  report.weak_term = 0.0;
  report.total = cfg.lambda_strong * report.strong_term + cfg.lambda_weak * report.weak_term;
  return report;
}

}  // namespace

SoftLabel majority_vote_soft(std::span<const int> votes, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("majority_vote_soft: num_classes must be >= 2");
  SoftLabel label;
  std::vector<double> counts(num_classes, 0.0);
  double total = 0.0;
  for (int v : votes) {
    if (v < 0 || v > num_classes) {
      throw std::invalid_argument("majority_vote_soft: vote " + std::to_string(v) +
                                  " outside {0.." + std::to_string(num_classes) + "}");
    }
    if (v != 0) {
      counts[v - 1] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) return label;  // unvoted
  label.voted = true;
  label.probs.assign(num_classes, 0.0);
  for (int j = 0; j < num_classes; ++j) label.probs[j] = counts[j] / total;
  return label;
}

std::vector<SoftLabel> majority_vote_soft(const WeakDataset& ds) {
  std::vector<SoftLabel> labels;
  labels.reserve(ds.size());
  for (const DataPoint& p : ds.points) {
    labels.push_back(majority_vote_soft(p.weak_labels, ds.num_classes));
  }
  return labels;
}

std::vector<SoftLabel> strong_replace(std::vector<SoftLabel> labels, const WeakDataset& ds) {
  if (labels.size() != ds.size()) {
    throw std::invalid_argument("strong_replace: labels and dataset differ in length");
  }
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const DataPoint& p = ds.points[n];
    if (!p.strong_label) continue;
    labels[n].probs.assign(ds.num_classes, 0.0);
    labels[n].probs[*p.strong_label - 1] = 1.0;
    labels[n].voted = true;
    labels[n].origin = SoftLabel::Origin::strong_replaced;
  }
  return labels;
}

TrainResult noise_aware_train(const EndModel& end0, const WeakDataset& ds,
                              const std::vector<SoftLabel>& labels,
                              const WeakDataset& validation, const TrainConfig& cfg) {
  if (labels.size() != ds.size()) {
    throw std::invalid_argument("noise_aware_train: labels and dataset differ in length");
  }
  std::vector<std::size_t> voted;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n].voted) voted.push_back(n);
  }
  if (voted.empty()) throw std::invalid_argument("noise_aware_train: no voted points");

  const MlpShape shape = end0.shape();
  const int C = end0.num_classes;
  MlpCache cache;
  std::vector<double> p, dz(C, 0.0);
  const auto step_fn = [&, C, shape](const EndModel& end, const LabelModel&,
                                     const DualBatchSampler::Batch& batch,
                                     std::span<double> end_grad, std::span<double>) {
    const double scale = cfg.lambda_strong / static_cast<double>(batch.strong.size());
    double sum = 0.0;
    for (std::size_t b : batch.strong) {
      const std::size_t n = voted[b];
      const std::vector<double>& q = labels[n].probs;
      mlp_forward(shape, end.params, ds.points[n].features, cache);
      p = softmax(cache.act.back());
      double qsum = 0.0;
      double value = 0.0;
      for (int j = 0; j < C; ++j) {
        if (q[j] == 0.0) continue;  // skip so one-hot targets sum exactly like plain CE
        qsum += q[j];
        value += q[j] * safe_log(p[j]);
      }
      sum += value;
      for (int j = 0; j < C; ++j) dz[j] = scale * (p[j] * qsum - q[j]);
      mlp_backward(shape, end.params, cache, dz, end_grad);
    }
    return supervised_report(cfg, sum / static_cast<double>(batch.strong.size()));
  };

  const LabelModel none = GlobalLabelModel::make(C, 0);
  return detail::run_train_loop(end0, none, voted.size(), 0, validation, cfg, step_fn);
}

TrainResult labels_only_train(const EndModel& end0, const WeakDataset& strong,
                              const WeakDataset& validation, const TrainConfig& cfg) {
  if (strong.empty()) throw std::invalid_argument("labels_only_train: empty strong set");

  const MlpShape shape = end0.shape();
  const int C = end0.num_classes;
  MlpCache cache;
  std::vector<double> p, dz(C, 0.0);
  const auto step_fn = [&, C, shape](const EndModel& end, const LabelModel&,
                                     const DualBatchSampler::Batch& batch,
                                     std::span<double> end_grad, std::span<double>) {
    const double scale = cfg.lambda_strong / static_cast<double>(batch.strong.size());
    double sum = 0.0;
    for (std::size_t n : batch.strong) {
      const DataPoint& pt = strong.points[n];
      if (!pt.strong_label) {
        throw std::invalid_argument("labels_only_train: point '" + pt.id + "' has no label");
      }
      mlp_forward(shape, end.params, pt.features, cache);
      p = softmax(cache.act.back());
      const int y = *pt.strong_label - 1;
      sum += safe_log(p[y]);
      for (int j = 0; j < C; ++j) dz[j] = scale * (p[j] - (j == y ? 1.0 : 0.0));
      mlp_backward(shape, end.params, cache, dz, end_grad);
    }
    return supervised_report(cfg, sum / static_cast<double>(batch.strong.size()));
  };

  const LabelModel none = GlobalLabelModel::make(C, 0);
  return detail::run_train_loop(end0, none, strong.size(), 0, validation, cfg, step_fn);
}

}  // namespace iwl
