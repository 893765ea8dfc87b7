#include "iwl/train.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "iwl/metrics.hpp"
#include "json.hpp"

namespace iwl {

namespace {

void check_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (cfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (cfg.max_steps < 0) throw std::invalid_argument("train: max_steps must be >= 0");
  if (cfg.eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
}

}  // namespace

void AdamState::reset(std::size_t n) {
  t = 0;
  m.assign(n, 0.0);
  v.assign(n, 0.0);
}

void adam_step(std::span<const ParamBlock> blocks, AdamState& state, const TrainConfig& cfg) {
  std::size_t total = 0;
  for (const ParamBlock& b : blocks) {
    if (b.params.size() != b.grads.size()) {
      throw std::invalid_argument(std::string("adam_step: size mismatch in block ") + b.name);
    }
    total += b.params.size();
  }
  if (state.m.size() != total) {
    throw std::invalid_argument("adam_step: moment store does not match parameter count");
  }
  for (const ParamBlock& b : blocks) {
    for (double g : b.grads) {
      if (!std::isfinite(g)) {
        throw std::runtime_error(std::string("adam_step: non-finite gradient in block ") +
                                 b.name);
      }
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  std::size_t off = 0;
  for (const ParamBlock& b : blocks) {
    for (std::size_t i = 0; i < b.params.size(); ++i) {
      const double g = b.grads[i];
      double& m = state.m[off + i];
      double& v = state.v[off + i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      b.params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
    off += b.params.size();
  }
}

namespace detail {

TrainResult run_train_loop(const EndModel& end0, const LabelModel& label0,
                           std::size_t strong_size, std::size_t weak_size,
                           const WeakDataset& validation, const TrainConfig& cfg,
                           const StepFn& step_fn) {
  check_config(cfg);
  if (validation.empty()) throw std::invalid_argument("train: validation set is empty");

  TrainResult res{end0, label0, end0, label0};
  if (cfg.max_steps == 0) return res;

  EndModel end = end0;
  LabelModel label = label0;
  std::vector<double>& lparams = label_model_params(label);
  const bool train_label = !cfg.freeze_label_model && !lparams.empty();

  AdamState adam;
  adam.reset(end.params.size() + (train_label ? lparams.size() : 0));
  DualBatchSampler sampler(strong_size, weak_size, cfg.batch_size, cfg.seed);

  std::vector<double> end_grad(end.params.size(), 0.0);
  std::vector<double> label_grad(train_label ? lparams.size() : 0, 0.0);

  double best_f1 = -1.0;
  int best_step = 0;
  int last_improvement = 0;
  for (int step = 1; step <= cfg.max_steps; ++step) {
    const DualBatchSampler::Batch batch = sampler.next();
    std::fill(end_grad.begin(), end_grad.end(), 0.0);
    std::fill(label_grad.begin(), label_grad.end(), 0.0);
    const LossReport report = step_fn(end, label, batch, end_grad, label_grad);

    ParamBlock blocks[2] = {{"end_model", end.params, end_grad},
                            {"label_model", lparams, label_grad}};
    adam_step(std::span<const ParamBlock>(blocks, train_label ? 2 : 1), adam, cfg);

    res.step_losses.push_back(-report.total);
    res.steps_run = step;

    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      const double f1 = evaluate_f1(end, validation);
      if (f1 > best_f1) {
        best_f1 = f1;
        best_step = step;
        last_improvement = step;
        res.best_end = end;
        res.best_label = label;
      }
      res.history.push_back(
          {step, -report.total, -report.strong_term, -report.weak_term, f1, best_f1});
      if (step - last_improvement >= cfg.patience) break;
    }
  }
  res.final_end = std::move(end);
  res.final_label = std::move(label);
  res.best_val_f1 = best_f1;
  res.best_step = best_step;
  if (best_f1 < 0.0) {  // never evaluated (cannot happen: the last step always evaluates)
    res.best_end = res.final_end;
    res.best_label = res.final_label;
  }
  return res;
}

}  // namespace detail

TrainResult train(const LabelModel& label0, const EndModel& end0, const WeakDataset& strong,
                  const WeakDataset& weak, const WeakDataset& validation,
                  const TrainConfig& cfg) {
  const int C = num_classes(label0);
  const int K = num_sources(label0);
  if (end0.num_classes != C) {
    throw std::invalid_argument("train: label and end models disagree on num_classes");
  }
  for (const WeakDataset* ds : {&strong, &weak}) {
    if (ds->empty()) continue;
    if (ds->num_classes != C || ds->num_sources != K || ds->feature_dim != end0.input_dim) {
      throw std::invalid_argument("train: dataset shape does not match the models");
    }
  }

  LabelModel label = label0;
  if (cfg.mv_init && !cfg.freeze_label_model && K > 0) {
    const std::uint64_t mv_seed = Rng::derive(cfg.seed, 3);
    if (strong.empty()) {
      majority_vote_init(weak, label, mv_seed);
    } else if (weak.empty()) {
      majority_vote_init(strong, label, mv_seed);
    } else {
      majority_vote_init(merge(strong, weak), label, mv_seed);
    }
  }

  const ObjectiveConfig obj{cfg.lambda_strong, cfg.lambda_weak};
  const auto step_fn = [&strong, &weak, obj](const EndModel& e, const LabelModel& l,
                                             const DualBatchSampler::Batch& batch,
                                             std::span<double> end_grad,
                                             std::span<double> label_grad) {
    return combined_objective_and_gradient(l, e, {&strong, batch.strong}, {&weak, batch.weak},
                                           obj, end_grad, label_grad);
  };
  return detail::run_train_loop(end0, label, strong.size(), weak.size(), validation, cfg,
                                step_fn);
}

WeakDataset strong_label_voting_source(const WeakDataset& ds) {
  WeakDataset out = ds;
  out.num_sources = ds.num_sources + 1;
  for (DataPoint& p : out.points) {
    p.weak_labels.push_back(p.strong_label ? *p.strong_label : 0);
  }
  return out;
}

void write_training_log(const TrainResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("write_training_log: cannot open " + path);
  for (const EvalEvent& e : result.history) {
    nlohmann::json j{{"step", e.step},           {"total_loss", e.total_loss},
                     {"strong_term", e.strong_term}, {"weak_term", e.weak_term},
                     {"val_f1", e.val_f1},       {"best_val_f1", e.best_val_f1}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write_training_log: write failed for " + path);
}

}  // namespace iwl
