#include "iwl/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace iwl {

namespace {

constexpr double kFloor = 1e-300;

inline double floored(double p) { return p < kFloor ? kFloor : p; }

/// sum_j entries[col j][row vote] * p[j] for one source's column-major block.
inline double vote_marginal(const double* entries, int rows, int num_classes, int vote,
                            const double* p) {
  double m = 0.0;
  for (int j = 0; j < num_classes; ++j) m += entries[j * rows + vote] * p[j];
  return m;
}

/// One objective pass: realizes whatever is shared across the batch once
/// (global matrices, latent state matrices), walks both batches point by
/// point, and chains accumulated transition-entry gradients through the
/// column softmax at the end. Gradients are of the negative total and are
/// accumulated into the spans given at construction (empty span = skip).
class Pass {
 public:
  Pass(const LabelModel& label, const EndModel& end, std::span<double> end_grad,
       std::span<double> label_grad)
      : label_(label),
        end_(end),
        end_grad_(end_grad),
        label_grad_(label_grad),
        C_(end.num_classes),
        K_(iwl::num_sources(label)),
        rows_(C_ + 1),
        block_(static_cast<std::size_t>(rows_) * C_) {
    if (iwl::num_classes(label) != C_) {
      throw std::invalid_argument("objective: label and end models disagree on num_classes");
    }
    if (!end_grad_.empty() && end_grad_.size() != end.params.size()) {
      throw std::invalid_argument("objective: end_grad size mismatch");
    }
    if (!label_grad_.empty() && label_grad_.size() != label_model_params(label).size()) {
      throw std::invalid_argument("objective: label_grad size mismatch");
    }
    if (const auto* g = std::get_if<GlobalLabelModel>(&label_)) {
      shared_t_.resize(g->logits.size());
      column_softmax(g->logits, C_, shared_t_);
      if (want_label()) gt_.assign(shared_t_.size(), 0.0);
    } else if (const auto* l = std::get_if<LatentDependentLabelModel>(&label_)) {
      mix_params_ = std::span<const double>(l->params).first(l->state_logits_offset());
      const std::span<const double> state_logits =
          std::span<const double>(l->params).subspan(l->state_logits_offset());
      shared_t_.resize(state_logits.size());
      column_softmax(state_logits, C_, shared_t_);
      if (want_label()) gt_.assign(shared_t_.size(), 0.0);
      q_.resize(static_cast<std::size_t>(l->num_states) * std::max(K_, 1));
      s_.resize(l->num_states);
      du_.resize(l->num_states);
    }
    per_source_sum_.assign(K_, 0.0);
  }

  bool want_end() const { return !end_grad_.empty(); }
  bool want_label() const { return !label_grad_.empty(); }

  /// Returns the supervised log-likelihood (0 unless with_strong_label) and
  /// adds the point's weak marginal log-likelihood to weak_out. scale is the
  /// per-point gradient weight lambda / batch_size.
  double point(const DataPoint& pt, bool with_strong_label, double scale, double& weak_out) {
    mlp_forward(end_.shape(), end_.params, pt.features, end_cache_);
    p_ = softmax(end_cache_.act.back());

    double sup = 0.0;
    if (with_strong_label) {
      if (!pt.strong_label) {
        throw std::invalid_argument("strong batch point '" + pt.id + "' missing strong label");
      }
      sup = safe_log(p_[*pt.strong_label - 1]);
    }

    if (want_end()) {
      dz_.assign(C_, 0.0);
      if (with_strong_label) {
        const int y = *pt.strong_label - 1;
        for (int j = 0; j < C_; ++j) dz_[j] = scale * (p_[j] - (j == y ? 1.0 : 0.0));
      }
    }

    double weak = 0.0;
    if (K_ > 0) {
      if (const auto* a = std::get_if<AmortizedLabelModel>(&label_)) {
        weak = amortized_point(*a, pt, scale);
      } else if (const auto* l = std::get_if<LatentDependentLabelModel>(&label_)) {
        weak = latent_point(*l, pt, scale);
      } else {
        weak = global_point(pt, scale);
      }
      if (want_end()) {
        // d(-scale * weak)/dz through the end-model softmax.
        vjp_.assign(C_, 0.0);
        softmax_vjp(p_, gp_, vjp_);
        for (int j = 0; j < C_; ++j) dz_[j] -= scale * vjp_[j];
      }
    }
    if (want_end()) {
      mlp_backward(end_.shape(), end_.params, end_cache_, dz_, end_grad_);
    }
    weak_out += weak;
    ++points_seen_;
    return sup;
  }

  /// Chains the accumulated shared-transition gradients through the column
  /// softmax. Call exactly once, after the last point.
  void finish() {
    if (!want_label() || gt_.empty()) return;
    std::size_t logit_offset = 0;
    if (const auto* l = std::get_if<LatentDependentLabelModel>(&label_)) {
      logit_offset = l->state_logits_offset();
    }
    col_.assign(rows_, 0.0);
    for (std::size_t col = 0; col < gt_.size() / rows_; ++col) {
      const double* t = shared_t_.data() + col * rows_;
      const double* g = gt_.data() + col * rows_;
      softmax_vjp({t, static_cast<std::size_t>(rows_)}, {g, static_cast<std::size_t>(rows_)},
                  col_);
      double* out = label_grad_.data() + logit_offset + col * rows_;
      for (int i = 0; i < rows_; ++i) out[i] += col_[i];
    }
  }

  /// Mean per-source weak log-likelihood over all processed points.
  std::vector<double> per_source_means() const {
    std::vector<double> means = per_source_sum_;
    if (points_seen_ > 0) {
      for (double& v : means) v /= static_cast<double>(points_seen_);
    }
    return means;
  }

 private:
  double global_point(const DataPoint& pt, double scale) {
    gp_.assign(C_, 0.0);
    double weak = 0.0;
    for (int k = 0; k < K_; ++k) {
      const double* src = shared_t_.data() + k * block_;
      const int r = pt.weak_labels[k];
      const double m = floored(vote_marginal(src, rows_, C_, r, p_.data()));
      const double lm = std::log(m);
      weak += lm;
      per_source_sum_[k] += lm;
      if (want_end()) {
        for (int j = 0; j < C_; ++j) gp_[j] += src[j * rows_ + r] / m;
      }
      if (want_label()) {
        for (int j = 0; j < C_; ++j) gt_[k * block_ + j * rows_ + r] -= scale * p_[j] / m;
      }
    }
    return weak;
  }

  double amortized_point(const AmortizedLabelModel& a, const DataPoint& pt, double scale) {
    const MlpShape shape = a.shape();
    mlp_forward(shape, a.params, pt.features, label_cache_);
    point_t_.resize(block_ * K_);
    column_softmax(label_cache_.act.back(), C_, point_t_);
    if (want_label()) dt_.assign(point_t_.size(), 0.0);

    gp_.assign(C_, 0.0);
    double weak = 0.0;
    for (int k = 0; k < K_; ++k) {
      const double* src = point_t_.data() + k * block_;
      const int r = pt.weak_labels[k];
      const double m = floored(vote_marginal(src, rows_, C_, r, p_.data()));
      const double lm = std::log(m);
      weak += lm;
      per_source_sum_[k] += lm;
      if (want_end()) {
        for (int j = 0; j < C_; ++j) gp_[j] += src[j * rows_ + r] / m;
      }
      if (want_label()) {
        // Column-softmax pullback of the single nonzero upstream at row r.
        for (int j = 0; j < C_; ++j) {
          const double* col = src + j * rows_;
          const double c = -scale * p_[j] / m;
          const double inner = col[r] * c;
          double* dcol = dt_.data() + k * block_ + j * rows_;
          for (int i = 0; i < rows_; ++i) dcol[i] = col[i] * ((i == r ? c : 0.0) - inner);
        }
      }
    }
    if (want_label()) {
      mlp_backward(shape, a.params, label_cache_, dt_, label_grad_);
    }
    return weak;
  }

  double latent_point(const LatentDependentLabelModel& l, const DataPoint& pt, double scale) {
    const MlpShape mix = l.mixture_shape();
    mlp_forward(mix, mix_params_, pt.features, label_cache_);
    pi_ = softmax(label_cache_.act.back());

    const int H = l.num_states;
    for (int h = 0; h < H; ++h) {
      double sh = safe_log(pi_[h]);
      for (int k = 0; k < K_; ++k) {
        const double* src = shared_t_.data() + (static_cast<std::size_t>(h) * K_ + k) * block_;
        const double m =
            floored(vote_marginal(src, rows_, C_, pt.weak_labels[k], p_.data()));
        q_[static_cast<std::size_t>(h) * K_ + k] = m;
        sh += std::log(m);
      }
      s_[h] = sh;
    }
    const double weak = log_sum_exp(s_);
    w_ = softmax(s_);

    for (int k = 0; k < K_; ++k) {
      double mixed = 0.0;
      for (int h = 0; h < H; ++h) mixed += pi_[h] * q_[static_cast<std::size_t>(h) * K_ + k];
      per_source_sum_[k] += std::log(floored(mixed));
    }

    if (want_end()) {
      gp_.assign(C_, 0.0);
      for (int h = 0; h < H; ++h) {
        for (int k = 0; k < K_; ++k) {
          const double* src = shared_t_.data() + (static_cast<std::size_t>(h) * K_ + k) * block_;
          const int r = pt.weak_labels[k];
          const double wq = w_[h] / q_[static_cast<std::size_t>(h) * K_ + k];
          for (int j = 0; j < C_; ++j) gp_[j] += src[j * rows_ + r] * wq;
        }
      }
    }
    if (want_label()) {
      for (int h = 0; h < H; ++h) {
        for (int k = 0; k < K_; ++k) {
          const int r = pt.weak_labels[k];
          const double wq = w_[h] / q_[static_cast<std::size_t>(h) * K_ + k];
          double* g = gt_.data() + (static_cast<std::size_t>(h) * K_ + k) * block_;
          for (int j = 0; j < C_; ++j) g[j * rows_ + r] -= scale * p_[j] * wq;
        }
      }
      for (int h = 0; h < H; ++h) du_[h] = scale * (pi_[h] - w_[h]);
      mlp_backward(mix, mix_params_, label_cache_, du_,
                   label_grad_.first(l.state_logits_offset()));
    }
    return weak;
  }

  const LabelModel& label_;
  const EndModel& end_;
  std::span<double> end_grad_;
  std::span<double> label_grad_;
  const int C_;
  const int K_;
  const int rows_;
  const std::size_t block_;

  std::span<const double> mix_params_;
  std::vector<double> shared_t_;   // global matrices, or latent per-state matrices
  std::vector<double> gt_;         // accumulated d(-total)/d(shared transition entries)
  std::vector<double> per_source_sum_;
  std::size_t points_seen_ = 0;

  MlpCache end_cache_, label_cache_;
  std::vector<double> p_, dz_, gp_, vjp_, point_t_, dt_, pi_, q_, s_, w_, du_, col_;
};

LossReport run_pass(const LabelModel& label, const EndModel& end, const BatchRef& strong,
                    const BatchRef& weak, const ObjectiveConfig& cfg, std::span<double> end_grad,
                    std::span<double> label_grad) {
  if (strong.size() == 0 && weak.size() == 0) {
    throw std::invalid_argument("objective: both batches empty");
  }
  if (!(cfg.lambda_strong >= 0.0) || !(cfg.lambda_weak >= 0.0) ||
      cfg.lambda_strong + cfg.lambda_weak <= 0.0) {
    throw std::invalid_argument("objective: lambdas must be nonnegative with positive sum");
  }
  Pass pass(label, end, end_grad, label_grad);

  LossReport report;
  if (strong.size() > 0) {
    const double scale = cfg.lambda_strong / static_cast<double>(strong.size());
    double sum = 0.0;
    for (std::size_t idx : strong.indices) {
      double w = 0.0;
      const double sup = pass.point(strong.ds->points[idx], true, scale, w);
      sum += sup + w;
    }
    report.strong_term = sum / static_cast<double>(strong.size());
  }
  if (weak.size() > 0) {
    const double scale = cfg.lambda_weak / static_cast<double>(weak.size());
    double sum = 0.0;
    for (std::size_t idx : weak.indices) {
      pass.point(weak.ds->points[idx], false, scale, sum);
    }
    report.weak_term = sum / static_cast<double>(weak.size());
  }
  pass.finish();
  report.per_source_weak = pass.per_source_means();
  report.total = cfg.lambda_strong * report.strong_term + cfg.lambda_weak * report.weak_term;
  return report;
}

}  // namespace

std::string loss_report_to_json(const LossReport& report) {
  nlohmann::json j{{"total", report.total},
                   {"strong_term", report.strong_term},
                   {"weak_term", report.weak_term},
                   {"per_source_weak", report.per_source_weak}};
  return j.dump();
}

double weak_marginal_loglik(const LabelModel& label, const EndModel& end,
                            std::span<const double> x, std::span<const int> votes) {
  if (static_cast<int>(votes.size()) != num_sources(label)) {
    throw std::invalid_argument("weak_marginal_loglik: vote count mismatch");
  }
  // Route through the shared pass so every caller computes the identical sum.
  WeakDataset ds;
  ds.num_classes = num_classes(label);
  ds.num_sources = num_sources(label);
  ds.feature_dim = static_cast<int>(x.size());
  DataPoint pt;
  pt.id = "point";
  pt.features.assign(x.begin(), x.end());
  pt.weak_labels.assign(votes.begin(), votes.end());
  ds.points.push_back(std::move(pt));

  Pass pass(label, end, {}, {});
  double weak = 0.0;
  pass.point(ds.points.front(), false, 0.0, weak);
  return weak;
}

double strong_loglik_term(const LabelModel& label, const EndModel& end, const BatchRef& batch) {
  if (batch.size() == 0) return 0.0;
  Pass pass(label, end, {}, {});
  double sum = 0.0;
  for (std::size_t idx : batch.indices) {
    double w = 0.0;
    const double sup = pass.point(batch.ds->points[idx], true, 0.0, w);
    sum += sup + w;
  }
  return sum / static_cast<double>(batch.size());
}

double weak_loglik_term(const LabelModel& label, const EndModel& end, const BatchRef& batch) {
  if (batch.size() == 0) return 0.0;
  Pass pass(label, end, {}, {});
  double sum = 0.0;
  for (std::size_t idx : batch.indices) {
    pass.point(batch.ds->points[idx], false, 0.0, sum);
  }
  return sum / static_cast<double>(batch.size());
}

LossReport combined_objective(const LabelModel& label, const EndModel& end,
                              const BatchRef& strong, const BatchRef& weak,
                              const ObjectiveConfig& cfg) {
  return run_pass(label, end, strong, weak, cfg, {}, {});
}

LossReport combined_objective_and_gradient(const LabelModel& label, const EndModel& end,
                                           const BatchRef& strong, const BatchRef& weak,
                                           const ObjectiveConfig& cfg,
                                           std::span<double> end_grad,
                                           std::span<double> label_grad) {
  return run_pass(label, end, strong, weak, cfg, end_grad, label_grad);
}

}  // namespace iwl
