#pragma once

#include <span>
#include <string>
#include <vector>

#include "iwl/mlp.hpp"

namespace iwl {

enum class EndModelKind { linear, mlp2 };

std::string to_string(EndModelKind kind);
EndModelKind end_model_kind_from_string(const std::string& name);

/// Classifier p(y|x): softmax over a linear map or a two-hidden-layer
/// rectified-linear net (default width 100). Classes are 1..C.
struct EndModel {
  EndModelKind kind = EndModelKind::mlp2;
  int input_dim = 0;
  int num_classes = 0;
  int hidden_width = 100;
  std::vector<double> params;

  MlpShape shape() const;

  /// Glorot-uniform weights, zero biases, drawn from rng.
  static EndModel make(EndModelKind kind, int input_dim, int num_classes, int hidden_width,
                       Rng& rng);
};

/// Class logits for x; fills the activation cache used by end_model_backward.
std::vector<double> class_logits(const EndModel& model, std::span<const double> x,
                                 MlpCache& cache);

std::vector<double> predict_proba(const EndModel& model, std::span<const double> x);

/// Highest-probability class in 1..C; lowest index wins exact ties.
int argmax_class(const EndModel& model, std::span<const double> x);

/// Accumulates d(loss)/d(params) into param_grad given d(loss)/d(logits) and
/// the cache from class_logits. Throws if the cache is missing or stale.
void end_model_backward(const EndModel& model, const MlpCache& cache,
                        std::span<const double> logit_grad, std::span<double> param_grad,
                        std::vector<double>* input_grad = nullptr);

/// JSON checkpoint (shapes + flat parameter array); round-trips bit-exact.
void save_end_model(const EndModel& model, const std::string& path);
EndModel load_end_model(const std::string& path);

}  // namespace iwl
