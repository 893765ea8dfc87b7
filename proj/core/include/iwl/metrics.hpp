#pragma once

#include <span>
#include <vector>

#include "iwl/dataset.hpp"
#include "iwl/end_model.hpp"

namespace iwl {

/// Classification quality on internal labels 1..C. For C=2 the F1 is the
/// binary score of class 2 (external class 1, the conventional positive
/// class after the +1 shift); for C>2 it is the unweighted macro average.
/// A class with zero precision+recall contributes F1 = 0, never 1 — this
/// includes classes that are absent from both predictions and labels.
struct Metrics {
  double f1 = 0.0;
  double accuracy = 0.0;
  int num_classes = 0;
  std::vector<int> confusion;  // C x C row-major; row = true class, col = predicted

  int at(int true_cls, int predicted_cls) const {
    return confusion[(true_cls - 1) * num_classes + (predicted_cls - 1)];
  }
};

Metrics f1_score(std::span<const int> predictions, std::span<const int> labels, int num_classes);

/// F1 of argmax predictions against the dataset's strong labels (which must
/// all be present).
double evaluate_f1(const EndModel& model, const WeakDataset& ds);

}  // namespace iwl
