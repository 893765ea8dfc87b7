#include "iwl/metrics.hpp"

#include <stdexcept>
#include <string>

namespace iwl {

namespace {

double binary_f1(long tp, long fp, long fn) {
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

Metrics f1_score(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("f1_score: predictions and labels differ in length");
  }
  if (predictions.empty()) throw std::invalid_argument("f1_score: empty inputs");
  if (num_classes < 2) throw std::invalid_argument("f1_score: num_classes must be >= 2");

  Metrics m;
  m.num_classes = num_classes;
  m.confusion.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int y = labels[n];
    const int yhat = predictions[n];
    if (y < 1 || y > num_classes) {
      throw std::invalid_argument("f1_score: label " + std::to_string(y) + " outside {1.." +
                                  std::to_string(num_classes) + "}");
    }
    if (yhat < 1 || yhat > num_classes) {
      throw std::invalid_argument("f1_score: prediction " + std::to_string(yhat) +
                                  " outside {1.." + std::to_string(num_classes) + "}");
    }
    ++m.confusion[static_cast<std::size_t>(y - 1) * num_classes + (yhat - 1)];
  }

  long correct = 0;
  for (int c = 0; c < num_classes; ++c) {
    correct += m.confusion[static_cast<std::size_t>(c) * num_classes + c];
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());

  auto class_f1 = [&](int c) {  // c is 0-based
    const long tp = m.confusion[static_cast<std::size_t>(c) * num_classes + c];
    long fp = 0, fn = 0;
    for (int o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fp += m.confusion[static_cast<std::size_t>(o) * num_classes + c];
      fn += m.confusion[static_cast<std::size_t>(c) * num_classes + o];
    }
    return binary_f1(tp, fp, fn);
  };

  if (num_classes == 2) {
    m.f1 = class_f1(1);  // positive class = internal class 2
  } else {
    double sum = 0.0;
    for (int c = 0; c < num_classes; ++c) sum += class_f1(c);
    m.f1 = sum / num_classes;
  }
  return m;
}

double evaluate_f1(const EndModel& model, const WeakDataset& ds) {
  if (ds.empty()) throw std::invalid_argument("evaluate_f1: empty dataset");
  std::vector<int> preds(ds.size(), 0);
  std::vector<int> labels(ds.size(), 0);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const DataPoint& p = ds.points[n];
    if (!p.strong_label) {
      throw std::invalid_argument("evaluate_f1: record '" + p.id + "' has no label");
    }
    preds[n] = argmax_class(model, p.features);
    labels[n] = *p.strong_label;
  }
  return f1_score(preds, labels, ds.num_classes).f1;
}

}  // namespace iwl
