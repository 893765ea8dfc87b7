// Microbenchmarks for the numeric hot paths: softmax, weak-vote marginals,
// the combined objective with gradients, and the optimizer step.
#include <benchmark/benchmark.h>

#include <span>
#include <vector>

#include "iwl/dataset.hpp"
#include "iwl/end_model.hpp"
#include "iwl/label_model.hpp"
#include "iwl/math.hpp"
#include "iwl/objective.hpp"
#include "iwl/train.hpp"

namespace {

iwl::WeakDataset make_dataset(int num_classes, int num_sources, int feature_dim, int n,
                              std::uint64_t seed) {
  iwl::WeakDataset ds;
  ds.num_classes = num_classes;
  ds.num_sources = num_sources;
  ds.feature_dim = feature_dim;
  ds.split = iwl::Split::train;
  iwl::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    iwl::DataPoint p;
    p.id = "b-" + std::to_string(i);
    p.features.resize(static_cast<std::size_t>(feature_dim));
    for (double& f : p.features) f = rng.normal();
    p.strong_label = 1 + static_cast<int>(rng.uniform_int(num_classes));
    p.weak_labels.resize(static_cast<std::size_t>(num_sources));
    for (int& v : p.weak_labels) {
      v = static_cast<int>(rng.uniform_int(num_classes + 1));
    }
    ds.points.push_back(std::move(p));
  }
  return ds;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

void bm_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  iwl::Rng rng(1);
  std::vector<double> logits(n);
  for (double& v : logits) v = 3.0 * rng.normal();
  for (auto _ : state) {
    auto probs = iwl::softmax(logits);
    benchmark::DoNotOptimize(probs.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n));
}

void bm_weak_marginal(benchmark::State& state) {
  const int num_sources = static_cast<int>(state.range(0));
  const int num_classes = 4;
  const iwl::WeakDataset ds = make_dataset(num_classes, num_sources, 8, 1, 2);
  iwl::Rng rng(3);
  iwl::GlobalLabelModel g = iwl::GlobalLabelModel::make(num_classes, num_sources);
  for (double& v : g.logits) v = rng.normal();
  const iwl::LabelModel label = g;
  const iwl::EndModel end =
      iwl::EndModel::make(iwl::EndModelKind::linear, 8, num_classes, 0, rng);
  const auto& point = ds.points.front();
  for (auto _ : state) {
    const double ll = iwl::weak_marginal_loglik(label, end, point.features, point.weak_labels);
    benchmark::DoNotOptimize(ll);
  }
}

void bm_objective_gradient_shared(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const iwl::WeakDataset ds = make_dataset(2, 5, 16, batch, 4);
  const auto idx = all_indices(ds.points.size());
  const iwl::BatchRef strong{&ds, idx};
  const iwl::BatchRef weak{&ds, idx};
  iwl::Rng rng(5);
  iwl::GlobalLabelModel g = iwl::GlobalLabelModel::make(2, 5);
  for (double& v : g.logits) v = rng.normal();
  const iwl::LabelModel label = g;
  iwl::EndModel end = iwl::EndModel::make(iwl::EndModelKind::mlp2, 16, 2, 64, rng);
  std::vector<double> eg(end.params.size());
  std::vector<double> lg(g.logits.size());
  const iwl::ObjectiveConfig cfg{1.0, 1.0};
  for (auto _ : state) {
    std::fill(eg.begin(), eg.end(), 0.0);
    std::fill(lg.begin(), lg.end(), 0.0);
    const auto report = iwl::combined_objective_and_gradient(label, end, strong, weak, cfg,
                                                             eg, lg);
    benchmark::DoNotOptimize(report.total);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * batch);
}

void bm_objective_gradient_amortized(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const iwl::WeakDataset ds = make_dataset(2, 5, 16, batch, 6);
  const auto idx = all_indices(ds.points.size());
  const iwl::BatchRef strong{&ds, idx};
  const iwl::BatchRef weak{&ds, idx};
  iwl::Rng rng(7);
  iwl::AmortizedLabelModel a = iwl::AmortizedLabelModel::make(2, 5, 16, 64, rng);
  for (double& v : a.params) v = 0.1 * rng.normal();
  const iwl::LabelModel label = a;
  iwl::EndModel end = iwl::EndModel::make(iwl::EndModelKind::mlp2, 16, 2, 64, rng);
  std::vector<double> eg(end.params.size());
  std::vector<double> lg(a.params.size());
  const iwl::ObjectiveConfig cfg{1.0, 1.0};
  for (auto _ : state) {
    std::fill(eg.begin(), eg.end(), 0.0);
    std::fill(lg.begin(), lg.end(), 0.0);
    const auto report = iwl::combined_objective_and_gradient(label, end, strong, weak, cfg,
                                                             eg, lg);
    benchmark::DoNotOptimize(report.total);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * batch);
}

void bm_adam_step(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  iwl::Rng rng(8);
  std::vector<double> params(n), grads(n);
  for (double& v : params) v = rng.normal();
  for (double& v : grads) v = rng.normal();
  iwl::AdamState st;
  st.reset(n);
  iwl::TrainConfig cfg;
  for (auto _ : state) {
    const iwl::ParamBlock block[1] = {{"all", params, grads}};
    iwl::adam_step(block, st, cfg);
    benchmark::DoNotOptimize(params.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n));
}

BENCHMARK(bm_softmax)->Arg(2)->Arg(16)->Arg(128);
BENCHMARK(bm_weak_marginal)->Arg(3)->Arg(10)->Arg(30);
BENCHMARK(bm_objective_gradient_shared)->Arg(32)->Arg(256);
BENCHMARK(bm_objective_gradient_amortized)->Arg(32)->Arg(256);
BENCHMARK(bm_adam_step)->Arg(1024)->Arg(65536);

}  // namespace

BENCHMARK_MAIN();
