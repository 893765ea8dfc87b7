#include "iwl/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace iwl {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::invalid_argument(where + ": " + what);
}

void check_point(const DataPoint& p, const WeakDataset& ds, const std::string& where) {
  if (static_cast<int>(p.features.size()) != ds.feature_dim) {
    fail(where, "features has " + std::to_string(p.features.size()) + " entries, expected " +
                    std::to_string(ds.feature_dim));
  }
  if (static_cast<int>(p.weak_labels.size()) != ds.num_sources) {
    fail(where, "weak_labels has " + std::to_string(p.weak_labels.size()) + " entries, expected " +
                    std::to_string(ds.num_sources));
  }
  for (int v : p.weak_labels) {
    if (v < 0 || v > ds.num_classes) {
      fail(where, "weak label " + std::to_string(v) + " outside {0.." +
                      std::to_string(ds.num_classes) + "}");
    }
  }
  if (p.strong_label) {
    if (*p.strong_label < 1 || *p.strong_label > ds.num_classes) {
      fail(where, "label " + std::to_string(*p.strong_label) + " outside {1.." +
                      std::to_string(ds.num_classes) + "}");
    }
  }
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  throw std::logic_error("unknown split");
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation" || name == "valid" || name == "dev") return Split::validation;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split name: " + name);
}

void validate_dataset(const WeakDataset& ds) {
  if (ds.num_classes < 2) fail("dataset", "num_classes must be >= 2");
  if (ds.num_sources < 0) fail("dataset", "num_sources must be >= 0");
  if (ds.feature_dim < 1) fail("dataset", "feature_dim must be >= 1");
  if (ds.empty()) fail("dataset", "empty dataset");
  const bool need_label = ds.split != Split::train;
  for (const DataPoint& p : ds.points) {
    const std::string where = "record '" + p.id + "'";
    check_point(p, ds, where);
    if (need_label && !p.strong_label) {
      fail(where, to_string(ds.split) + " split requires a label on every point");
    }
  }
}

WeakDataset load_dataset(const std::string& path, Split split) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_dataset: cannot open " + path);

  WeakDataset ds;
  ds.split = split;

  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(path + ":" + std::to_string(line_no), std::string("invalid JSON: ") + e.what());
    }
    const std::string where =
        path + ":" + std::to_string(line_no) +
        (j.contains("id") && j["id"].is_string() ? " record '" + j["id"].get<std::string>() + "'"
                                                 : "");
    if (!saw_header) {
      for (const char* key : {"num_classes", "num_sources", "feature_dim"}) {
        if (!j.contains(key) || !j[key].is_number_integer()) {
          fail(where, std::string("header missing integer field '") + key + "'");
        }
      }
      ds.num_classes = j["num_classes"].get<int>();
      ds.num_sources = j["num_sources"].get<int>();
      ds.feature_dim = j["feature_dim"].get<int>();
      if (ds.num_classes < 2) fail(where, "num_classes must be >= 2");
      if (ds.num_sources < 0) fail(where, "num_sources must be >= 0");
      if (ds.feature_dim < 1) fail(where, "feature_dim must be >= 1");
      saw_header = true;
      continue;
    }

    DataPoint p;
    if (!j.contains("id") || !j["id"].is_string()) fail(where, "missing string field 'id'");
    p.id = j["id"].get<std::string>();
    if (!j.contains("features") || !j["features"].is_array()) fail(where, "missing features");
    for (const json& v : j["features"]) {
      if (!v.is_number()) fail(where, "non-numeric feature value");
      p.features.push_back(v.get<double>());
    }
    if (!j.contains("weak_labels") || !j["weak_labels"].is_array()) {
      fail(where, "missing weak_labels");
    }
    for (const json& v : j["weak_labels"]) {
      if (!v.is_number_integer()) fail(where, "non-integer weak label");
      const int ext = v.get<int>();
      if (ext < -1 || ext >= ds.num_classes) {
        fail(where, "weak label " + std::to_string(ext) + " outside {-1.." +
                        std::to_string(ds.num_classes - 1) + "}");
      }
      p.weak_labels.push_back(ext + 1);  // -1 (abstain) -> 0, class c -> c+1
    }
    if (j.contains("label") && !j["label"].is_null()) {
      if (!j["label"].is_number_integer()) fail(where, "non-integer label");
      const int ext = j["label"].get<int>();
      if (ext < 0 || ext >= ds.num_classes) {
        fail(where, "label " + std::to_string(ext) + " outside {0.." +
                        std::to_string(ds.num_classes - 1) + "}");
      }
      p.strong_label = ext + 1;
    }
    check_point(p, ds, where);
    ds.points.push_back(std::move(p));
  }
  if (!saw_header) fail(path, "missing header line");
  if (ds.empty()) fail(path, "empty dataset");
  validate_dataset(ds);
  return ds;
}

void save_dataset(const WeakDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: LF line endings everywhere
  if (!out) throw std::invalid_argument("save_dataset: cannot open " + path);
  json header{{"num_classes", ds.num_classes},
              {"num_sources", ds.num_sources},
              {"feature_dim", ds.feature_dim}};
  out << header.dump() << '\n';
  for (const DataPoint& p : ds.points) {
    json rec;
    rec["id"] = p.id;
    rec["features"] = p.features;
    json votes = json::array();
    for (int v : p.weak_labels) votes.push_back(v - 1);
    rec["weak_labels"] = std::move(votes);
    rec["label"] = p.strong_label ? json(*p.strong_label - 1) : json(nullptr);
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

std::pair<WeakDataset, WeakDataset> apply_strong_fraction(const WeakDataset& ds,
                                                          const StrongFractionPlan& plan) {
  if (!(plan.fraction >= 0.0 && plan.fraction <= 1.0)) {
    throw std::invalid_argument("apply_strong_fraction: fraction must be in [0,1]");
  }
  for (const DataPoint& p : ds.points) {
    if (!p.strong_label) {
      fail("record '" + p.id + "'", "apply_strong_fraction requires labels on every point");
    }
  }
  const std::size_t n = ds.size();
  const std::size_t n_strong =
      static_cast<std::size_t>(std::llround(plan.fraction * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(plan.seed);
  rng.shuffle(order);

  std::vector<bool> keep(n, false);
  for (std::size_t i = 0; i < n_strong; ++i) keep[order[i]] = true;

  WeakDataset strong = ds;
  WeakDataset weak = ds;
  strong.points.clear();
  weak.points.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) {
      strong.points.push_back(ds.points[i]);
    } else {
      weak.points.push_back(ds.points[i]);
      weak.points.back().strong_label.reset();
    }
  }
  return {std::move(strong), std::move(weak)};
}

WeakDataset merge(const WeakDataset& a, const WeakDataset& b) {
  if (a.num_classes != b.num_classes || a.num_sources != b.num_sources ||
      a.feature_dim != b.feature_dim) {
    throw std::invalid_argument("merge: datasets have different shapes");
  }
  WeakDataset out = a;
  out.points.insert(out.points.end(), b.points.begin(), b.points.end());
  return out;
}

DualBatchSampler::EpochStream::EpochStream(std::size_t n, std::uint64_t seed)
    : order(n), pos(n), rng(seed) {
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
}

void DualBatchSampler::EpochStream::fill(int batch_size, std::vector<std::size_t>& out) {
  out.clear();
  if (order.empty()) return;
  if (pos == order.size()) {
    rng.shuffle(order);
    pos = 0;
  }
  const std::size_t take = std::min<std::size_t>(batch_size, order.size() - pos);
  out.assign(order.begin() + pos, order.begin() + pos + take);
  pos += take;
}

DualBatchSampler::DualBatchSampler(std::size_t strong_size, std::size_t weak_size, int batch_size,
                                   std::uint64_t seed)
    : batch_size_(batch_size),
      strong_(strong_size, Rng::derive(seed, 0)),
      weak_(weak_size, Rng::derive(seed, 1)) {
  if (batch_size < 1) throw std::invalid_argument("DualBatchSampler: batch_size must be >= 1");
  if (strong_size == 0 && weak_size == 0) {
    throw std::invalid_argument("DualBatchSampler: no training data");
  }
}

DualBatchSampler::DualBatchSampler(const WeakDataset& strong, const WeakDataset& weak,
                                   int batch_size, std::uint64_t seed)
    : DualBatchSampler(strong.size(), weak.size(), batch_size, seed) {}

DualBatchSampler::Batch DualBatchSampler::next() {
  Batch batch;
  strong_.fill(batch_size_, batch.strong);
  weak_.fill(batch_size_, batch.weak);
  return batch;
}

CoverageStats coverage_stats(const WeakDataset& ds) {
  if (ds.empty()) throw std::invalid_argument("coverage_stats: empty dataset");
  CoverageStats stats;
  stats.source_coverage.assign(ds.num_sources, 0.0);
  std::size_t covered = 0;
  for (const DataPoint& p : ds.points) {
    bool any = false;
    for (int k = 0; k < ds.num_sources; ++k) {
      if (p.weak_labels[k] != 0) {
        stats.source_coverage[k] += 1.0;
        any = true;
      }
    }
    if (any) ++covered;
  }
  const double n = static_cast<double>(ds.size());
  for (double& c : stats.source_coverage) c /= n;
  stats.overall_coverage = static_cast<double>(covered) / n;
  return stats;
}

}  // namespace iwl
