#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iwl/math.hpp"

namespace iwl {

enum class Split { train, validation, test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

/// One example. Internally classes are 1..C and weak label 0 means the source
/// abstained; on disk (see load_dataset) classes are 0-indexed and abstain is
/// -1, matching the WRENCH convention.
struct DataPoint {
  std::string id;
  std::vector<double> features;
  std::vector<int> weak_labels;          // values in {0..C}, 0 = abstain
  std::optional<int> strong_label;       // value in {1..C} when present
};

struct WeakDataset {
  std::vector<DataPoint> points;
  int num_classes = 0;   // C >= 2
  int num_sources = 0;   // K >= 0 (0 = features + labels only)
  int feature_dim = 0;   // D >= 1
  Split split = Split::train;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Checks per-point shape and label ranges; validation/test splits must carry
/// a strong label on every point. Throws std::invalid_argument naming the
/// offending record.
void validate_dataset(const WeakDataset& ds);

/// Reads a JSON Lines file: a header line {"num_classes","num_sources",
/// "feature_dim"} followed by one record per line {"id","features",
/// "weak_labels","label"} with 0-indexed classes and -1 for abstain.
/// Labels and votes are shifted to the internal 1..C / 0-abstain encoding.
WeakDataset load_dataset(const std::string& path, Split split = Split::train);

/// Inverse of load_dataset (external encoding, UTF-8, LF line endings).
void save_dataset(const WeakDataset& ds, const std::string& path);

struct StrongFractionPlan {
  double fraction = 1.0;   // in [0,1]
  std::uint64_t seed = 0;
};

/// Splits a fully labeled train set into (S, W): a uniform-random subset of
/// round(fraction*N) points keeps its labels and forms S, the rest lose their
/// labels and form W. Deterministic per seed; ids partition the input.
std::pair<WeakDataset, WeakDataset> apply_strong_fraction(const WeakDataset& ds,
                                                          const StrongFractionPlan& plan);

/// Concatenates two datasets with identical (C, K, D); keeps a's split tag.
WeakDataset merge(const WeakDataset& a, const WeakDataset& b);

/// Yields index batches over a strong set and a weak set independently, by
/// shuffled epochs with tail chunks (e.g. 300 points, batch 128 -> 128,128,44).
/// An empty set yields empty batches and consumes no randomness. The two
/// streams draw from separate generators derived from one seed, so the
/// strong-side sequence is unchanged by the weak set's presence or size.
class DualBatchSampler {
 public:
  DualBatchSampler(std::size_t strong_size, std::size_t weak_size, int batch_size,
                   std::uint64_t seed);
  DualBatchSampler(const WeakDataset& strong, const WeakDataset& weak, int batch_size,
                   std::uint64_t seed);

  struct Batch {
    std::vector<std::size_t> strong;
    std::vector<std::size_t> weak;
  };

  Batch next();

 private:
  struct EpochStream {
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    Rng rng;

    EpochStream(std::size_t n, std::uint64_t seed);
    void fill(int batch_size, std::vector<std::size_t>& out);
  };

  int batch_size_;
  EpochStream strong_;
  EpochStream weak_;
};

struct CoverageStats {
  std::vector<double> source_coverage;   // fraction of non-abstain votes per source
  double overall_coverage = 0.0;         // fraction of points with >=1 vote
};

CoverageStats coverage_stats(const WeakDataset& ds);

}  // namespace iwl
