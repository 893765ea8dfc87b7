#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iwl/dataset.hpp"
#include "iwl/end_model.hpp"
#include "iwl/label_model.hpp"

namespace iwl {

enum class TruthKind { logistic, gaussian_clusters };

std::string to_string(TruthKind kind);
TruthKind truth_kind_from_string(const std::string& name);

/// Fully specified generating process: feature law, true conditional
/// p(y|x), and true per-source transitions — everything a recovery claim
/// needs to be checked against.
struct SyntheticSpec {
  int num_classes = 2;
  int feature_dim = 2;
  int n_train = 1000;
  int n_validation = 500;
  int n_test = 500;
  TruthKind truth = TruthKind::logistic;
  double weight_norm = 4.0;         // logistic: Frobenius norm of the weight matrix
  double cluster_separation = 3.0;  // gaussian clusters: norm of each class mean
  std::vector<TransitionMatrix> transitions;  // one per source
  /// When nonempty (same length as transitions): points with x[0] >= 0 use
  /// these instead — sources whose reliability depends on where x lives.
  std::vector<TransitionMatrix> transitions_region_b;
  std::uint64_t seed = 0;

  int num_sources() const { return static_cast<int>(transitions.size()); }
  bool region_dependent() const { return !transitions_region_b.empty(); }
};

/// The realized truth: the spec plus the sampled model parameters.
struct GroundTruth {
  SyntheticSpec spec;
  std::vector<double> weights;  // logistic: C x D row-major
  std::vector<double> means;    // gaussian clusters: C x D row-major

  std::vector<double> true_proba(std::span<const double> x) const;
  const TransitionMatrix& transition(int k, std::span<const double> x) const;
  std::vector<double> sample_x(Rng& rng) const;
};

struct SyntheticData {
  WeakDataset train;
  WeakDataset validation;
  WeakDataset test;
  GroundTruth truth;
};

/// Vote = true class with probability `accuracy` (within the non-abstain
/// mass), abstains with probability abstain_rate, spreads the rest evenly
/// over the wrong classes.
TransitionMatrix accurate_transition(int num_classes, double accuracy, double abstain_rate);
/// All C+1 outcomes equally likely regardless of the class (rank 1).
TransitionMatrix uniform_transition(int num_classes);
/// Vote = class with probability 1; never abstains.
TransitionMatrix identity_transition(int num_classes);
/// Column softmax of standard-normal logits.
TransitionMatrix random_transition(int num_classes, Rng& rng);
/// accurate_transition with the class identities permuted: vote j+1 has the
/// accurate mass when the true class is perm[j]+1. perm is 0-based.
TransitionMatrix permuted_transition(int num_classes, double accuracy, double abstain_rate,
                                     std::span<const int> perm);

/// Samples the three splits (train fully labeled; labels everywhere) plus
/// the truth handle. Deterministic per spec.seed, with independent derived
/// streams per split.
SyntheticData generate(const SyntheticSpec& spec);

/// (1/2) sum_i |p_i - q_i|, in [0,1] for distributions.
double total_variation(std::span<const double> p, std::span<const double> q);

struct RecoveryScore {
  double mean_tv = 0.0;
  double max_tv = 0.0;
};

/// Total variation between the model's p(y|x) and the true conditional over
/// probe points drawn from the spec's feature law.
RecoveryScore recovery_score(const EndModel& model, const GroundTruth& truth, int num_probes,
                             std::uint64_t seed);

/// Sidecar file with the full generating process; round-trips bit-exact.
void save_ground_truth(const GroundTruth& truth, const std::string& path);
GroundTruth load_ground_truth(const std::string& path);

}  // namespace iwl
