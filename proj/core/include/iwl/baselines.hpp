#pragma once

#include <span>
#include <vector>

#include "iwl/dataset.hpp"
#include "iwl/end_model.hpp"
#include "iwl/train.hpp"

namespace iwl {

/// A denoised training target for one point. Unvoted points (all sources
/// abstained) carry no distribution and are excluded from denoised training.
struct SoftLabel {
  std::vector<double> probs;  // over C classes; empty iff !voted
  bool voted = false;
  enum class Origin { mv, strong_replaced } origin = Origin::mv;
};

/// Distribution proportional to the non-abstain vote counts; all-abstain
/// points come back unvoted.
SoftLabel majority_vote_soft(std::span<const int> votes, int num_classes);
std::vector<SoftLabel> majority_vote_soft(const WeakDataset& ds);

/// The "-S" route: points carrying a strong label get it as a one-hot
/// (overriding the vote-based distribution); everything else is unchanged.
std::vector<SoftLabel> strong_replace(std::vector<SoftLabel> labels, const WeakDataset& ds);

/// Two-stage training: minimize the expected cross-entropy
/// -sum_j q(j) log p(j|x) over the voted points, with the shared
/// optimizer/early-stopping loop. labels must align with ds.points.
TrainResult noise_aware_train(const EndModel& end0, const WeakDataset& ds,
                              const std::vector<SoftLabel>& labels,
                              const WeakDataset& validation, const TrainConfig& cfg);

/// Supervised cross-entropy on the labeled set alone, ignoring all weak
/// votes — the floor any weak-supervision method should beat.
TrainResult labels_only_train(const EndModel& end0, const WeakDataset& strong,
                              const WeakDataset& validation, const TrainConfig& cfg);

}  // namespace iwl
