#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "iwl/dataset.hpp"
#include "iwl/mlp.hpp"

namespace iwl {

/// Column-stochastic (C+1) x C matrix: entry (i, j) is the probability that a
/// source emits vote i (0 = abstain, 1..C = classes) when the true class is
/// j+1. Stored column-major. A plain value type: stochasticity is the
/// producer's responsibility (see is_column_stochastic).
struct TransitionMatrix {
  int num_classes = 0;
  std::vector<double> entries;  // (C+1)*C, entries[col*(C+1) + row]

  static TransitionMatrix zeros(int num_classes);

  int rows() const { return num_classes + 1; }
  int cols() const { return num_classes; }
  /// vote in {0..C}, cls in {1..C}.
  double prob(int vote, int cls) const { return entries[(cls - 1) * rows() + vote]; }
  double& at(int vote, int cls) { return entries[(cls - 1) * rows() + vote]; }
  std::span<const double> column(int cls) const {
    return {entries.data() + (cls - 1) * rows(), static_cast<std::size_t>(rows())};
  }
};

bool is_column_stochastic(const TransitionMatrix& t, double tol = 1e-9);

/// Softmax over each length-(C+1) column of `logits` (same layout as
/// TransitionMatrix::entries) into `out`.
void column_softmax(std::span<const double> logits, int num_classes, std::span<double> out);

/// One transition matrix per source, shared by all datapoints. Realized
/// matrices are the column-softmax of the logits, so any finite parameter
/// value is a valid distribution.
struct GlobalLabelModel {
  int num_classes = 0;
  int num_sources = 0;
  std::vector<double> logits;  // K * (C+1) * C, source-major, column-major per source

  static GlobalLabelModel make(int num_classes, int num_sources);
  std::size_t source_offset(int k) const {
    return static_cast<std::size_t>(k) * (num_classes + 1) * num_classes;
  }
  /// Overwrites source k's logits with elementwise log of the matrix.
  void set_source(int k, const TransitionMatrix& t);
};

/// A network mapping x to all K transition matrices at once (output
/// K*(C+1)*C logits in GlobalLabelModel order, column-softmaxed per source).
struct AmortizedLabelModel {
  int num_classes = 0;
  int num_sources = 0;
  int input_dim = 0;
  int hidden_width = 100;
  std::vector<double> params;

  /// Glorot-uniform hidden layers drawn from rng, zeroed output layer, so a
  /// fresh model realizes exactly uniform transitions at every x.
  static AmortizedLabelModel make(int num_classes, int num_sources, int input_dim,
                                  int hidden_width, Rng& rng);
  MlpShape shape() const;
};

/// Mixture extension: a network maps x to weights over H discrete states and
/// each state carries its own K global transition matrices, inducing
/// dependence among sources. H=1 collapses to GlobalLabelModel exactly.
struct LatentDependentLabelModel {
  int num_classes = 0;
  int num_sources = 0;
  int input_dim = 0;
  int hidden_width = 100;
  int num_states = 2;
  std::vector<double> params;  // mixture net params, then H*K*(C+1)*C state logits

  /// Mixture net gets Glorot-uniform hidden layers drawn from rng with a
  /// zeroed output layer (uniform p(h|x) everywhere); state logits start zero.
  static LatentDependentLabelModel make(int num_classes, int num_sources, int input_dim,
                                        int num_states, int hidden_width, Rng& rng);
  MlpShape mixture_shape() const;
  std::size_t state_logits_offset() const { return mixture_shape().num_params(); }
  std::size_t state_source_offset(int h, int k) const {
    return state_logits_offset() +
           (static_cast<std::size_t>(h) * num_sources + k) * (num_classes + 1) * num_classes;
  }
};

using LabelModel = std::variant<GlobalLabelModel, AmortizedLabelModel, LatentDependentLabelModel>;

int num_classes(const LabelModel& model);
int num_sources(const LabelModel& model);
std::string variant_name(const LabelModel& model);

/// The flat trainable parameter block (logits or network weights).
std::vector<double>& label_model_params(LabelModel& model);
const std::vector<double>& label_model_params(const LabelModel& model);

/// Realized per-source matrices at x. Global models ignore x; amortized
/// models require it; latent models return the mixture-averaged matrices
/// sum_h p(h|x) T_{h,k}. Pass an empty span for "no input".
std::vector<TransitionMatrix> realized_transitions(const LabelModel& model,
                                                   std::span<const double> x);

/// Latent-model pieces: p(h|x) and the H*K per-state matrices (index h*K+k).
std::vector<double> mixture_weights(const LatentDependentLabelModel& model,
                                    std::span<const double> x);
std::vector<TransitionMatrix> state_transitions(const LatentDependentLabelModel& model);

/// p(vote | class [, x]) for source k; vote in {0..C}, cls in {1..C}.
double transition_prob(const LabelModel& model, int k, std::span<const double> x, int vote,
                       int cls);

/// Majority-vote pseudo-labels: per point, the most-voted non-abstain class;
/// ties and all-abstain points drawn uniformly from the tied set (seeded).
std::vector<int> majority_vote_labels(const WeakDataset& ds, std::uint64_t seed);

/// Initializes a label model from majority-vote pseudo-labels: per-source
/// vote-vs-pseudo-label counts, add-one smoothed and column-normalized, give
/// estimated matrices; logits are their elementwise log. The global model
/// takes the logits directly; the amortized model gets small-random hidden
/// layers, a zero final weight layer, and the logits as final biases (so
/// every x initially realizes the estimated matrices); the latent model adds
/// small seeded per-state noise to break state symmetry and starts with a
/// uniform mixture. Throws if no source ever votes.
void majority_vote_init(const WeakDataset& ds, LabelModel& model, std::uint64_t seed);

struct InjectivityReport {
  bool injective = false;
  int rank = 0;
  double min_singular_value = 0.0;
};

/// Numerical-rank test: injective iff the smallest singular value of the
/// (C+1) x C matrix exceeds tol.
InjectivityReport check_injective(const TransitionMatrix& t, double tol = 1e-8);

/// The likelihood-preserving reparameterization (phi * m^{-1}, m * p): both
/// pairs induce identical vote marginals sum_j phi(v|j) p(j). m is C x C
/// row-major and must be invertible; keeping the outputs inside the
/// probability simplex is the caller's concern (permutations always qualify).
std::pair<std::vector<TransitionMatrix>, std::vector<double>> construct_equivalent_pair(
    const std::vector<TransitionMatrix>& phi, const std::vector<double>& p,
    std::span<const double> m);

/// Exact marginalization sum_h p(h|x) prod_k p(vote_k | y, h); votes use the
/// internal encoding (0 = abstain), y in {1..C}.
double latent_marginal_prob(const LatentDependentLabelModel& model, std::span<const double> x,
                            std::span<const int> votes, int y);

/// JSON checkpoint (variant tag + shapes + flat parameters); bit-exact.
void save_label_model(const LabelModel& model, const std::string& path);
LabelModel load_label_model(const std::string& path);

}  // namespace iwl
