#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iwl/baselines.hpp"
#include "iwl/synthetic.hpp"
#include "iwl/train.hpp"

namespace iwl {

/// Method identifiers: "iWL" (global transitions), "iWLD" (x-dependent
/// transitions), "latent-h" (mixture states), "MV-V" / "MV-S" (two-stage
/// majority vote with strong labels as an extra voter / as overrides), "LO"
/// (labels only).
enum class Method { iwl, iwld, latent_h, mv_v, mv_s, lo };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct ExperimentResult {
  std::string dataset_id;
  std::string method;
  double strong_fraction = 0.0;
  std::uint64_t seed = 0;
  double test_f1 = 0.0;
  double val_f1 = 0.0;
  double wall_time_seconds = 0.0;
  std::string error;  // nonempty: the cell failed and the scores are meaningless
};

struct DatasetTriple {
  WeakDataset train;
  WeakDataset validation;
  WeakDataset test;
};

/// Everything one grid needs: the data source (files or a synthetic spec),
/// the method/fraction/seed axes, and shared model/training settings.
struct ExperimentConfig {
  std::string dataset_id = "synthetic";
  SyntheticSpec synthetic;
  std::string train_path;       // all three paths set = load files,
  std::string validation_path;  // all empty = generate from `synthetic`
  std::string test_path;
  std::vector<std::string> methods = {"iWL"};
  std::vector<double> fractions = {0.1};
  std::vector<std::uint64_t> seeds = {1};
  TrainConfig train;
  EndModelKind end_model = EndModelKind::mlp2;
  int hidden_width = 100;
  int latent_states = 2;
  std::string out_dir = "results";
};

/// JSON config file; absent keys keep their defaults. Transition matrices
/// accept {"accuracy","abstain"[,"permute"]}, {"uniform":true},
/// {"identity":true}, or {"matrix":[[C+1 rows of C values]]}.
ExperimentConfig load_experiment_config(const std::string& path);

/// Accepts either a bare spec object or a full experiment config (then uses
/// its "synthetic" member).
SyntheticSpec load_synthetic_spec(const std::string& path);

DatasetTriple load_config_datasets(const ExperimentConfig& cfg);

/// One grid cell: split off the strong fraction, build the method's models,
/// train, score on the test split. train_result, when given, receives the
/// full training output (for checkpoints and logs).
ExperimentResult run_single(const DatasetTriple& data, const std::string& method,
                            double fraction, std::uint64_t seed, const ExperimentConfig& cfg,
                            TrainResult* train_result = nullptr);

/// Runs every (method, fraction, seed) cell, skipping cells whose result
/// file already exists (resume), recording per-cell failures as error rows,
/// and writing <out_dir>/<dataset_id>/summary.csv at the end. Result files
/// land at <out_dir>/<dataset_id>/<method>/<fraction>/<seed>.json via
/// write-then-rename.
std::vector<ExperimentResult> run_experiment_grid(const ExperimentConfig& cfg);

void save_experiment_result(const ExperimentResult& row, const std::string& path);
ExperimentResult load_experiment_result(const std::string& path);

struct FractionSummary {
  std::string method;
  double fraction = 0.0;
  int n_seeds = 0;             // error rows excluded
  double mean_test_f1 = 0.0;
  double std_test_f1 = 0.0;    // sample standard deviation (n-1), 0 when n < 2
  double mean_val_f1 = 0.0;
  double mean_wall_time = 0.0;
};

std::vector<FractionSummary> summarize(const std::vector<ExperimentResult>& rows);
void write_summary_csv(const std::vector<FractionSummary>& summary, const std::string& path);

/// Per-point realized transition matrices as CSV, one row per (point,
/// source), with a per-source summary column: the mean across matrix entries
/// of the across-point variance (0 for an x-independent model). Rejects
/// global models, whose matrices carry no x-dependence. Point ids must be
/// CSV-safe (no commas, quotes, or newlines).
void export_transitions(const LabelModel& model, const WeakDataset& points,
                        const std::string& path);

struct TransitionRow {
  std::string point_id;
  int source = 0;
  TransitionMatrix matrix;
  double source_variance = 0.0;
};

std::vector<TransitionRow> import_transitions(const std::string& path);

}  // namespace iwl
