#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "iwl/dataset.hpp"
#include "iwl/end_model.hpp"
#include "iwl/experiment.hpp"
#include "iwl/label_model.hpp"
#include "iwl/synthetic.hpp"
#include "iwl/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  const iwl::SyntheticSpec spec = iwl::load_synthetic_spec(config_path);
  const iwl::SyntheticData data = iwl::generate(spec);
  fs::create_directories(out_dir);
  iwl::save_dataset(data.train, out_dir + "/train.jsonl");
  iwl::save_dataset(data.validation, out_dir + "/validation.jsonl");
  iwl::save_dataset(data.test, out_dir + "/test.jsonl");
  iwl::save_ground_truth(data.truth, out_dir + "/truth.json");
  const iwl::CoverageStats cov = iwl::coverage_stats(data.train);
  const json report{{"out_dir", out_dir},
                    {"num_classes", spec.num_classes},
                    {"num_sources", spec.num_sources()},
                    {"feature_dim", spec.feature_dim},
                    {"n_train", data.train.points.size()},
                    {"n_validation", data.validation.points.size()},
                    {"n_test", data.test.points.size()},
                    {"train_overall_coverage", cov.overall_coverage}};
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_train(const iwl::ExperimentConfig& cfg, const std::string& run_dir) {
  const iwl::DatasetTriple data = iwl::load_config_datasets(cfg);
  iwl::TrainResult result;
  const iwl::ExperimentResult row = iwl::run_single(
      data, cfg.methods.front(), cfg.fractions.front(), cfg.seeds.front(), cfg, &result);
  fs::create_directories(run_dir);
  iwl::save_end_model(result.best_end, run_dir + "/end_model.json");
  iwl::save_label_model(result.best_label, run_dir + "/label_model.json");
  iwl::write_training_log(result, run_dir + "/training_log.jsonl");
  iwl::save_experiment_result(row, run_dir + "/result.json");
  const json report{{"method", row.method},
                    {"strong_fraction", row.strong_fraction},
                    {"seed", row.seed},
                    {"val_f1", row.val_f1},
                    {"test_f1", row.test_f1},
                    {"steps_run", result.steps_run},
                    {"best_step", result.best_step},
                    {"wall_time_seconds", row.wall_time_seconds},
                    {"run_dir", run_dir}};
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_grid(const iwl::ExperimentConfig& cfg) {
  const std::vector<iwl::ExperimentResult> rows = iwl::run_experiment_grid(cfg);
  int failures = 0;
  for (const iwl::ExperimentResult& r : rows) {
    if (!r.error.empty()) {
      ++failures;
      std::cerr << "cell failed: " << r.method << " fraction=" << r.strong_fraction
                << " seed=" << r.seed << ": " << r.error << "\n";
    }
  }
  json summary = json::array();
  for (const iwl::FractionSummary& s : iwl::summarize(rows)) {
    summary.push_back({{"method", s.method},
                       {"strong_fraction", s.fraction},
                       {"n_seeds", s.n_seeds},
                       {"mean_test_f1", s.mean_test_f1},
                       {"std_test_f1", s.std_test_f1}});
  }
  const json report{{"cells", rows.size()},
                    {"failed", failures},
                    {"out_dir", cfg.out_dir + "/" + cfg.dataset_id},
                    {"summary", summary}};
  std::cout << report.dump(2) << "\n";
  return failures == 0 ? 0 : 1;
}

int cmd_inspect(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
  const iwl::LabelModel model = iwl::load_label_model(model_path);
  const iwl::WeakDataset ds = iwl::load_dataset(data_path);
  iwl::export_transitions(model, ds, out_path);
  std::cout << "wrote " << out_path << " (" << ds.points.size() << " points x "
            << iwl::num_sources(model) << " sources, " << iwl::variant_name(model)
            << " model)\n";
  return 0;
}

int cmd_stats(const std::string& data_path) {
  const iwl::WeakDataset ds = iwl::load_dataset(data_path);
  const iwl::CoverageStats cov = iwl::coverage_stats(ds);
  std::size_t labeled = 0;
  for (const iwl::DataPoint& p : ds.points) {
    if (p.strong_label.has_value()) ++labeled;
  }
  const json report{{"path", data_path},
                    {"num_points", ds.points.size()},
                    {"num_classes", ds.num_classes},
                    {"num_sources", ds.num_sources},
                    {"feature_dim", ds.feature_dim},
                    {"num_labeled", labeled},
                    {"overall_coverage", cov.overall_coverage},
                    {"source_coverage", cov.source_coverage}};
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"integrated weak learning: joint training of a classifier and a model of its noisy label sources"};
  app.require_subcommand(1);

  std::string config_path;
  std::string method;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::string synth_out = "data";
  std::string run_dir = "run";
  std::string grid_out;
  std::string model_path;
  std::string data_path;
  std::string csv_out = "transitions.csv";

  CLI::App* synth =
      app.add_subcommand("synth", "Generate a synthetic dataset triple plus a ground-truth sidecar");
  synth->add_option("--config", config_path, "JSON spec (bare or under a \"synthetic\" key)")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();

  CLI::App* train_cmd =
      app.add_subcommand("train", "Train one method at one strong fraction and seed");
  train_cmd->add_option("--config", config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--method", method, "Override the config's method list");
  train_cmd->add_option("--strong-fraction", fraction, "Override the config's fraction list")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--seed", seed, "Override the config's seed list");
  train_cmd->add_option("--out", run_dir, "Directory for checkpoints, log, and result")
      ->capture_default_str();

  CLI::App* grid =
      app.add_subcommand("grid", "Run the full method x fraction x seed grid (resumable)");
  grid->add_option("--config", config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  grid->add_option("--method", method, "Restrict to one method");
  grid->add_option("--strong-fraction", fraction, "Restrict to one fraction")
      ->check(CLI::Range(0.0, 1.0));
  grid->add_option("--seed", seed, "Restrict to one seed");
  grid->add_option("--out", grid_out, "Override the config's out_dir");

  CLI::App* inspect = app.add_subcommand(
      "inspect-transitions", "Export per-point realized transition matrices to CSV");
  inspect->add_option("--model", model_path, "Label-model checkpoint (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  inspect->add_option("--data", data_path, "Dataset (JSON Lines)")
      ->required()
      ->check(CLI::ExistingFile);
  inspect->add_option("--out", csv_out, "CSV output path")->capture_default_str();

  CLI::App* stats = app.add_subcommand("stats", "Print dataset shape and vote coverage as JSON");
  stats->add_option("--data", data_path, "Dataset (JSON Lines)")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config_path, synth_out);
    if (train_cmd->parsed() || grid->parsed()) {
      CLI::App* sub = train_cmd->parsed() ? train_cmd : grid;
      iwl::ExperimentConfig cfg = iwl::load_experiment_config(config_path);
      if (sub->count("--method") > 0) cfg.methods = {method};
      if (sub->count("--strong-fraction") > 0) cfg.fractions = {fraction};
      if (sub->count("--seed") > 0) cfg.seeds = {seed};
      if (grid->parsed() && !grid_out.empty()) cfg.out_dir = grid_out;
      return train_cmd->parsed() ? cmd_train(cfg, run_dir) : cmd_grid(cfg);
    }
    if (inspect->parsed()) return cmd_inspect(model_path, data_path, csv_out);
    if (stats->parsed()) return cmd_stats(data_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
