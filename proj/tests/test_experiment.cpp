#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "iwl/experiment.hpp"
#include "iwl/math.hpp"
#include "iwl/metrics.hpp"

using iwl::DatasetTriple;
using iwl::ExperimentConfig;
using iwl::ExperimentResult;
using iwl::Method;
using iwl::Rng;
using iwl::WeakDataset;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

DatasetTriple small_synthetic(std::uint64_t seed) {
  iwl::SyntheticSpec spec;
  spec.num_classes = 2;
  spec.feature_dim = 2;
  spec.n_train = 200;
  spec.n_validation = 60;
  spec.n_test = 60;
  spec.weight_norm = 5.0;
  spec.transitions = {iwl::accurate_transition(2, 0.85, 0.1),
                      iwl::accurate_transition(2, 0.75, 0.1)};
  spec.seed = seed;
  const auto data = iwl::generate(spec);
  return DatasetTriple{data.train, data.validation, data.test};
}

ExperimentConfig fast_config() {
  ExperimentConfig cfg;
  cfg.end_model = iwl::EndModelKind::linear;
  cfg.train.max_steps = 60;
  cfg.train.eval_every = 20;
  cfg.train.batch_size = 32;
  cfg.train.learning_rate = 0.05;
  return cfg;
}

}  // namespace

TEST_CASE("method names round-trip including aliases") {
  CHECK(iwl::to_string(Method::iwl) == "iWL");
  CHECK(iwl::to_string(Method::iwld) == "iWLD");
  CHECK(iwl::to_string(Method::latent_h) == "latent-h");
  CHECK(iwl::to_string(Method::mv_v) == "MV-V");
  CHECK(iwl::to_string(Method::mv_s) == "MV-S");
  CHECK(iwl::to_string(Method::lo) == "LO");
  CHECK(iwl::method_from_string("iWL") == Method::iwl);
  CHECK(iwl::method_from_string("iwld") == Method::iwld);
  CHECK(iwl::method_from_string("LATENT-H") == Method::latent_h);
  CHECK(iwl::method_from_string("mv-v") == Method::mv_v);
  CHECK(iwl::method_from_string("MV-S") == Method::mv_s);
  CHECK(iwl::method_from_string("lo") == Method::lo);
  CHECK_THROWS(iwl::method_from_string("snorkel"));
}

TEST_CASE("experiment configs load every section from JSON") {
  const auto dir = testutil::fresh_dir("expcfg");
  const std::string text = R"({
    "dataset_id": "demo",
    "synthetic": {
      "num_classes": 2,
      "feature_dim": 3,
      "n_train": 50,
      "n_validation": 20,
      "n_test": 20,
      "truth": "gaussian_clusters",
      "cluster_separation": 2.5,
      "seed": 11,
      "transitions": [
        {"accuracy": 0.9, "abstain": 0.1},
        {"uniform": true},
        {"identity": true},
        {"matrix": [[0.1, 0.2], [0.8, 0.1], [0.1, 0.7]]}
      ],
      "transitions_region_b": [
        {"accuracy": 0.6, "abstain": 0.2, "permute": [1, 0]},
        {"uniform": true},
        {"uniform": true},
        {"uniform": true}
      ]
    },
    "methods": ["iWL", "MV-V"],
    "fractions": [0.05, 0.5],
    "seeds": [3, 4, 5],
    "train": {"max_steps": 123, "learning_rate": 0.01, "patience": 17,
              "lambda_weak": 0.5, "mv_init": false, "batch_size": 9},
    "end_model": "linear",
    "hidden_width": 12,
    "latent_states": 4,
    "out_dir": "somewhere"
  })";
  write_text(dir / "cfg.json", text);
  const ExperimentConfig cfg = iwl::load_experiment_config((dir / "cfg.json").string());
  CHECK(cfg.dataset_id == "demo");
  CHECK(cfg.synthetic.feature_dim == 3);
  CHECK(cfg.synthetic.truth == iwl::TruthKind::gaussian_clusters);
  CHECK(cfg.synthetic.cluster_separation == 2.5);
  CHECK(cfg.synthetic.seed == 11);
  REQUIRE(cfg.synthetic.transitions.size() == 4);
  CHECK(cfg.synthetic.transitions[0].prob(1, 1) == doctest::Approx(0.81).epsilon(1e-12));
  CHECK(cfg.synthetic.transitions[1].prob(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(cfg.synthetic.transitions[2].prob(2, 2) == 1.0);
  CHECK(cfg.synthetic.transitions[3].prob(1, 1) == 0.8);
  CHECK(cfg.synthetic.transitions[3].prob(0, 2) == 0.2);
  REQUIRE(cfg.synthetic.transitions_region_b.size() == 4);
  // permute [1,0]: vote 1 accurate when true class is 2.
  CHECK(cfg.synthetic.transitions_region_b[0].prob(1, 2) ==
        doctest::Approx(0.6 * 0.8).epsilon(1e-12));
  CHECK(cfg.methods == std::vector<std::string>{"iWL", "MV-V"});
  CHECK(cfg.fractions == std::vector<double>{0.05, 0.5});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(cfg.train.max_steps == 123);
  CHECK(cfg.train.learning_rate == 0.01);
  CHECK(cfg.train.patience == 17);
  CHECK(cfg.train.lambda_weak == 0.5);
  CHECK(cfg.train.mv_init == false);
  CHECK(cfg.train.batch_size == 9);
  CHECK(cfg.end_model == iwl::EndModelKind::linear);
  CHECK(cfg.hidden_width == 12);
  CHECK(cfg.latent_states == 4);
  CHECK(cfg.out_dir == "somewhere");

  write_text(dir / "bad_method.json", R"({"methods": ["nope"]})");
  CHECK_THROWS(iwl::load_experiment_config((dir / "bad_method.json").string()));
  write_text(dir / "bad_fraction.json", R"({"fractions": [1.5]})");
  CHECK_THROWS(iwl::load_experiment_config((dir / "bad_fraction.json").string()));
}

TEST_CASE("synthetic specs load bare or wrapped") {
  const auto dir = testutil::fresh_dir("specload");
  const std::string bare = R"({"num_classes": 2, "feature_dim": 4, "seed": 9,
    "transitions": [{"accuracy": 0.8, "abstain": 0.0}]})";
  write_text(dir / "bare.json", bare);
  const auto a = iwl::load_synthetic_spec((dir / "bare.json").string());
  CHECK(a.feature_dim == 4);
  CHECK(a.seed == 9);
  CHECK(a.num_sources() == 1);
  CHECK(a.transitions[0].prob(0, 1) == 0.0);

  const std::string wrapped = R"({"dataset_id": "w", "synthetic": )" + bare + "}";
  write_text(dir / "wrapped.json", wrapped);
  const auto b = iwl::load_synthetic_spec((dir / "wrapped.json").string());
  CHECK(b.feature_dim == 4);
  CHECK(b.transitions[0].entries == a.transitions[0].entries);
}

TEST_CASE("datasets come from files when paths are set, else from the spec") {
  const auto dir = testutil::fresh_dir("datasource");
  ExperimentConfig cfg;
  cfg.synthetic.n_train = 40;
  cfg.synthetic.n_validation = 15;
  cfg.synthetic.n_test = 15;
  cfg.synthetic.transitions = {iwl::accurate_transition(2, 0.8, 0.1)};
  cfg.synthetic.seed = 21;
  const DatasetTriple gen = iwl::load_config_datasets(cfg);
  CHECK(gen.train.points.size() == 40);
  CHECK(gen.validation.points.size() == 15);
  CHECK(gen.test.split == iwl::Split::test);

  iwl::save_dataset(gen.train, (dir / "tr.jsonl").string());
  iwl::save_dataset(gen.validation, (dir / "va.jsonl").string());
  iwl::save_dataset(gen.test, (dir / "te.jsonl").string());
  cfg.train_path = (dir / "tr.jsonl").string();
  cfg.validation_path = (dir / "va.jsonl").string();
  cfg.test_path = (dir / "te.jsonl").string();
  const DatasetTriple loaded = iwl::load_config_datasets(cfg);
  CHECK(loaded.train.points.size() == 40);
  CHECK(loaded.train.points[3].features == gen.train.points[3].features);
  CHECK(loaded.validation.split == iwl::Split::validation);
}

TEST_CASE("run_single returns a scored row for every method") {
  const DatasetTriple data = small_synthetic(41);
  const ExperimentConfig cfg = fast_config();
  for (const std::string method : {"iWL", "iWLD", "latent-h", "MV-V", "MV-S", "LO"}) {
    CAPTURE(method);
    const ExperimentResult row = iwl::run_single(data, method, 0.2, 7, cfg);
    CHECK(row.method == method);
    CHECK(row.strong_fraction == 0.2);
    CHECK(row.seed == 7);
    CHECK(row.error.empty());
    CHECK(row.test_f1 >= 0.0);
    CHECK(row.test_f1 <= 1.0);
    CHECK(row.val_f1 >= 0.0);
    CHECK(row.wall_time_seconds >= 0.0);
  }
  // Deterministic given (method, fraction, seed).
  const ExperimentResult a = iwl::run_single(data, "iWL", 0.2, 7, cfg);
  const ExperimentResult b = iwl::run_single(data, "iWL", 0.2, 7, cfg);
  CHECK(a.test_f1 == b.test_f1);
  CHECK(a.val_f1 == b.val_f1);

  iwl::TrainResult out;
  const ExperimentResult c = iwl::run_single(data, "LO", 0.2, 7, cfg, &out);
  CHECK(c.error.empty());
  CHECK(out.steps_run > 0);
  CHECK(iwl::evaluate_f1(out.best_end, data.test) == c.test_f1);
}

TEST_CASE("result rows round-trip through JSON files") {
  const auto dir = testutil::fresh_dir("rowio");
  ExperimentResult row;
  row.dataset_id = "demo";
  row.method = "iWLD";
  row.strong_fraction = 0.125;
  row.seed = 42;
  row.test_f1 = 0.875;
  row.val_f1 = 0.9;
  row.wall_time_seconds = 1.5;
  const std::string path = (dir / "row.json").string();
  iwl::save_experiment_result(row, path);
  const ExperimentResult back = iwl::load_experiment_result(path);
  CHECK(back.dataset_id == "demo");
  CHECK(back.method == "iWLD");
  CHECK(back.strong_fraction == 0.125);
  CHECK(back.seed == 42);
  CHECK(back.test_f1 == 0.875);
  CHECK(back.val_f1 == 0.9);
  CHECK(back.wall_time_seconds == 1.5);
  CHECK(back.error.empty());

  row.error = "exploded";
  iwl::save_experiment_result(row, path);
  CHECK(iwl::load_experiment_result(path).error == "exploded");
}

TEST_CASE("the grid writes one file per cell, a summary, and resumes from saved rows") {
  const auto dir = testutil::fresh_dir("grid");
  ExperimentConfig cfg = fast_config();
  cfg.dataset_id = "g1";
  cfg.synthetic.n_train = 120;
  cfg.synthetic.n_validation = 40;
  cfg.synthetic.n_test = 40;
  cfg.synthetic.weight_norm = 5.0;
  cfg.synthetic.transitions = {iwl::accurate_transition(2, 0.85, 0.1)};
  cfg.synthetic.seed = 3;
  cfg.methods = {"LO", "MV-V"};
  cfg.fractions = {0.5};
  cfg.seeds = {1, 2};
  cfg.out_dir = (dir / "results").string();

  const auto rows = iwl::run_experiment_grid(cfg);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.error.empty());

  namespace fs = std::filesystem;
  const fs::path base = fs::path(cfg.out_dir) / "g1";
  CHECK(fs::exists(base / "LO" / "0.5" / "1.json"));
  CHECK(fs::exists(base / "LO" / "0.5" / "2.json"));
  CHECK(fs::exists(base / "MV-V" / "0.5" / "1.json"));
  CHECK(fs::exists(base / "MV-V" / "0.5" / "2.json"));
  CHECK(fs::exists(base / "summary.csv"));

  // Tamper with one saved row; a rerun must reuse it rather than recompute.
  auto tampered = iwl::load_experiment_result((base / "LO" / "0.5" / "1.json").string());
  tampered.test_f1 = 0.123456;
  iwl::save_experiment_result(tampered, (base / "LO" / "0.5" / "1.json").string());
  const auto again = iwl::run_experiment_grid(cfg);
  REQUIRE(again.size() == 4);
  bool found = false;
  for (const auto& r : again) {
    if (r.method == "LO" && r.seed == 1) {
      CHECK(r.test_f1 == 0.123456);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("summaries aggregate per (method, fraction) and skip error rows") {
  std::vector<ExperimentResult> rows;
  ExperimentResult r;
  r.dataset_id = "d";
  r.method = "iWL";
  r.strong_fraction = 0.1;
  r.seed = 1;
  r.test_f1 = 0.8;
  r.val_f1 = 0.7;
  r.wall_time_seconds = 2.0;
  rows.push_back(r);
  r.seed = 2;
  r.test_f1 = 0.9;
  r.val_f1 = 0.8;
  r.wall_time_seconds = 4.0;
  rows.push_back(r);
  r.seed = 3;
  r.test_f1 = 0.0;
  r.error = "boom";
  rows.push_back(r);
  r = ExperimentResult{};
  r.method = "LO";
  r.strong_fraction = 0.1;
  r.seed = 1;
  r.test_f1 = 0.5;
  rows.push_back(r);

  const auto summary = iwl::summarize(rows);
  REQUIRE(summary.size() == 2);
  const auto& s0 = summary[0].method == "iWL" ? summary[0] : summary[1];
  const auto& s1 = summary[0].method == "iWL" ? summary[1] : summary[0];
  CHECK(s0.n_seeds == 2);
  CHECK(s0.mean_test_f1 == doctest::Approx(0.85).epsilon(1e-12));
  CHECK(s0.std_test_f1 == doctest::Approx(std::sqrt(0.005)).epsilon(1e-9));
  CHECK(s0.mean_val_f1 == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(s0.mean_wall_time == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s1.method == "LO");
  CHECK(s1.n_seeds == 1);
  CHECK(s1.std_test_f1 == 0.0);

  const auto dir = testutil::fresh_dir("sumcsv");
  const std::string path = (dir / "summary.csv").string();
  iwl::write_summary_csv(summary, path);
  std::ifstream in(path);
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header.find("method") != std::string::npos);
  CHECK(header.find("mean_test_f1") != std::string::npos);
  std::string line;
  int body = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++body;
  }
  CHECK(body == 2);
}

TEST_CASE("transition export carries per-point matrices and an x-variance signal") {
  WeakDataset pts = testutil::random_dataset(2, 2, 2, 25, 93, /*with_labels=*/false);
  const auto dir = testutil::fresh_dir("export");

  SUBCASE("global models are rejected as x-independent") {
    const iwl::LabelModel global = iwl::GlobalLabelModel::make(2, 2);
    CHECK_THROWS(iwl::export_transitions(global, pts, (dir / "g.csv").string()));
  }

  SUBCASE("a constant amortized model exports zero variance and its bias matrices") {
    Rng mk(1);
    iwl::AmortizedLabelModel a = iwl::AmortizedLabelModel::make(2, 2, 2, 6, mk);
    std::fill(a.params.begin(), a.params.end(), 0.0);
    const iwl::LabelModel model = a;
    const std::string path = (dir / "flat.csv").string();
    iwl::export_transitions(model, pts, path);
    const auto rows = iwl::import_transitions(path);
    REQUIRE(rows.size() == 50);  // 25 points x 2 sources
    for (const auto& row : rows) {
      // The per-point matrices are identical, but the mean they are compared
      // against is a rounded sum/n, so the variance is ulp-level, not zero.
      CHECK(row.source_variance < 1e-24);
      for (const double v : row.matrix.entries) {
        CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
      }
    }
    CHECK(rows[0].point_id == pts.points[0].id);
    CHECK(rows[0].source == 0);
    CHECK(rows[1].source == 1);
  }

  SUBCASE("a responsive amortized model exports positive variance, bit-exactly") {
    Rng rng(94);
    iwl::AmortizedLabelModel a = iwl::AmortizedLabelModel::make(2, 2, 2, 6, rng);
    for (double& v : a.params) v = 0.5 * rng.normal();
    const iwl::LabelModel model = a;
    const std::string path = (dir / "resp.csv").string();
    iwl::export_transitions(model, pts, path);
    const auto rows = iwl::import_transitions(path);
    REQUIRE(rows.size() == 50);
    CHECK(rows[0].source_variance > 0.0);
    for (std::size_t n = 0; n < 4; ++n) {
      const auto realized = iwl::realized_transitions(model, pts.points[n].features);
      for (int k = 0; k < 2; ++k) {
        const auto& row = rows[n * 2 + k];
        CHECK(row.matrix.entries == realized[k].entries);  // round-trip exact
      }
    }
  }

  SUBCASE("ids with CSV metacharacters are rejected") {
    pts.points[3].id = "has,comma";
    Rng mk(1);
    const iwl::LabelModel model = iwl::AmortizedLabelModel::make(2, 2, 2, 6, mk);
    CHECK_THROWS(iwl::export_transitions(model, pts, (dir / "bad.csv").string()));
  }

  SUBCASE("malformed headers are rejected on import") {
    const std::string path = (dir / "broken.csv").string();
    write_text(path, "point_id,source,whatever\nx,0,1\n");
    CHECK_THROWS(iwl::import_transitions(path));
  }
}
