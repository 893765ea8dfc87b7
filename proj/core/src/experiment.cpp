#include "iwl/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <variant>

#include "json.hpp"

#include "iwl/dataset.hpp"
#include "iwl/end_model.hpp"
#include "iwl/label_model.hpp"
#include "iwl/math.hpp"
#include "iwl/metrics.hpp"

namespace iwl {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Shortest round-trip rendering, so CSV files reproduce the doubles exactly.
std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::runtime_error("bad number in " + what + ": '" + std::string(s) + "'");
  }
  return v;
}

int parse_int(std::string_view s, const std::string& what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::runtime_error("bad integer in " + what + ": '" + std::string(s) + "'");
  }
  return v;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

TransitionMatrix transition_from_json(const json& j, int num_classes) {
  if (!j.is_object()) throw std::runtime_error("transition spec must be a JSON object");
  if (j.contains("matrix")) {
    const json& rows = j.at("matrix");
    if (!rows.is_array() || static_cast<int>(rows.size()) != num_classes + 1) {
      throw std::runtime_error("transition matrix needs num_classes+1 rows (abstain row first)");
    }
    TransitionMatrix t = TransitionMatrix::zeros(num_classes);
    for (int vote = 0; vote <= num_classes; ++vote) {
      const json& row = rows.at(vote);
      if (!row.is_array() || static_cast<int>(row.size()) != num_classes) {
        throw std::runtime_error("transition matrix rows need num_classes entries");
      }
      for (int cls = 1; cls <= num_classes; ++cls) {
        t.at(vote, cls) = row.at(cls - 1).get<double>();
      }
    }
    return t;
  }
  if (j.value("uniform", false)) return uniform_transition(num_classes);
  if (j.value("identity", false)) return identity_transition(num_classes);
  if (j.contains("accuracy")) {
    const double accuracy = j.at("accuracy").get<double>();
    const double abstain = j.value("abstain", 0.0);
    if (j.contains("permute")) {
      const auto perm = j.at("permute").get<std::vector<int>>();
      return permuted_transition(num_classes, accuracy, abstain, perm);
    }
    return accurate_transition(num_classes, accuracy, abstain);
  }
  throw std::runtime_error(
      "transition spec needs one of: matrix, uniform, identity, or accuracy "
      "(with optional abstain / permute)");
}

std::vector<TransitionMatrix> transitions_from_json(const json& arr, int num_classes) {
  if (!arr.is_array()) throw std::runtime_error("transitions must be a JSON array");
  std::vector<TransitionMatrix> out;
  out.reserve(arr.size());
  for (const json& j : arr) out.push_back(transition_from_json(j, num_classes));
  return out;
}

SyntheticSpec synthetic_from_json(const json& j) {
  SyntheticSpec spec;
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.feature_dim = j.value("feature_dim", spec.feature_dim);
  spec.n_train = j.value("n_train", spec.n_train);
  spec.n_validation = j.value("n_validation", spec.n_validation);
  spec.n_test = j.value("n_test", spec.n_test);
  if (j.contains("truth")) spec.truth = truth_kind_from_string(j.at("truth").get<std::string>());
  spec.weight_norm = j.value("weight_norm", spec.weight_norm);
  spec.cluster_separation = j.value("cluster_separation", spec.cluster_separation);
  spec.seed = j.value("seed", spec.seed);
  if (j.contains("transitions")) {
    spec.transitions = transitions_from_json(j.at("transitions"), spec.num_classes);
  }
  if (j.contains("transitions_region_b")) {
    spec.transitions_region_b =
        transitions_from_json(j.at("transitions_region_b"), spec.num_classes);
  }
  return spec;
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.max_steps = j.value("max_steps", cfg.max_steps);
  cfg.eval_every = j.value("eval_every", cfg.eval_every);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.lambda_strong = j.value("lambda_strong", cfg.lambda_strong);
  cfg.lambda_weak = j.value("lambda_weak", cfg.lambda_weak);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.mv_init = j.value("mv_init", cfg.mv_init);
  cfg.freeze_label_model = j.value("freeze_label_model", cfg.freeze_label_model);
  return cfg;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

void write_file_atomically(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out.flush()) throw std::runtime_error("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::iwl: return "iWL";
    case Method::iwld: return "iWLD";
    case Method::latent_h: return "latent-h";
    case Method::mv_v: return "MV-V";
    case Method::mv_s: return "MV-S";
    case Method::lo: return "LO";
  }
  throw std::invalid_argument("unknown method enum value");
}

Method method_from_string(const std::string& name) {
  std::string lower(name.size(), '\0');
  std::transform(name.begin(), name.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "iwl") return Method::iwl;
  if (lower == "iwld") return Method::iwld;
  if (lower == "latent-h" || lower == "latent") return Method::latent_h;
  if (lower == "mv-v") return Method::mv_v;
  if (lower == "mv-s") return Method::mv_s;
  if (lower == "lo") return Method::lo;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected iWL, iWLD, latent-h, MV-V, MV-S, or LO)");
}

ExperimentConfig load_experiment_config(const std::string& path) {
  const json j = read_json_file(path);
  ExperimentConfig cfg;
  cfg.dataset_id = j.value("dataset_id", cfg.dataset_id);
  if (j.contains("synthetic")) cfg.synthetic = synthetic_from_json(j.at("synthetic"));
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    cfg.train_path = d.value("train", std::string{});
    cfg.validation_path = d.value("validation", std::string{});
    cfg.test_path = d.value("test", std::string{});
  }
  if (j.contains("methods")) cfg.methods = j.at("methods").get<std::vector<std::string>>();
  if (j.contains("fractions")) cfg.fractions = j.at("fractions").get<std::vector<double>>();
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"), cfg.train);
  if (j.contains("end_model")) {
    const json& e = j.at("end_model");
    if (e.is_string()) {
      cfg.end_model = end_model_kind_from_string(e.get<std::string>());
    } else {
      if (e.contains("kind")) {
        cfg.end_model = end_model_kind_from_string(e.at("kind").get<std::string>());
      }
      cfg.hidden_width = e.value("hidden_width", cfg.hidden_width);
    }
  }
  cfg.hidden_width = j.value("hidden_width", cfg.hidden_width);
  cfg.latent_states = j.value("latent_states", cfg.latent_states);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  for (const std::string& m : cfg.methods) method_from_string(m);  // fail fast on typos
  for (const double f : cfg.fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::runtime_error("fractions must lie in [0, 1]");
  }
  return cfg;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  const json j = read_json_file(path);
  return synthetic_from_json(j.contains("synthetic") ? j.at("synthetic") : j);
}

DatasetTriple load_config_datasets(const ExperimentConfig& cfg) {
  const bool any_path =
      !cfg.train_path.empty() || !cfg.validation_path.empty() || !cfg.test_path.empty();
  if (any_path) {
    if (cfg.train_path.empty() || cfg.validation_path.empty() || cfg.test_path.empty()) {
      throw std::runtime_error("dataset paths: set all of train/validation/test or none");
    }
    DatasetTriple out;
    out.train = load_dataset(cfg.train_path, Split::train);
    out.validation = load_dataset(cfg.validation_path, Split::validation);
    out.test = load_dataset(cfg.test_path, Split::test);
    return out;
  }
  if (cfg.synthetic.transitions.empty()) {
    throw std::runtime_error("config has neither dataset paths nor synthetic transitions");
  }
  SyntheticData data = generate(cfg.synthetic);
  return DatasetTriple{std::move(data.train), std::move(data.validation), std::move(data.test)};
}

ExperimentResult run_single(const DatasetTriple& data, const std::string& method,
                            double fraction, std::uint64_t seed, const ExperimentConfig& cfg,
                            TrainResult* train_result) {
  const Method kind = method_from_string(method);
  ExperimentResult row;
  row.dataset_id = cfg.dataset_id;
  row.method = to_string(kind);
  row.strong_fraction = fraction;
  row.seed = seed;

  const auto t0 = std::chrono::steady_clock::now();

  const StrongFractionPlan plan{fraction, Rng::derive(seed, 10)};
  auto [strong, weak] = apply_strong_fraction(data.train, plan);

  TrainConfig tcfg = cfg.train;
  tcfg.seed = seed;

  const int C = data.train.num_classes;
  const int K = data.train.num_sources;
  const int D = data.train.feature_dim;
  Rng end_rng(Rng::derive(seed, 2));
  const EndModel end0 = EndModel::make(cfg.end_model, D, C, cfg.hidden_width, end_rng);
  Rng label_rng(Rng::derive(seed, 4));

  TrainResult result;
  switch (kind) {
    case Method::iwl:
      result = train(LabelModel{GlobalLabelModel::make(C, K)}, end0, strong, weak,
                     data.validation, tcfg);
      break;
    case Method::iwld:
      result = train(LabelModel{AmortizedLabelModel::make(C, K, D, cfg.hidden_width, label_rng)},
                     end0, strong, weak, data.validation, tcfg);
      break;
    case Method::latent_h:
      result = train(LabelModel{LatentDependentLabelModel::make(C, K, D, cfg.latent_states,
                                                                cfg.hidden_width, label_rng)},
                     end0, strong, weak, data.validation, tcfg);
      break;
    case Method::lo:
      result = labels_only_train(end0, strong, data.validation, tcfg);
      break;
    case Method::mv_v: {
      const WeakDataset voted = strong_label_voting_source(merge(strong, weak));
      result = noise_aware_train(end0, voted, majority_vote_soft(voted), data.validation, tcfg);
      break;
    }
    case Method::mv_s: {
      const WeakDataset merged = merge(strong, weak);
      result = noise_aware_train(end0, merged, strong_replace(majority_vote_soft(merged), merged),
                                 data.validation, tcfg);
      break;
    }
  }

  row.val_f1 = result.best_val_f1;
  row.test_f1 = evaluate_f1(result.best_end, data.test);
  row.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (train_result != nullptr) *train_result = std::move(result);
  return row;
}

void save_experiment_result(const ExperimentResult& row, const std::string& path) {
  const json j{{"dataset_id", row.dataset_id},
               {"method", row.method},
               {"strong_fraction", row.strong_fraction},
               {"seed", row.seed},
               {"test_f1", row.test_f1},
               {"val_f1", row.val_f1},
               {"wall_time_seconds", row.wall_time_seconds},
               {"error", row.error}};
  write_file_atomically(path, j.dump(2) + "\n");
}

ExperimentResult load_experiment_result(const std::string& path) {
  const json j = read_json_file(path);
  ExperimentResult row;
  try {
    row.dataset_id = j.value("dataset_id", std::string{});
    row.method = j.at("method").get<std::string>();
    row.strong_fraction = j.at("strong_fraction").get<double>();
    row.seed = j.at("seed").get<std::uint64_t>();
    row.test_f1 = j.value("test_f1", 0.0);
    row.val_f1 = j.value("val_f1", 0.0);
    row.wall_time_seconds = j.value("wall_time_seconds", 0.0);
    row.error = j.value("error", std::string{});
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return row;
}

std::vector<ExperimentResult> run_experiment_grid(const ExperimentConfig& cfg) {
  const DatasetTriple data = load_config_datasets(cfg);
  const fs::path base = fs::path(cfg.out_dir) / cfg.dataset_id;
  std::vector<ExperimentResult> rows;
  for (const std::string& method_name : cfg.methods) {
    const std::string method = to_string(method_from_string(method_name));
    for (const double fraction : cfg.fractions) {
      const fs::path cell_dir = base / method / format_double(fraction);
      fs::create_directories(cell_dir);
      for (const std::uint64_t seed : cfg.seeds) {
        const fs::path cell = cell_dir / (std::to_string(seed) + ".json");
        if (fs::exists(cell)) {
          rows.push_back(load_experiment_result(cell.string()));
          continue;
        }
        ExperimentResult row;
        try {
          row = run_single(data, method, fraction, seed, cfg);
        } catch (const std::exception& e) {
          row.dataset_id = cfg.dataset_id;
          row.method = method;
          row.strong_fraction = fraction;
          row.seed = seed;
          row.error = e.what();
        }
        save_experiment_result(row, cell.string());
        rows.push_back(std::move(row));
      }
    }
  }
  write_summary_csv(summarize(rows), (base / "summary.csv").string());
  return rows;
}

std::vector<FractionSummary> summarize(const std::vector<ExperimentResult>& rows) {
  std::vector<FractionSummary> out;
  const auto group = [&out](const ExperimentResult& r) -> FractionSummary& {
    for (FractionSummary& s : out) {
      if (s.method == r.method && s.fraction == r.strong_fraction) return s;
    }
    out.push_back(FractionSummary{r.method, r.strong_fraction});
    return out.back();
  };
  for (const ExperimentResult& r : rows) {
    if (!r.error.empty()) continue;
    FractionSummary& s = group(r);
    s.n_seeds += 1;
    s.mean_test_f1 += r.test_f1;
    s.mean_val_f1 += r.val_f1;
    s.mean_wall_time += r.wall_time_seconds;
  }
  for (FractionSummary& s : out) {
    if (s.n_seeds > 0) {
      s.mean_test_f1 /= s.n_seeds;
      s.mean_val_f1 /= s.n_seeds;
      s.mean_wall_time /= s.n_seeds;
    }
  }
  for (const ExperimentResult& r : rows) {
    if (!r.error.empty()) continue;
    FractionSummary& s = group(r);
    const double d = r.test_f1 - s.mean_test_f1;
    s.std_test_f1 += d * d;
  }
  for (FractionSummary& s : out) {
    s.std_test_f1 = s.n_seeds > 1 ? std::sqrt(s.std_test_f1 / (s.n_seeds - 1)) : 0.0;
  }
  return out;
}

void write_summary_csv(const std::vector<FractionSummary>& summary, const std::string& path) {
  std::string content =
      "method,strong_fraction,n_seeds,mean_test_f1,std_test_f1,mean_val_f1,"
      "mean_wall_time_seconds\n";
  for (const FractionSummary& s : summary) {
    content += s.method;
    content += ',';
    content += format_double(s.fraction);
    content += ',';
    content += std::to_string(s.n_seeds);
    content += ',';
    content += format_double(s.mean_test_f1);
    content += ',';
    content += format_double(s.std_test_f1);
    content += ',';
    content += format_double(s.mean_val_f1);
    content += ',';
    content += format_double(s.mean_wall_time);
    content += '\n';
  }
  write_file_atomically(path, content);
}

void export_transitions(const LabelModel& model, const WeakDataset& points,
                        const std::string& path) {
  if (std::holds_alternative<GlobalLabelModel>(model)) {
    throw std::invalid_argument(
        "transitions are x-independent; per-point export needs an amortized or latent model");
  }
  const int C = num_classes(model);
  const int K = num_sources(model);
  if (points.num_classes != C) {
    throw std::invalid_argument("dataset/model class-count mismatch");
  }
  const int block = (C + 1) * C;
  const std::size_t n = points.points.size();

  std::vector<std::vector<TransitionMatrix>> realized(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& id = points.points[i].id;
    if (id.find_first_of(",\"\n\r") != std::string::npos) {
      throw std::runtime_error("point id '" + id + "' is not CSV-safe");
    }
    realized[i] = realized_transitions(model, points.points[i].features);
  }

  // Across-point variance of each matrix entry, averaged over the entries:
  // one scalar per source saying how much its matrix actually moves with x.
  std::vector<double> source_variance(K, 0.0);
  if (n >= 2) {
    for (int k = 0; k < K; ++k) {
      double acc = 0.0;
      for (int e = 0; e < block; ++e) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += realized[i][k].entries[e];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = realized[i][k].entries[e] - mean;
          var += d * d;
        }
        acc += var / static_cast<double>(n);
      }
      source_variance[k] = acc / block;
    }
  }

  std::string content = "point_id,source";
  for (int cls = 1; cls <= C; ++cls) {
    for (int vote = 0; vote <= C; ++vote) {
      content += ",p_v" + std::to_string(vote) + "_c" + std::to_string(cls);
    }
  }
  content += ",source_variance\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      content += points.points[i].id;
      content += ',';
      content += std::to_string(k);
      for (const double e : realized[i][k].entries) {
        content += ',';
        content += format_double(e);
      }
      content += ',';
      content += format_double(source_variance[k]);
      content += '\n';
    }
  }
  write_file_atomically(path, content);
}

std::vector<TransitionRow> import_transitions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 4 || header.front() != "point_id" || header.back() != "source_variance") {
    throw std::runtime_error(path + ": not a transition export");
  }
  const std::size_t entry_fields = header.size() - 3;
  const int C = static_cast<int>(std::llround((std::sqrt(1.0 + 4.0 * entry_fields) - 1.0) / 2.0));
  if (static_cast<std::size_t>(C + 1) * C != entry_fields) {
    throw std::runtime_error(path + ": malformed transition header");
  }

  std::vector<TransitionRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": wrong field count");
    }
    TransitionRow row;
    row.point_id = fields[0];
    row.source = parse_int(fields[1], "source");
    row.matrix = TransitionMatrix::zeros(C);
    for (std::size_t e = 0; e < entry_fields; ++e) {
      row.matrix.entries[e] = parse_double(fields[2 + e], header[2 + e]);
    }
    row.source_variance = parse_double(fields.back(), "source_variance");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace iwl
