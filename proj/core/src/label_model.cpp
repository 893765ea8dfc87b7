#include "iwl/label_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace iwl {

namespace {

void check_source_index(int k, int num_sources) {
  if (k < 0 || k >= num_sources) {
    throw std::invalid_argument("source index " + std::to_string(k) + " outside {0.." +
                                std::to_string(num_sources - 1) + "}");
  }
}

void check_vote_class(int vote, int cls, int num_classes) {
  if (vote < 0 || vote > num_classes) {
    throw std::invalid_argument("vote " + std::to_string(vote) + " outside {0.." +
                                std::to_string(num_classes) + "}");
  }
  if (cls < 1 || cls > num_classes) {
    throw std::invalid_argument("class " + std::to_string(cls) + " outside {1.." +
                                std::to_string(num_classes) + "}");
  }
}

std::size_t logits_size(int num_classes, int num_sources) {
  return static_cast<std::size_t>(num_sources) * (num_classes + 1) * num_classes;
}

}  // namespace

TransitionMatrix TransitionMatrix::zeros(int num_classes) {
  TransitionMatrix t;
  t.num_classes = num_classes;
  t.entries.assign(static_cast<std::size_t>(num_classes + 1) * num_classes, 0.0);
  return t;
}

bool is_column_stochastic(const TransitionMatrix& t, double tol) {
  for (int j = 1; j <= t.num_classes; ++j) {
    double sum = 0.0;
    for (double v : t.column(j)) {
      if (!(v >= 0.0 && v <= 1.0)) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

void column_softmax(std::span<const double> logits, int num_classes, std::span<double> out) {
  const int rows = num_classes + 1;
  if (logits.size() != out.size() || logits.size() % rows != 0) {
    throw std::invalid_argument("column_softmax: size mismatch");
  }
  for (std::size_t col = 0; col < logits.size() / rows; ++col) {
    const double* z = logits.data() + col * rows;
    double* p = out.data() + col * rows;
    double m = z[0];
    for (int i = 1; i < rows; ++i) m = std::max(m, z[i]);
    double sum = 0.0;
    for (int i = 0; i < rows; ++i) {
      p[i] = std::exp(z[i] - m);
      sum += p[i];
    }
    for (int i = 0; i < rows; ++i) p[i] /= sum;
  }
}

GlobalLabelModel GlobalLabelModel::make(int num_classes, int num_sources) {
  if (num_classes < 2) throw std::invalid_argument("GlobalLabelModel: num_classes must be >= 2");
  if (num_sources < 0) throw std::invalid_argument("GlobalLabelModel: num_sources must be >= 0");
  GlobalLabelModel model;
  model.num_classes = num_classes;
  model.num_sources = num_sources;
  model.logits.assign(logits_size(num_classes, num_sources), 0.0);
  return model;
}

void GlobalLabelModel::set_source(int k, const TransitionMatrix& t) {
  check_source_index(k, num_sources);
  if (t.num_classes != num_classes) {
    throw std::invalid_argument("set_source: class count mismatch");
  }
  double* dst = logits.data() + source_offset(k);
  for (std::size_t i = 0; i < t.entries.size(); ++i) dst[i] = safe_log(t.entries[i]);
}

AmortizedLabelModel AmortizedLabelModel::make(int num_classes, int num_sources, int input_dim,
                                              int hidden_width, Rng& rng) {
  if (num_classes < 2) throw std::invalid_argument("AmortizedLabelModel: num_classes must be >= 2");
  if (num_sources < 0) throw std::invalid_argument("AmortizedLabelModel: num_sources must be >= 0");
  if (input_dim < 1) throw std::invalid_argument("AmortizedLabelModel: input_dim must be >= 1");
  if (hidden_width < 1) throw std::invalid_argument("AmortizedLabelModel: hidden_width must be >= 1");
  AmortizedLabelModel model;
  model.num_classes = num_classes;
  model.num_sources = num_sources;
  model.input_dim = input_dim;
  model.hidden_width = hidden_width;
  const MlpShape shape = model.shape();
  model.params.assign(shape.num_params(), 0.0);
  mlp_init_glorot(shape, std::span<double>(model.params), rng);
  // Zero the output layer: uniform transitions everywhere, but live hidden
  // units so output-layer gradients are nonzero from the first step.
  const std::size_t last = shape.layer_offset(shape.num_layers() - 1);
  std::fill(model.params.begin() + static_cast<std::ptrdiff_t>(last), model.params.end(), 0.0);
  return model;
}

MlpShape AmortizedLabelModel::shape() const {
  return MlpShape{{input_dim, hidden_width, hidden_width,
                   static_cast<int>(logits_size(num_classes, num_sources))}};
}

LatentDependentLabelModel LatentDependentLabelModel::make(int num_classes, int num_sources,
                                                          int input_dim, int num_states,
                                                          int hidden_width, Rng& rng) {
  if (num_classes < 2) {
    throw std::invalid_argument("LatentDependentLabelModel: num_classes must be >= 2");
  }
  if (num_sources < 0) {
    throw std::invalid_argument("LatentDependentLabelModel: num_sources must be >= 0");
  }
  if (input_dim < 1) throw std::invalid_argument("LatentDependentLabelModel: input_dim must be >= 1");
  if (num_states < 1) throw std::invalid_argument("LatentDependentLabelModel: num_states must be >= 1");
  if (hidden_width < 1) {
    throw std::invalid_argument("LatentDependentLabelModel: hidden_width must be >= 1");
  }
  LatentDependentLabelModel model;
  model.num_classes = num_classes;
  model.num_sources = num_sources;
  model.input_dim = input_dim;
  model.hidden_width = hidden_width;
  model.num_states = num_states;
  model.params.assign(model.state_logits_offset() +
                          static_cast<std::size_t>(num_states) *
                              logits_size(num_classes, num_sources),
                      0.0);
  const MlpShape mix = model.mixture_shape();
  mlp_init_glorot(mix, std::span<double>(model.params).first(mix.num_params()), rng);
  // Zero the mixture output layer: uniform p(h|x) everywhere, live hidden
  // units. State logits stay zero (uniform transitions in every state).
  const std::size_t last = mix.layer_offset(mix.num_layers() - 1);
  std::fill(model.params.begin() + static_cast<std::ptrdiff_t>(last),
            model.params.begin() + static_cast<std::ptrdiff_t>(mix.num_params()), 0.0);
  return model;
}

MlpShape LatentDependentLabelModel::mixture_shape() const {
  return MlpShape{{input_dim, hidden_width, hidden_width, num_states}};
}

int num_classes(const LabelModel& model) {
  return std::visit([](const auto& m) { return m.num_classes; }, model);
}

int num_sources(const LabelModel& model) {
  return std::visit([](const auto& m) { return m.num_sources; }, model);
}

std::string variant_name(const LabelModel& model) {
  if (std::holds_alternative<GlobalLabelModel>(model)) return "global";
  if (std::holds_alternative<AmortizedLabelModel>(model)) return "amortized";
  return "latent";
}

std::vector<double>& label_model_params(LabelModel& model) {
  if (auto* g = std::get_if<GlobalLabelModel>(&model)) return g->logits;
  if (auto* a = std::get_if<AmortizedLabelModel>(&model)) return a->params;
  return std::get<LatentDependentLabelModel>(model).params;
}

const std::vector<double>& label_model_params(const LabelModel& model) {
  return label_model_params(const_cast<LabelModel&>(model));
}

std::vector<double> mixture_weights(const LatentDependentLabelModel& model,
                                    std::span<const double> x) {
  const std::vector<double> logits =
      mlp_forward(model.mixture_shape(), std::span<const double>(model.params).first(
                                             model.state_logits_offset()),
                  x);
  return softmax(logits);
}

std::vector<TransitionMatrix> state_transitions(const LatentDependentLabelModel& model) {
  std::vector<TransitionMatrix> out;
  out.reserve(static_cast<std::size_t>(model.num_states) * model.num_sources);
  const std::size_t block = static_cast<std::size_t>(model.num_classes + 1) * model.num_classes;
  for (int h = 0; h < model.num_states; ++h) {
    for (int k = 0; k < model.num_sources; ++k) {
      TransitionMatrix t = TransitionMatrix::zeros(model.num_classes);
      column_softmax(std::span<const double>(model.params)
                         .subspan(model.state_source_offset(h, k), block),
                     model.num_classes, t.entries);
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::vector<TransitionMatrix> realized_transitions(const LabelModel& model,
                                                   std::span<const double> x) {
  const int C = num_classes(model);
  const int K = num_sources(model);
  const std::size_t block = static_cast<std::size_t>(C + 1) * C;
  std::vector<TransitionMatrix> out(K, TransitionMatrix::zeros(C));

  if (const auto* g = std::get_if<GlobalLabelModel>(&model)) {
    for (int k = 0; k < K; ++k) {
      column_softmax(std::span<const double>(g->logits).subspan(g->source_offset(k), block), C,
                     out[k].entries);
    }
    return out;
  }
  if (const auto* a = std::get_if<AmortizedLabelModel>(&model)) {
    const std::vector<double> logits = mlp_forward(a->shape(), a->params, x);
    for (int k = 0; k < K; ++k) {
      column_softmax(std::span<const double>(logits).subspan(k * block, block), C,
                     out[k].entries);
    }
    return out;
  }
  const auto& l = std::get<LatentDependentLabelModel>(model);
  const std::vector<double> pi = mixture_weights(l, x);
  const std::vector<TransitionMatrix> states = state_transitions(l);
  for (int h = 0; h < l.num_states; ++h) {
    for (int k = 0; k < K; ++k) {
      const TransitionMatrix& s = states[static_cast<std::size_t>(h) * K + k];
      for (std::size_t i = 0; i < block; ++i) out[k].entries[i] += pi[h] * s.entries[i];
    }
  }
  return out;
}

double transition_prob(const LabelModel& model, int k, std::span<const double> x, int vote,
                       int cls) {
  check_source_index(k, num_sources(model));
  check_vote_class(vote, cls, num_classes(model));
  return realized_transitions(model, x)[k].prob(vote, cls);
}

std::vector<int> majority_vote_labels(const WeakDataset& ds, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> labels(ds.size(), 0);
  std::vector<int> counts(ds.num_classes, 0);
  std::vector<int> tied;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int v : ds.points[n].weak_labels) {
      if (v != 0) ++counts[v - 1];
    }
    const int top = *std::max_element(counts.begin(), counts.end());
    tied.clear();
    for (int j = 0; j < ds.num_classes; ++j) {
      if (counts[j] == top) tied.push_back(j + 1);
    }
    labels[n] = tied.size() == 1
                    ? tied.front()
                    : tied[rng.uniform_int(static_cast<std::uint64_t>(tied.size()))];
  }
  return labels;
}

namespace {

/// Add-one smoothed, column-normalized log estimates of each source's
/// transition matrix against the pseudo-labels, in GlobalLabelModel layout.
std::vector<double> mv_logits(const WeakDataset& ds, const std::vector<int>& labels) {
  const int C = ds.num_classes;
  const int K = ds.num_sources;
  const int rows = C + 1;
  std::vector<double> counts(logits_size(C, K), 0.0);
  std::vector<double> class_counts(C, 0.0);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const int j = labels[n] - 1;
    class_counts[j] += 1.0;
    for (int k = 0; k < K; ++k) {
      const int vote = ds.points[n].weak_labels[k];
      counts[(static_cast<std::size_t>(k) * C + j) * rows + vote] += 1.0;
    }
  }
  std::vector<double> logits(counts.size(), 0.0);
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < C; ++j) {
      const std::size_t off = (static_cast<std::size_t>(k) * C + j) * rows;
      const double denom = class_counts[j] + rows;
      for (int i = 0; i < rows; ++i) {
        logits[off + i] = std::log((counts[off + i] + 1.0) / denom);
      }
    }
  }
  return logits;
}

}  // namespace

void majority_vote_init(const WeakDataset& ds, LabelModel& model, std::uint64_t seed) {
  if (ds.num_classes != num_classes(model) || ds.num_sources != num_sources(model)) {
    throw std::invalid_argument("majority_vote_init: dataset and model shapes differ");
  }
  bool any_vote = false;
  for (const DataPoint& p : ds.points) {
    for (int v : p.weak_labels) {
      if (v != 0) {
        any_vote = true;
        break;
      }
    }
    if (any_vote) break;
  }
  if (!any_vote) throw std::invalid_argument("majority_vote_init: no votes in dataset");

  const std::vector<int> labels = majority_vote_labels(ds, Rng::derive(seed, 0));
  const std::vector<double> logits = mv_logits(ds, labels);

  if (auto* g = std::get_if<GlobalLabelModel>(&model)) {
    g->logits = logits;
    return;
  }
  if (auto* a = std::get_if<AmortizedLabelModel>(&model)) {
    const MlpShape shape = a->shape();
    Rng rng(Rng::derive(seed, 1));
    mlp_init_glorot(shape, a->params, rng);
    const int last = shape.num_layers() - 1;
    double* w = a->params.data() + shape.layer_offset(last);
    const std::size_t wsize =
        static_cast<std::size_t>(shape.dims[last + 1]) * shape.dims[last];
    std::fill(w, w + wsize, 0.0);
    std::copy(logits.begin(), logits.end(), w + wsize);
    return;
  }
  auto& l = std::get<LatentDependentLabelModel>(model);
  const MlpShape mix = l.mixture_shape();
  Rng rng(Rng::derive(seed, 1));
  mlp_init_glorot(mix, std::span<double>(l.params).first(mix.num_params()), rng);
  const int last = mix.num_layers() - 1;
  double* w = l.params.data() + mix.layer_offset(last);
  const std::size_t wsize = static_cast<std::size_t>(mix.dims[last + 1]) * mix.dims[last];
  std::fill(w, w + wsize + mix.dims[last + 1], 0.0);  // uniform mixture for every x
  Rng noise(Rng::derive(seed, 2));
  for (int h = 0; h < l.num_states; ++h) {
    double* dst = l.params.data() + l.state_source_offset(h, 0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      dst[i] = logits[i] + 0.01 * noise.normal();  // break state symmetry
    }
  }
}

InjectivityReport check_injective(const TransitionMatrix& t, double tol) {
  const int rows = t.rows();
  const int cols = t.cols();
  std::vector<double> row_major(static_cast<std::size_t>(rows) * cols, 0.0);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) row_major[static_cast<std::size_t>(i) * cols + j] = t.prob(i, j + 1);
  }
  const std::vector<double> sv = singular_values(row_major, rows, cols);
  InjectivityReport report;
  report.min_singular_value = sv.back();
  for (double s : sv) {
    if (s > tol) ++report.rank;
  }
  report.injective = report.rank == cols;
  return report;
}

std::pair<std::vector<TransitionMatrix>, std::vector<double>> construct_equivalent_pair(
    const std::vector<TransitionMatrix>& phi, const std::vector<double>& p,
    std::span<const double> m) {
  const int C = static_cast<int>(p.size());
  if (m.size() != static_cast<std::size_t>(C) * C) {
    throw std::invalid_argument("construct_equivalent_pair: m must be C x C");
  }
  for (const TransitionMatrix& t : phi) {
    if (t.num_classes != C) {
      throw std::invalid_argument("construct_equivalent_pair: matrix class count mismatch");
    }
  }
  const std::vector<double> minv = invert_matrix(m, C);  // throws on singular m

  std::pair<std::vector<TransitionMatrix>, std::vector<double>> out;
  out.first.reserve(phi.size());
  for (const TransitionMatrix& t : phi) {
    TransitionMatrix r = TransitionMatrix::zeros(C);
    for (int i = 0; i <= C; ++i) {
      for (int j = 0; j < C; ++j) {
        double s = 0.0;
        for (int l = 0; l < C; ++l) s += t.prob(i, l + 1) * minv[static_cast<std::size_t>(l) * C + j];
        r.at(i, j + 1) = s;
      }
    }
    out.first.push_back(std::move(r));
  }
  out.second.assign(C, 0.0);
  for (int i = 0; i < C; ++i) {
    for (int j = 0; j < C; ++j) out.second[i] += m[static_cast<std::size_t>(i) * C + j] * p[j];
  }
  return out;
}

double latent_marginal_prob(const LatentDependentLabelModel& model, std::span<const double> x,
                            std::span<const int> votes, int y) {
  if (static_cast<int>(votes.size()) != model.num_sources) {
    throw std::invalid_argument("latent_marginal_prob: vote count mismatch");
  }
  for (int v : votes) check_vote_class(v, y, model.num_classes);
  const std::vector<double> pi = mixture_weights(model, x);
  const std::vector<TransitionMatrix> states = state_transitions(model);
  double total = 0.0;
  for (int h = 0; h < model.num_states; ++h) {
    double prod = 1.0;
    for (int k = 0; k < model.num_sources; ++k) {
      prod *= states[static_cast<std::size_t>(h) * model.num_sources + k].prob(votes[k], y);
    }
    total += pi[h] * prod;
  }
  return total;
}

void save_label_model(const LabelModel& model, const std::string& path) {
  nlohmann::json j{{"variant", variant_name(model)},
                   {"num_classes", num_classes(model)},
                   {"num_sources", num_sources(model)},
                   {"params", label_model_params(model)}};
  if (const auto* a = std::get_if<AmortizedLabelModel>(&model)) {
    j["input_dim"] = a->input_dim;
    j["hidden_width"] = a->hidden_width;
  } else if (const auto* l = std::get_if<LatentDependentLabelModel>(&model)) {
    j["input_dim"] = l->input_dim;
    j["hidden_width"] = l->hidden_width;
    j["num_states"] = l->num_states;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("save_label_model: cannot open " + path);
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("save_label_model: write failed for " + path);
}

LabelModel load_label_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_label_model: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("load_label_model: invalid JSON in " + path + ": " + e.what());
  }
  const std::string variant = j.at("variant").get<std::string>();
  const int C = j.at("num_classes").get<int>();
  const int K = j.at("num_sources").get<int>();
  auto params = j.at("params").get<std::vector<double>>();
  LabelModel model;
  Rng scratch(0);  // make()'s draws are overwritten by the stored params below
  if (variant == "global") {
    model = GlobalLabelModel::make(C, K);
  } else if (variant == "amortized") {
    model = AmortizedLabelModel::make(C, K, j.at("input_dim").get<int>(),
                                      j.at("hidden_width").get<int>(), scratch);
  } else if (variant == "latent") {
    model = LatentDependentLabelModel::make(C, K, j.at("input_dim").get<int>(),
                                            j.at("num_states").get<int>(),
                                            j.at("hidden_width").get<int>(), scratch);
  } else {
    throw std::invalid_argument("load_label_model: unknown variant '" + variant + "' in " + path);
  }
  if (params.size() != label_model_params(model).size()) {
    throw std::invalid_argument("load_label_model: parameter count does not match shape in " +
                                path);
  }
  label_model_params(model) = std::move(params);
  return model;
}

}  // namespace iwl
