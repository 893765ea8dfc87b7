#include "iwl/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace iwl {

namespace {

int categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

void check_spec(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("synthetic: num_classes must be >= 2");
  if (spec.feature_dim < 1) throw std::invalid_argument("synthetic: feature_dim must be >= 1");
  if (spec.n_train < 1 || spec.n_validation < 1 || spec.n_test < 1) {
    throw std::invalid_argument("synthetic: every split needs at least one point");
  }
  for (const TransitionMatrix& t : spec.transitions) {
    if (t.num_classes != spec.num_classes || !is_column_stochastic(t)) {
      throw std::invalid_argument("synthetic: invalid transition matrix");
    }
  }
  if (spec.region_dependent()) {
    if (spec.transitions_region_b.size() != spec.transitions.size()) {
      throw std::invalid_argument("synthetic: region transition lists differ in length");
    }
    for (const TransitionMatrix& t : spec.transitions_region_b) {
      if (t.num_classes != spec.num_classes || !is_column_stochastic(t)) {
        throw std::invalid_argument("synthetic: invalid region-B transition matrix");
      }
    }
  }
}

nlohmann::json matrix_to_json(const TransitionMatrix& t) {
  return nlohmann::json{{"num_classes", t.num_classes}, {"entries", t.entries}};
}

TransitionMatrix matrix_from_json(const nlohmann::json& j) {
  TransitionMatrix t = TransitionMatrix::zeros(j.at("num_classes").get<int>());
  auto entries = j.at("entries").get<std::vector<double>>();
  if (entries.size() != t.entries.size()) {
    throw std::invalid_argument("transition matrix: entry count does not match num_classes");
  }
  t.entries = std::move(entries);
  return t;
}

}  // namespace

std::string to_string(TruthKind kind) {
  switch (kind) {
    case TruthKind::logistic: return "logistic";
    case TruthKind::gaussian_clusters: return "gaussian_clusters";
  }
  throw std::logic_error("unknown truth kind");
}

TruthKind truth_kind_from_string(const std::string& name) {
  if (name == "logistic") return TruthKind::logistic;
  if (name == "gaussian_clusters") return TruthKind::gaussian_clusters;
  throw std::invalid_argument("unknown truth kind: " + name);
}

TransitionMatrix accurate_transition(int num_classes, double accuracy, double abstain_rate) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0) || !(abstain_rate >= 0.0 && abstain_rate < 1.0)) {
    throw std::invalid_argument("accurate_transition: rates outside [0,1]");
  }
  TransitionMatrix t = TransitionMatrix::zeros(num_classes);
  const double vote_mass = 1.0 - abstain_rate;
  const double wrong =
      num_classes > 1 ? vote_mass * (1.0 - accuracy) / (num_classes - 1) : 0.0;
  for (int j = 1; j <= num_classes; ++j) {
    t.at(0, j) = abstain_rate;
    for (int i = 1; i <= num_classes; ++i) {
      t.at(i, j) = (i == j) ? vote_mass * accuracy : wrong;
    }
  }
  return t;
}

TransitionMatrix uniform_transition(int num_classes) {
  TransitionMatrix t = TransitionMatrix::zeros(num_classes);
  const double p = 1.0 / (num_classes + 1);
  for (double& v : t.entries) v = p;
  return t;
}

TransitionMatrix identity_transition(int num_classes) {
  TransitionMatrix t = TransitionMatrix::zeros(num_classes);
  for (int j = 1; j <= num_classes; ++j) t.at(j, j) = 1.0;
  return t;
}

TransitionMatrix random_transition(int num_classes, Rng& rng) {
  TransitionMatrix t = TransitionMatrix::zeros(num_classes);
  std::vector<double> logits(t.entries.size(), 0.0);
  for (double& v : logits) v = rng.normal();
  column_softmax(logits, num_classes, t.entries);
  return t;
}

TransitionMatrix permuted_transition(int num_classes, double accuracy, double abstain_rate,
                                     std::span<const int> perm) {
  if (static_cast<int>(perm.size()) != num_classes) {
    throw std::invalid_argument("permuted_transition: perm must have C entries");
  }
  const TransitionMatrix base = accurate_transition(num_classes, accuracy, abstain_rate);
  TransitionMatrix t = TransitionMatrix::zeros(num_classes);
  for (int j = 0; j < num_classes; ++j) {
    if (perm[j] < 0 || perm[j] >= num_classes) {
      throw std::invalid_argument("permuted_transition: perm entry out of range");
    }
    // Column for true class perm[j]+1 becomes base's column j+1.
    for (int i = 0; i <= num_classes; ++i) t.at(i, perm[j] + 1) = base.prob(i, j + 1);
  }
  return t;
}

std::vector<double> GroundTruth::true_proba(std::span<const double> x) const {
  const int C = spec.num_classes;
  const int D = spec.feature_dim;
  if (static_cast<int>(x.size()) != D) {
    throw std::invalid_argument("true_proba: feature dimension mismatch");
  }
  std::vector<double> logits(C, 0.0);
  if (spec.truth == TruthKind::logistic) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int d = 0; d < D; ++d) s += weights[static_cast<std::size_t>(c) * D + d] * x[d];
      logits[c] = s;
    }
  } else {
    // Uniform class prior, unit-variance spherical clusters: the posterior
    // is a softmax of mu_c . x - |mu_c|^2 / 2.
    for (int c = 0; c < C; ++c) {
      double dot = 0.0, norm2 = 0.0;
      for (int d = 0; d < D; ++d) {
        const double m = means[static_cast<std::size_t>(c) * D + d];
        dot += m * x[d];
        norm2 += m * m;
      }
      logits[c] = dot - 0.5 * norm2;
    }
  }
  return softmax(logits);
}

const TransitionMatrix& GroundTruth::transition(int k, std::span<const double> x) const {
  if (k < 0 || k >= spec.num_sources()) {
    throw std::invalid_argument("transition: source index out of range");
  }
  if (spec.region_dependent() && x[0] >= 0.0) return spec.transitions_region_b[k];
  return spec.transitions[k];
}

std::vector<double> GroundTruth::sample_x(Rng& rng) const {
  const int D = spec.feature_dim;
  std::vector<double> x(D, 0.0);
  if (spec.truth == TruthKind::logistic) {
    for (double& v : x) v = rng.normal();
    return x;
  }
  const int c = static_cast<int>(rng.uniform_int(spec.num_classes));
  for (int d = 0; d < D; ++d) {
    x[d] = means[static_cast<std::size_t>(c) * D + d] + rng.normal();
  }
  return x;
}

SyntheticData generate(const SyntheticSpec& spec) {
  check_spec(spec);
  const int C = spec.num_classes;
  const int D = spec.feature_dim;
  const int K = spec.num_sources();

  GroundTruth truth;
  truth.spec = spec;
  Rng model_rng(Rng::derive(spec.seed, 0));
  if (spec.truth == TruthKind::logistic) {
    truth.weights.assign(static_cast<std::size_t>(C) * D, 0.0);
    double norm2 = 0.0;
    for (double& w : truth.weights) {
      w = model_rng.normal();
      norm2 += w * w;
    }
    const double target = spec.weight_norm / std::sqrt(norm2);
    for (double& w : truth.weights) w *= target;
  } else {
    truth.means.assign(static_cast<std::size_t>(C) * D, 0.0);
    for (int c = 0; c < C; ++c) {
      double norm2 = 0.0;
      double* row = truth.means.data() + static_cast<std::size_t>(c) * D;
      for (int d = 0; d < D; ++d) {
        row[d] = model_rng.normal();
        norm2 += row[d] * row[d];
      }
      const double target = spec.cluster_separation / std::sqrt(norm2);
      for (int d = 0; d < D; ++d) row[d] *= target;
    }
  }

  SyntheticData data;
  data.truth = truth;
  const struct {
    WeakDataset* ds;
    Split split;
    int n;
    std::uint64_t stream;
  } splits[] = {{&data.train, Split::train, spec.n_train, 1},
                {&data.validation, Split::validation, spec.n_validation, 2},
                {&data.test, Split::test, spec.n_test, 3}};

  std::vector<double> vote_probs(C + 1, 0.0);
  for (const auto& s : splits) {
    WeakDataset& ds = *s.ds;
    ds.num_classes = C;
    ds.num_sources = K;
    ds.feature_dim = D;
    ds.split = s.split;
    ds.points.reserve(s.n);
    Rng rng(Rng::derive(spec.seed, s.stream));
    for (int n = 0; n < s.n; ++n) {
      DataPoint p;
      p.id = to_string(s.split) + "-" + std::to_string(n);
      if (spec.truth == TruthKind::logistic) {
        p.features = truth.sample_x(rng);
        p.strong_label = categorical(truth.true_proba(p.features), rng) + 1;
      } else {
        // Sample the joint (y, x) directly; the posterior is then p(y|x).
        const int y = static_cast<int>(rng.uniform_int(C));
        p.features.assign(D, 0.0);
        for (int d = 0; d < D; ++d) {
          p.features[d] = truth.means[static_cast<std::size_t>(y) * D + d] + rng.normal();
        }
        p.strong_label = y + 1;
      }
      p.weak_labels.assign(K, 0);
      for (int k = 0; k < K; ++k) {
        const TransitionMatrix& t = truth.transition(k, p.features);
        for (int i = 0; i <= C; ++i) vote_probs[i] = t.prob(i, *p.strong_label);
        p.weak_labels[k] = categorical(vote_probs, rng);
      }
      ds.points.push_back(std::move(p));
    }
  }
  return data;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

RecoveryScore recovery_score(const EndModel& model, const GroundTruth& truth, int num_probes,
                             std::uint64_t seed) {
  if (num_probes < 1) throw std::invalid_argument("recovery_score: num_probes must be >= 1");
  Rng rng(seed);
  RecoveryScore score;
  for (int i = 0; i < num_probes; ++i) {
    const std::vector<double> x = truth.sample_x(rng);
    const double tv = total_variation(predict_proba(model, x), truth.true_proba(x));
    score.mean_tv += tv;
    score.max_tv = std::max(score.max_tv, tv);
  }
  score.mean_tv /= num_probes;
  return score;
}

void save_ground_truth(const GroundTruth& truth, const std::string& path) {
  nlohmann::json spec{{"num_classes", truth.spec.num_classes},
                      {"feature_dim", truth.spec.feature_dim},
                      {"n_train", truth.spec.n_train},
                      {"n_validation", truth.spec.n_validation},
                      {"n_test", truth.spec.n_test},
                      {"truth", to_string(truth.spec.truth)},
                      {"weight_norm", truth.spec.weight_norm},
                      {"cluster_separation", truth.spec.cluster_separation},
                      {"seed", truth.spec.seed}};
  nlohmann::json ts = nlohmann::json::array();
  for (const TransitionMatrix& t : truth.spec.transitions) ts.push_back(matrix_to_json(t));
  spec["transitions"] = std::move(ts);
  nlohmann::json tb = nlohmann::json::array();
  for (const TransitionMatrix& t : truth.spec.transitions_region_b) {
    tb.push_back(matrix_to_json(t));
  }
  spec["transitions_region_b"] = std::move(tb);

  nlohmann::json j{{"spec", std::move(spec)}, {"weights", truth.weights}, {"means", truth.means}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("save_ground_truth: cannot open " + path);
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("save_ground_truth: write failed for " + path);
}

GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_ground_truth: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("load_ground_truth: invalid JSON in " + path + ": " + e.what());
  }
  GroundTruth truth;
  const nlohmann::json& spec = j.at("spec");
  truth.spec.num_classes = spec.at("num_classes").get<int>();
  truth.spec.feature_dim = spec.at("feature_dim").get<int>();
  truth.spec.n_train = spec.at("n_train").get<int>();
  truth.spec.n_validation = spec.at("n_validation").get<int>();
  truth.spec.n_test = spec.at("n_test").get<int>();
  truth.spec.truth = truth_kind_from_string(spec.at("truth").get<std::string>());
  truth.spec.weight_norm = spec.at("weight_norm").get<double>();
  truth.spec.cluster_separation = spec.at("cluster_separation").get<double>();
  truth.spec.seed = spec.at("seed").get<std::uint64_t>();
  for (const nlohmann::json& t : spec.at("transitions")) {
    truth.spec.transitions.push_back(matrix_from_json(t));
  }
  for (const nlohmann::json& t : spec.at("transitions_region_b")) {
    truth.spec.transitions_region_b.push_back(matrix_from_json(t));
  }
  truth.weights = j.at("weights").get<std::vector<double>>();
  truth.means = j.at("means").get<std::vector<double>>();
  return truth;
}

}  // namespace iwl
