#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <span>
#include <variant>
#include <vector>

#include "helpers.hpp"
#include "iwl/label_model.hpp"
#include "iwl/math.hpp"
#include "iwl/synthetic.hpp"

using iwl::AmortizedLabelModel;
using iwl::GlobalLabelModel;
using iwl::LabelModel;
using iwl::LatentDependentLabelModel;
using iwl::MlpShape;
using iwl::Rng;
using iwl::TransitionMatrix;
using iwl::WeakDataset;

namespace {

TransitionMatrix from_columns(const std::vector<std::vector<double>>& cols) {
  TransitionMatrix t = TransitionMatrix::zeros(static_cast<int>(cols.size()));
  for (int c = 0; c < t.cols(); ++c) {
    for (int v = 0; v < t.rows(); ++v) t.at(v, c + 1) = cols[c][v];
  }
  return t;
}

// Writes log(t) into a logits buffer at `offset`, matching the storage order.
void write_log_entries(std::vector<double>& params, std::size_t offset,
                       const TransitionMatrix& t) {
  for (std::size_t i = 0; i < t.entries.size(); ++i) {
    params[offset + i] = std::log(t.entries[i]);
  }
}

WeakDataset four_point_dataset() {
  WeakDataset ds;
  ds.num_classes = 2;
  ds.num_sources = 2;
  ds.feature_dim = 2;
  const std::vector<std::vector<int>> votes{{1, 0}, {1, 1}, {2, 2}, {0, 2}};
  for (std::size_t i = 0; i < votes.size(); ++i) {
    iwl::DataPoint p;
    p.id = "p" + std::to_string(i);
    p.features = {0.1 * static_cast<double>(i), -0.2};
    p.weak_labels = votes[i];
    ds.points.push_back(std::move(p));
  }
  return ds;
}

}  // namespace

TEST_CASE("transition matrix layout is column-major with 1-based classes") {
  const TransitionMatrix t = from_columns({{0.1, 0.8, 0.1}, {0.2, 0.1, 0.7}});
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 2);
  CHECK(t.prob(1, 1) == 0.8);
  CHECK(t.prob(0, 1) == 0.1);
  CHECK(t.prob(2, 1) == 0.1);
  CHECK(t.prob(0, 2) == 0.2);
  CHECK(t.prob(2, 2) == 0.7);
  // entries[col*(C+1) + row]
  CHECK(t.entries == std::vector<double>{0.1, 0.8, 0.1, 0.2, 0.1, 0.7});
  const auto col2 = t.column(2);
  CHECK(col2[1] == 0.1);
  TransitionMatrix z = TransitionMatrix::zeros(3);
  CHECK(z.entries.size() == 12);
  z.at(3, 2) = 0.5;
  CHECK(z.entries[4 * 1 + 3] == 0.5);
}

TEST_CASE("is_column_stochastic accepts valid matrices and flags bad ones") {
  CHECK(iwl::is_column_stochastic(from_columns({{0.1, 0.8, 0.1}, {0.2, 0.1, 0.7}})));
  CHECK_FALSE(iwl::is_column_stochastic(from_columns({{0.1, 0.8, 0.2}, {0.2, 0.1, 0.7}})));
  TransitionMatrix neg = from_columns({{-0.1, 1.0, 0.1}, {0.2, 0.1, 0.7}});
  CHECK_FALSE(iwl::is_column_stochastic(neg));
  // Within tolerance passes.
  TransitionMatrix close = from_columns({{0.1 + 5e-10, 0.8, 0.1}, {0.2, 0.1, 0.7}});
  CHECK(iwl::is_column_stochastic(close));
}

TEST_CASE("column_softmax of zeros is uniform over votes") {
  const int C = 3;
  std::vector<double> logits((C + 1) * C, 0.0);
  std::vector<double> out(logits.size(), -1.0);
  iwl::column_softmax(logits, C, out);
  for (const double v : out) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("column_softmax recovers a stochastic matrix from its logs") {
  const TransitionMatrix t = from_columns({{0.1, 0.8, 0.1}, {0.2, 0.1, 0.7}});
  std::vector<double> logits(t.entries.size());
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = std::log(t.entries[i]);
  std::vector<double> out(logits.size());
  iwl::column_softmax(logits, 2, out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i] == doctest::Approx(t.entries[i]).epsilon(1e-12));
  }
}

TEST_CASE("a fresh global model realizes uniform transitions; set_source round-trips") {
  GlobalLabelModel g = GlobalLabelModel::make(2, 3);
  CHECK(g.logits.size() == 3u * 3 * 2);
  CHECK(g.source_offset(2) == 12);
  LabelModel m = g;
  CHECK(iwl::num_classes(m) == 2);
  CHECK(iwl::num_sources(m) == 3);
  CHECK(iwl::variant_name(m) == "global");
  auto realized = iwl::realized_transitions(m, {});
  REQUIRE(realized.size() == 3);
  for (const auto& t : realized) {
    for (const double v : t.entries) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }

  const TransitionMatrix target = from_columns({{0.1, 0.8, 0.1}, {0.2, 0.1, 0.7}});
  g.set_source(1, target);
  LabelModel m2 = g;
  realized = iwl::realized_transitions(m2, {});
  for (std::size_t i = 0; i < target.entries.size(); ++i) {
    CHECK(std::abs(realized[1].entries[i] - target.entries[i]) < 1e-12);
  }
  CHECK(iwl::transition_prob(m2, 1, {}, 1, 1) == doctest::Approx(0.8).epsilon(1e-12));
  // Source 0 stays uniform.
  CHECK(iwl::transition_prob(m2, 0, {}, 2, 2) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("fresh amortized and latent models: uniform everywhere, live hidden units") {
  Rng mk(9);
  AmortizedLabelModel a = AmortizedLabelModel::make(2, 3, 2, 8, mk);
  LatentDependentLabelModel l = LatentDependentLabelModel::make(2, 3, 2, 2, 8, mk);

  // Hidden layers carry nonzero weights so the output layer has gradient
  // signal from the first step; only the output layer starts zeroed.
  const auto count_nonzero = [](std::span<const double> v) {
    std::size_t n = 0;
    for (const double p : v) n += (p != 0.0);
    return n;
  };
  const MlpShape ashape = a.shape();
  const std::size_t a_last = ashape.layer_offset(ashape.num_layers() - 1);
  CHECK(count_nonzero(std::span<const double>(a.params).first(a_last)) > 0);
  for (std::size_t i = a_last; i < a.params.size(); ++i) CHECK(a.params[i] == 0.0);

  const MlpShape mshape = l.mixture_shape();
  const std::size_t m_last = mshape.layer_offset(mshape.num_layers() - 1);
  CHECK(count_nonzero(std::span<const double>(l.params).first(m_last)) > 0);
  for (std::size_t i = m_last; i < l.params.size(); ++i) CHECK(l.params[i] == 0.0);

  // Despite the random hidden layers, every x realizes exactly uniform
  // transitions (and a uniform mixture) until training moves the output layer.
  const LabelModel am = a;
  const LabelModel lm = l;
  Rng xr(10);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<double> x{xr.normal(), xr.normal()};
    for (const LabelModel* m : {&am, &lm}) {
      const auto realized = iwl::realized_transitions(*m, x);
      REQUIRE(realized.size() == 3);
      for (const auto& t : realized) {
        for (const double v : t.entries) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
      }
    }
    const auto w = iwl::mixture_weights(std::get<LatentDependentLabelModel>(lm), x);
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  // Same seed, same draw sequence: construction is deterministic.
  Rng mk2(9);
  const AmortizedLabelModel a2 = AmortizedLabelModel::make(2, 3, 2, 8, mk2);
  const LatentDependentLabelModel l2 = LatentDependentLabelModel::make(2, 3, 2, 2, 8, mk2);
  CHECK(a2.params == a.params);
  CHECK(l2.params == l.params);
}

TEST_CASE("amortized model with zeroed weights realizes the final-bias softmax everywhere") {
  const int C = 2, K = 2, D = 3;
  Rng mk(1);
  AmortizedLabelModel a = AmortizedLabelModel::make(C, K, D, 8, mk);
  CHECK(a.shape().dims.back() == K * (C + 1) * C);
  std::fill(a.params.begin(), a.params.end(), 0.0);
  const TransitionMatrix t0 = from_columns({{0.1, 0.8, 0.1}, {0.2, 0.1, 0.7}});
  const TransitionMatrix t1 = from_columns({{0.3, 0.6, 0.1}, {0.05, 0.15, 0.8}});
  const std::size_t bias_at = a.params.size() - static_cast<std::size_t>(K * (C + 1) * C);
  std::vector<double> bias(a.params.begin() + bias_at, a.params.end());
  write_log_entries(a.params, bias_at, t0);
  write_log_entries(a.params, bias_at + t0.entries.size(), t1);

  LabelModel m = a;
  CHECK(iwl::variant_name(m) == "amortized");
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
    const auto realized = iwl::realized_transitions(m, x);
    REQUIRE(realized.size() == 2);
    for (std::size_t i = 0; i < t0.entries.size(); ++i) {
      CHECK(std::abs(realized[0].entries[i] - t0.entries[i]) < 1e-12);
      CHECK(std::abs(realized[1].entries[i] - t1.entries[i]) < 1e-12);
    }
    CHECK(iwl::transition_prob(m, 1, x, 2, 2) == doctest::Approx(0.8).epsilon(1e-12));
  }
  CHECK_THROWS(iwl::realized_transitions(m, {}));
}

TEST_CASE("latent model pieces: mixture weights, per-state matrices, averaged realization") {
  const int C = 2, K = 1, D = 2, H = 2;
  Rng mk(1);
  LatentDependentLabelModel lm = LatentDependentLabelModel::make(C, K, D, H, 4, mk);
  std::fill(lm.params.begin(), lm.params.end(), 0.0);
  const TransitionMatrix a = from_columns({{0.1, 0.8, 0.1}, {0.2, 0.1, 0.7}});
  const TransitionMatrix b = from_columns({{0.5, 0.25, 0.25}, {0.4, 0.3, 0.3}});
  write_log_entries(lm.params, lm.state_source_offset(0, 0), a);
  write_log_entries(lm.params, lm.state_source_offset(1, 0), b);

  const std::vector<double> x{0.3, -1.0};
  const auto w = iwl::mixture_weights(lm, x);
  REQUIRE(w.size() == 2);
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-12));

  const auto states = iwl::state_transitions(lm);
  REQUIRE(states.size() == 2);  // h*K + k
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(std::abs(states[0].entries[i] - a.entries[i]) < 1e-12);
    CHECK(std::abs(states[1].entries[i] - b.entries[i]) < 1e-12);
  }

  LabelModel m = lm;
  CHECK(iwl::variant_name(m) == "latent");
  const auto realized = iwl::realized_transitions(m, x);
  REQUIRE(realized.size() == 1);
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(realized[0].entries[i] ==
          doctest::Approx(0.5 * a.entries[i] + 0.5 * b.entries[i]).epsilon(1e-12));
  }
}

TEST_CASE("latent_marginal_prob: H=1 is an exact product, H=2 matches brute force") {
  const int C = 2, D = 2;
  SUBCASE("single state") {
    Rng mk(1);
    LatentDependentLabelModel lm = LatentDependentLabelModel::make(C, 2, D, 1, 4, mk);
    std::fill(lm.params.begin(), lm.params.end(), 0.0);
    const TransitionMatrix t0 = from_columns({{0.1, 0.8, 0.1}, {0.2, 0.1, 0.7}});
    const TransitionMatrix t1 = from_columns({{0.3, 0.6, 0.1}, {0.05, 0.15, 0.8}});
    write_log_entries(lm.params, lm.state_source_offset(0, 0), t0);
    write_log_entries(lm.params, lm.state_source_offset(0, 1), t1);
    const std::vector<double> x{0.4, 0.4};
    const std::vector<int> votes{1, 0};
    CHECK(iwl::latent_marginal_prob(lm, x, votes, 1) ==
          doctest::Approx(0.8 * 0.3).epsilon(1e-12));
    const std::vector<int> votes2{2, 2};
    CHECK(iwl::latent_marginal_prob(lm, x, votes2, 2) ==
          doctest::Approx(0.7 * 0.8).epsilon(1e-12));
  }
  SUBCASE("two states against explicit mixture sum") {
    Rng mk(1);
    LatentDependentLabelModel lm = LatentDependentLabelModel::make(C, 2, D, 2, 4, mk);
    Rng rng(21);
    for (double& v : lm.params) v = 0.4 * rng.normal();
    const std::vector<double> x{-0.7, 1.2};
    const auto w = iwl::mixture_weights(lm, x);
    const auto states = iwl::state_transitions(lm);
    Rng vr(22);
    for (int trial = 0; trial < 20; ++trial) {
      const std::vector<int> votes{static_cast<int>(vr.uniform_int(3)),
                                   static_cast<int>(vr.uniform_int(3))};
      const int y = 1 + static_cast<int>(vr.uniform_int(2));
      double expect = 0.0;
      for (int h = 0; h < 2; ++h) {
        expect += w[h] * states[h * 2 + 0].prob(votes[0], y) * states[h * 2 + 1].prob(votes[1], y);
      }
      CHECK(iwl::latent_marginal_prob(lm, x, votes, y) ==
            doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("majority_vote_labels: plurality wins, ties and all-abstain are seeded") {
  WeakDataset ds = four_point_dataset();
  const auto labels = iwl::majority_vote_labels(ds, 9);
  CHECK(labels == std::vector<int>{1, 1, 2, 2});
  // No ties, so the seed cannot matter.
  CHECK(iwl::majority_vote_labels(ds, 10) == labels);

  WeakDataset abst;
  abst.num_classes = 3;
  abst.num_sources = 2;
  abst.feature_dim = 1;
  for (int i = 0; i < 40; ++i) {
    iwl::DataPoint p;
    p.id = "a" + std::to_string(i);
    p.features = {0.0};
    p.weak_labels = {0, 0};
    abst.points.push_back(std::move(p));
  }
  const auto l1 = iwl::majority_vote_labels(abst, 5);
  const auto l2 = iwl::majority_vote_labels(abst, 5);
  CHECK(l1 == l2);
  bool saw_multiple = false;
  for (const int v : l1) {
    CHECK(v >= 1);
    CHECK(v <= 3);
    if (v != l1[0]) saw_multiple = true;
  }
  CHECK(saw_multiple);  // 40 uniform draws over 3 classes collide with prob ~0
}

TEST_CASE("majority_vote_init on a global model matches add-one smoothed counts") {
  // Votes per point: (1,0), (1,1), (2,2), (0,2) -> pseudo-labels 1,1,2,2.
  // Source 0 column 1 sees {1,1}: counts (0,2,0)+1 -> (1,3,1)/5.
  //          column 2 sees {2,0}: counts (1,0,1)+1 -> (2,1,2)/5.
  // Source 1 column 1 sees {0,1}: counts (1,1,0)+1 -> (2,2,1)/5.
  //          column 2 sees {2,2}: counts (0,0,2)+1 -> (1,1,3)/5.
  WeakDataset ds = four_point_dataset();
  LabelModel m = GlobalLabelModel::make(2, 2);
  iwl::majority_vote_init(ds, m, 0);
  const auto realized = iwl::realized_transitions(m, {});
  const TransitionMatrix e0 =
      from_columns({{0.2, 0.6, 0.2}, {0.4, 0.2, 0.4}});
  const TransitionMatrix e1 =
      from_columns({{0.4, 0.4, 0.2}, {0.2, 0.2, 0.6}});
  for (std::size_t i = 0; i < e0.entries.size(); ++i) {
    CHECK(realized[0].entries[i] == doctest::Approx(e0.entries[i]).epsilon(1e-12));
    CHECK(realized[1].entries[i] == doctest::Approx(e1.entries[i]).epsilon(1e-12));
  }
}

TEST_CASE("majority_vote_init on amortized and latent models tracks the global estimate") {
  WeakDataset ds = testutil::random_dataset(2, 3, 2, 400, 31);
  LabelModel global = GlobalLabelModel::make(2, 3);
  iwl::majority_vote_init(ds, global, 7);
  const auto target = iwl::realized_transitions(global, {});

  Rng mk(1);
  LabelModel amortized = AmortizedLabelModel::make(2, 3, 2, 8, mk);
  iwl::majority_vote_init(ds, amortized, 7);
  Rng rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<double> x{rng.normal(), rng.normal()};
    const auto realized = iwl::realized_transitions(amortized, x);
    for (int k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < target[k].entries.size(); ++i) {
        CHECK(std::abs(realized[k].entries[i] - target[k].entries[i]) < 1e-9);
      }
    }
  }

  LabelModel latent = LatentDependentLabelModel::make(2, 3, 2, 2, 8, mk);
  iwl::majority_vote_init(ds, latent, 7);
  const auto& lm = std::get<LatentDependentLabelModel>(latent);
  const std::vector<double> x{0.5, -0.5};
  const auto w = iwl::mixture_weights(lm, x);
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-9));
  const auto states = iwl::state_transitions(lm);
  for (const auto& t : states) {
    CHECK(iwl::is_column_stochastic(t));
  }
  for (int h = 0; h < 2; ++h) {
    for (int k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < target[k].entries.size(); ++i) {
        CHECK(std::abs(states[h * 3 + k].entries[i] - target[k].entries[i]) < 0.05);
      }
    }
  }
  // The symmetry-breaking noise must actually separate the states.
  CHECK(states[0].entries != states[3].entries);
}

TEST_CASE("majority_vote_init requires at least one vote somewhere") {
  WeakDataset ds;
  ds.num_classes = 2;
  ds.num_sources = 1;
  ds.feature_dim = 1;
  iwl::DataPoint p;
  p.id = "only";
  p.features = {1.0};
  p.weak_labels = {0};
  ds.points.push_back(p);
  LabelModel m = GlobalLabelModel::make(2, 1);
  CHECK_THROWS(iwl::majority_vote_init(ds, m, 0));
}

TEST_CASE("check_injective separates full-rank from collapsed matrices") {
  const auto good = iwl::accurate_transition(2, 0.9, 0.1);
  const auto r1 = iwl::check_injective(good);
  CHECK(r1.injective);
  CHECK(r1.rank == 2);
  CHECK(r1.min_singular_value > 0.1);

  const TransitionMatrix dup = from_columns({{0.1, 0.81, 0.09}, {0.1, 0.81, 0.09}});
  const auto r2 = iwl::check_injective(dup);
  CHECK_FALSE(r2.injective);
  CHECK(r2.rank == 1);
  CHECK(r2.min_singular_value < 1e-8);

  const auto r3 = iwl::check_injective(iwl::uniform_transition(3));
  CHECK_FALSE(r3.injective);
  CHECK(r3.rank == 1);
}

TEST_CASE("construct_equivalent_pair preserves vote marginals") {
  const TransitionMatrix phi = from_columns({{0.1, 0.81, 0.09}, {0.1, 0.09, 0.81}});
  const std::vector<double> p{0.3, 0.7};

  SUBCASE("identity map returns the inputs") {
    const std::vector<double> eye{1.0, 0.0, 0.0, 1.0};
    const auto [phi2, p2] = iwl::construct_equivalent_pair({phi}, p, eye);
    for (std::size_t i = 0; i < phi.entries.size(); ++i) {
      CHECK(phi2[0].entries[i] == doctest::Approx(phi.entries[i]).epsilon(1e-12));
    }
    CHECK(p2[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(p2[1] == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("a swap permutation swaps columns and prior entries") {
    const std::vector<double> swap{0.0, 1.0, 1.0, 0.0};
    const auto [phi2, p2] = iwl::construct_equivalent_pair({phi}, p, swap);
    CHECK(p2[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(p2[1] == doctest::Approx(0.3).epsilon(1e-12));
    for (int v = 0; v <= 2; ++v) {
      CHECK(phi2[0].prob(v, 1) == doctest::Approx(phi.prob(v, 2)).epsilon(1e-12));
      CHECK(phi2[0].prob(v, 2) == doctest::Approx(phi.prob(v, 1)).epsilon(1e-12));
    }
  }
  SUBCASE("a general invertible map keeps every marginal") {
    const std::vector<double> m{0.9, 0.2, 0.1, 0.8};
    const auto [phi2, p2] = iwl::construct_equivalent_pair({phi}, p, m);
    CHECK(p2[0] + p2[1] == doctest::Approx(1.0).epsilon(1e-12));
    for (int v = 0; v <= 2; ++v) {
      const double before = phi.prob(v, 1) * p[0] + phi.prob(v, 2) * p[1];
      const double after = phi2[0].prob(v, 1) * p2[0] + phi2[0].prob(v, 2) * p2[1];
      CHECK(after == doctest::Approx(before).epsilon(1e-12));
    }
  }
  SUBCASE("a singular map is rejected") {
    const std::vector<double> bad{1.0, 1.0, 1.0, 1.0};
    CHECK_THROWS(iwl::construct_equivalent_pair({phi}, p, bad));
  }
}

TEST_CASE("checkpoints round-trip all three variants bit-exactly") {
  const auto dir = testutil::fresh_dir("labelmodel");
  Rng rng(55);

  GlobalLabelModel g = GlobalLabelModel::make(3, 2);
  for (double& v : g.logits) v = rng.normal();
  LabelModel gv = g;
  iwl::save_label_model(gv, (dir / "g.json").string());
  const LabelModel gb = iwl::load_label_model((dir / "g.json").string());
  REQUIRE(std::holds_alternative<GlobalLabelModel>(gb));
  CHECK(std::get<GlobalLabelModel>(gb).logits == g.logits);
  CHECK(iwl::num_classes(gb) == 3);

  AmortizedLabelModel a = AmortizedLabelModel::make(2, 4, 3, 6, rng);
  for (double& v : a.params) v = rng.normal();
  LabelModel av = a;
  iwl::save_label_model(av, (dir / "a.json").string());
  const LabelModel ab = iwl::load_label_model((dir / "a.json").string());
  REQUIRE(std::holds_alternative<AmortizedLabelModel>(ab));
  CHECK(std::get<AmortizedLabelModel>(ab).params == a.params);
  CHECK(std::get<AmortizedLabelModel>(ab).hidden_width == 6);

  LatentDependentLabelModel l = LatentDependentLabelModel::make(2, 2, 2, 3, 5, rng);
  for (double& v : l.params) v = rng.normal();
  LabelModel lv = l;
  iwl::save_label_model(lv, (dir / "l.json").string());
  const LabelModel lb = iwl::load_label_model((dir / "l.json").string());
  REQUIRE(std::holds_alternative<LatentDependentLabelModel>(lb));
  CHECK(std::get<LatentDependentLabelModel>(lb).params == l.params);
  CHECK(std::get<LatentDependentLabelModel>(lb).num_states == 3);
}
