#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "ctformer/attribution/attribution.h"
#include "ctformer/attribution/shapley.h"
#include "helpers.h"

using namespace ctformer;
using namespace ctformer::attribution;
using testing_helpers::random_sequence;

namespace {

// Shapley values straight from the permutation definition; feasible for n <= 7.
std::vector<double> permutation_oracle(const CoalitionGame& g) {
  std::vector<std::size_t> perm(g.n_players);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::vector<double> phi(g.n_players, 0.0);
  double count = 0;
  do {
    Coalition c(g.n_players, 0);
    double prev = g.value(c);
    for (std::size_t p : perm) {
      c[p] = 1;
      const double now = g.value(c);
      phi[p] += now - prev;
      prev = now;
    }
    count += 1;
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (double& x : phi) x /= count;
  return phi;
}

CoalitionGame table_game(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 1);
  auto table = std::make_shared<std::vector<double>>(std::size_t{1} << n);
  for (double& v : *table) v = d(rng);
  return {n, [table](const Coalition& c) {
            std::size_t key = 0;
            for (std::size_t i = 0; i < c.size(); ++i)
              if (c[i]) key |= std::size_t{1} << i;
            return (*table)[key];
          }};
}

double sum(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

// Smooth stand-in for a trained model: per-cell weights plus one interaction.
Predictor analytic_predictor(std::size_t t_max, std::size_t features, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 0.6);
  auto w = std::make_shared<std::vector<double>>(t_max * features);
  for (double& x : *w) x = d(rng);
  return [w, features](const data::PatientSequence& s) {
    double z = -0.2;
    for (std::size_t t = 0; t < s.t_valid; ++t) {
      for (std::size_t f = 0; f < features; ++f) {
        if (s.obs_mask(t, f)) z += (*w)[t * features + f] * (s.values(t, f) + 0.5);
      }
    }
    if (s.t_valid > 1 && s.obs_mask(0, 0) && s.obs_mask(s.t_valid - 1, 1)) z += 0.7;
    return 1.0 / (1.0 + std::exp(-z));
  };
}

data::PatientSequence dense_sequence(std::size_t features, std::size_t t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto s = random_sequence(features, t + 2, t, rng);
  std::normal_distribution<double> d(0, 1);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t f = 0; f < features; ++f) {
      s.obs_mask(i, f) = 1;
      s.values(i, f) = d(rng);
    }
  const auto dl = data::compute_deltas(s.timestamps, s.obs_mask);
  s.feature_delta = dl.feature_delta;
  return s;
}

}  // namespace

TEST(Shapley, TwoPlayerWorkedExample) {
  const CoalitionGame g{2, [](const Coalition& c) {
                          const int k = c[0] + 2 * c[1];
                          return std::vector<double>{0, 1, 2, 4}[k];
                        }};
  const auto r = exact_shapley(g);
  EXPECT_DOUBLE_EQ(r.values[0], 1.5);
  EXPECT_DOUBLE_EQ(r.values[1], 2.5);
  EXPECT_TRUE(r.exact);
}

TEST(Shapley, AdditiveSymmetricAndNullPlayers) {
  const std::vector<double> c{0.5, -1.25, 2.0, 0.0, 3.5};
  const CoalitionGame additive{5, [&](const Coalition& s) {
                                 double v = 0;
                                 for (std::size_t i = 0; i < 5; ++i) v += s[i] ? c[i] : 0.0;
                                 return v;
                               }};
  const auto r = exact_shapley(additive);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.values[i], c[i], 1e-12);
  EXPECT_EQ(r.values[3], 0.0);

  // Players 0 and 1 are interchangeable, player 3 never matters.
  const CoalitionGame sym{4, [](const Coalition& s) {
                            return std::pow(static_cast<double>(s[0] + s[1]), 2.0) * (1 + s[2]);
                          }};
  const auto q = exact_shapley(sym);
  EXPECT_EQ(q.values[0], q.values[1]);
  EXPECT_EQ(q.values[3], 0.0);
}

TEST(Shapley, ExactMatchesPermutationDefinitionAndIsEfficient) {
  for (std::size_t n = 1; n <= 7; ++n) {
    const auto g = table_game(n, 100 + n);
    const auto r = exact_shapley(g, 2);
    const auto oracle = permutation_oracle(g);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(r.values[i], oracle[i], 1e-12);
    EXPECT_NEAR(sum(r.values), r.full_value - r.background_value, 1e-12);
  }
}

TEST(Shapley, TooManyPlayersForEnumeration) {
  const CoalitionGame g{16, [](const Coalition&) { return 0.0; }};
  try {
    exact_shapley(g);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("sampled_shapley"), std::string::npos) << e.what();
  }
}

TEST(Shapley, SampledIsCloseDeterministicAndEfficient) {
  // Probability-valued game, like a risk model's output.
  const auto table = table_game(8, 7);
  const CoalitionGame g{8, [&](const Coalition& c) { return 1.0 / (1.0 + std::exp(-table.value(c))); }};
  const auto exact = exact_shapley(g);
  const auto a = sampled_shapley(g, 5000, 3, 1);
  const auto b = sampled_shapley(g, 5000, 3, 3);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.standard_errors, b.standard_errors);
  EXPECT_FALSE(a.exact);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_LT(std::abs(a.values[i] - exact.values[i]), 0.01);
    EXPECT_GT(a.standard_errors[i], 0.0);
  }
  EXPECT_NEAR(sum(a.values), a.full_value - a.background_value, 1e-12);
  EXPECT_NE(sampled_shapley(g, 50, 4).values, sampled_shapley(g, 50, 5).values);
}

TEST(Shapley, SampledErrorConsistentWithReportedStandardError) {
  const auto g = table_game(9, 8);
  const auto exact = exact_shapley(g);
  const auto s = sampled_shapley(g, 5000, 9);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_LT(std::abs(s.values[i] - exact.values[i]), 5 * s.standard_errors[i]);
  EXPECT_NEAR(sum(s.values), s.full_value - s.background_value, 1e-12);
}

TEST(Perturb, EmptyOffSetIsIdentity) {
  std::mt19937_64 rng(1);
  const auto s = random_sequence(4, 9, 7, rng);
  EXPECT_EQ(perturb_sequence(s, {}, {}), s);
}

TEST(Perturb, OffStepClearsRowAndRederivesDeltas) {
  std::mt19937_64 rng(2);
  const auto s = random_sequence(4, 9, 7, rng);
  const auto p = perturb_sequence(s, {3}, {});
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_EQ(p.obs_mask(3, f), 0);
    EXPECT_EQ(p.values(3, f), 0.0);
  }
  const auto fresh = data::compute_deltas(p.timestamps, p.obs_mask);
  EXPECT_EQ(p.feature_delta, fresh.feature_delta);
  EXPECT_EQ(p.step_delta, s.step_delta);
  EXPECT_EQ(p.timestamps, s.timestamps);
  EXPECT_NO_THROW(data::validate(p));
}

TEST(Perturb, FeatureAndBackgroundAndRange) {
  std::mt19937_64 rng(3);
  const auto s = random_sequence(4, 9, 7, rng);
  const auto p = perturb_sequence(s, {}, {2});
  for (std::size_t t = 0; t < 9; ++t) EXPECT_EQ(p.obs_mask(t, 2), 0);
  EXPECT_EQ(p.feature_delta, data::compute_deltas(p.timestamps, p.obs_mask).feature_delta);
  const auto bg = background_sequence(s);
  EXPECT_EQ(perturb_sequence(s, {0, 1, 2, 3, 4, 5, 6}, {}), bg);
  for (auto m : bg.obs_mask.data) EXPECT_EQ(m, 0);
  EXPECT_THROW(perturb_sequence(s, {7}, {}), std::out_of_range);
  EXPECT_THROW(perturb_sequence(s, {}, {4}), std::out_of_range);
}

TEST(Pruning, ExtremeTolerances) {
  const auto seq = dense_sequence(3, 8, 4);
  const auto predict = analytic_predictor(10, 3, 5);
  EXPECT_EQ(temporal_prune(seq, predict, std::numeric_limits<double>::infinity()).index, 7u);
  const auto zero = temporal_prune(seq, predict, 0.0);
  EXPECT_EQ(zero.index, 0u);
  ASSERT_EQ(zero.prefix_values.size(), 8u);
  EXPECT_EQ(zero.prefix_values[0], 0.0);
  for (std::size_t c = 1; c < 8; ++c) EXPECT_NE(zero.prefix_values[c], 0.0);
  EXPECT_THROW(temporal_prune(seq, predict, -1.0), std::invalid_argument);
}

TEST(Pruning, MonotoneInTolerance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto seq = dense_sequence(3, 10, 10 + seed);
    const auto predict = analytic_predictor(12, 3, 20 + seed);
    std::size_t last = 0;
    for (double eta : {0.0, 0.001, 0.01, 0.03, 0.1, 0.3, 1.0}) {
      const std::size_t idx = temporal_prune(seq, predict, eta).index;
      EXPECT_GE(idx, last);
      last = idx;
    }
  }
}

TEST(Pruning, ClosedFormTwoPlayerValue) {
  const auto seq = dense_sequence(3, 6, 30);
  const auto predict = analytic_predictor(8, 3, 31);
  const auto r = temporal_prune(seq, predict, 0.0);
  const double full = predict(seq), bg = predict(background_sequence(seq));
  for (std::size_t c = 1; c < 6; ++c) {
    std::set<std::size_t> prefix, rest;
    for (std::size_t t = 0; t < 6; ++t) (t < c ? prefix : rest).insert(t);
    const double only_prefix = predict(perturb_sequence(seq, rest, {}));
    const double only_rest = predict(perturb_sequence(seq, prefix, {}));
    EXPECT_NEAR(r.prefix_values[c], 0.5 * ((only_prefix - bg) + (full - only_rest)), 1e-15);
  }
}

TEST(Explain, EfficiencyPerLevelInExactMode) {
  AttributionConfig cfg;
  cfg.prune_tolerance = 0.01;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto seq = dense_sequence(4, 7, 40 + seed);
    const auto predict = analytic_predictor(9, 4, 50 + seed);
    const auto r = explain(seq, predict, cfg);
    const double target = r.full_value - r.background_value;
    EXPECT_TRUE(r.event_meta.exact);
    EXPECT_NEAR(r.pruned_value + sum(r.event_values), target, 1e-6);
    EXPECT_NEAR(r.feature_pruned_value + sum(r.feature_values), target, 1e-6);
    double cells = r.cell_other_value + r.cell_pruned_value;
    for (const auto& row : r.cell_values) cells += sum(row);
    EXPECT_NEAR(cells, target, 1e-6);
    EXPECT_EQ(r.event_steps.size(), r.t_valid - r.pruning_index);
    EXPECT_LE(r.cell_steps.size(), cfg.top_events);
    EXPECT_LE(r.cell_features.size(), cfg.top_features);
  }
}

TEST(Explain, SampledModeEfficiencyWithinReportedTolerance) {
  AttributionConfig cfg;
  cfg.prune_tolerance = 0.0;
  cfg.exact_max_players = 4;
  cfg.permutations = 200;
  const auto seq = dense_sequence(3, 9, 60);
  const auto r = explain(seq, analytic_predictor(11, 3, 61), cfg);
  EXPECT_FALSE(r.event_meta.exact);
  EXPECT_LE(std::abs(r.pruned_value + sum(r.event_values) - (r.full_value - r.background_value)),
            r.event_meta.efficiency_tolerance + 1e-12);
}

TEST(Explain, UnobservedFeatureIsNullPlayer) {
  auto seq = dense_sequence(4, 6, 70);
  for (std::size_t t = 0; t < 6; ++t) {
    seq.obs_mask(t, 2) = 0;
    seq.values(t, 2) = 0.0;
  }
  const auto d = data::compute_deltas(seq.timestamps, seq.obs_mask);
  seq.feature_delta = d.feature_delta;
  const auto r = explain(seq, analytic_predictor(8, 4, 71), AttributionConfig{});
  EXPECT_EQ(r.feature_values[2], 0.0);
}

TEST(Explain, DeterministicReportAndJsonRoundTripOfConfig) {
  const auto seq = dense_sequence(3, 6, 80);
  const auto predict = analytic_predictor(8, 3, 81);
  EXPECT_EQ(to_json(explain(seq, predict, {})).dump(), to_json(explain(seq, predict, {})).dump());
  AttributionConfig cfg;
  cfg.permutations = 99;
  EXPECT_EQ(attribution_config_from_json(to_json(cfg)), cfg);
  auto j = to_json(cfg);
  j["bogus"] = 1;
  EXPECT_THROW(attribution_config_from_json(j), std::exception);
  cfg.prune_tolerance = -1;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
}

TEST(Ranking, TopKAndJaccard) {
  EXPECT_EQ(top_k({0.1, 0.5, 0.5, 0.2}, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_k({0.3, 0.3, 0.3}, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(jaccard({1, 2, 3}, {3, 2, 1}), 1.0);
  EXPECT_EQ(jaccard({1, 2, 3}, {4, 5, 6}), 0.0);
  EXPECT_EQ(jaccard({1, 2}, {2, 3}), 1.0 / 3.0);
}

TEST(Alignment, RealModelProducesBoundedOverlap) {
  pipeline::ModelConfig mc;
  mc.n_features = 3;
  mc.t_max = 8;
  mc.hidden_dim = 4;
  mc.backbone_dim = 8;
  mc.transformer_layers = 1;
  mc.n_heads = 2;
  mc.ff_dim = 8;
  const auto s1 = pipeline::StageOneModel::init(mc, pipeline::Variant::kFull, 1);
  const auto s2 = pipeline::StageTwoModel::init(8, 4, pipeline::Variant::kFull, 2);
  std::mt19937_64 rng(90);
  const auto seq = random_sequence(3, 8, 8, rng);
  AttributionConfig cfg;
  const auto r = alignment_check(s1, s2, seq, cfg);
  EXPECT_EQ(r.alpha_top.size(), 3u);
  EXPECT_GE(r.overlap, 0.0);
  EXPECT_LE(r.overlap, 1.0);
  for (auto t : r.alpha_top) EXPECT_LT(t, seq.t_valid - 0);

  const auto g_only = pipeline::StageTwoModel::init(8, 4, pipeline::Variant::kGOnly, 2);
  EXPECT_THROW(alignment_check(s1, g_only, seq, cfg), std::invalid_argument);

  const auto predict = make_predictor(s1, &s2);
  EXPECT_EQ(predict(seq), pipeline::predict_probability(s1, &s2, seq));
}
