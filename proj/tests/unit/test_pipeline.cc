#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ctformer/data/synthetic.h"
#include "ctformer/grad/ops.h"
#include "ctformer/pipeline/checkpoint.h"
#include "ctformer/pipeline/container.h"
#include "ctformer/pipeline/experiment.h"
#include "ctformer/pipeline/trainer.h"
#include "helpers.h"

using namespace ctformer;
using namespace ctformer::pipeline;
using grad::Tensor;
using testing_helpers::random_sequence;

namespace {

ModelConfig tiny_model(std::size_t features = 3, std::size_t t_max = 6) {
  ModelConfig c;
  c.n_features = features;
  c.t_max = t_max;
  c.hidden_dim = 4;
  c.backbone_dim = 8;
  c.cfc_layers = 1;
  c.transformer_layers = 1;
  c.n_heads = 2;
  c.ff_dim = 8;
  return c;
}

// Feature 0 carries the label with a wide margin.
std::vector<data::PatientSequence> separable_cohort(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<data::PatientSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = random_sequence(3, 6, 3 + rng() % 4, rng, "toy" + std::to_string(i));
    s.label = static_cast<int>(i % 2);
    for (std::size_t t = 0; t < s.t_valid; ++t) {
      s.obs_mask(t, 0) = 1;
      s.values(t, 0) = s.label ? 1.5 : -1.5;
    }
    const auto d = data::compute_deltas(s.timestamps, s.obs_mask);
    s.feature_delta = d.feature_delta;
    s.step_delta = d.step_delta;
    out.push_back(std::move(s));
  }
  return out;
}

TrainConfig quick_train(std::size_t epochs = 5) {
  TrainConfig c;
  c.batch_size = 8;
  c.max_epochs_stage1 = epochs;
  c.max_epochs_stage2 = epochs;
  c.lr_stage1 = 1e-2;
  c.lr_stage2 = 1e-2;
  return c;
}

ExperimentConfig small_experiment(std::size_t patients = 160) {
  ExperimentConfig e;
  e.data.n_patients = patients;
  e.data.n_features = 5;
  e.data.t_max = 12;
  e.model = model_for_data(tiny_model(), e.data);
  e.train = quick_train(4);
  return e;
}

std::vector<double> flat(const std::vector<nn::NamedTensor>& ps) {
  std::vector<double> out;
  for (const auto& p : ps) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

}  // namespace

TEST(TrainConfigTest, ValidationAndJson) {
  TrainConfig c;
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(train_config_from_json(to_json(c)), c);
  c.val_fraction = 0.3;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = TrainConfig{};
  c.lr_stage1 = 0.0;
  EXPECT_THROW(validate(c), std::invalid_argument);
  auto j = to_json(TrainConfig{});
  j["mystery"] = 1;
  EXPECT_THROW(train_config_from_json(j), std::exception);
}

TEST(Split, StratifiedDisjointAndDeterministic) {
  data::SyntheticConfig dc;
  dc.n_patients = 400;
  dc.t_max = 12;
  const auto cohort = data::generate_synthetic_cohort(dc);
  TrainConfig c;
  const auto a = split_patients(cohort, c), b = split_patients(cohort, c);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::set<std::size_t> all;
  for (auto* part : {&a.train, &a.val, &a.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), cohort.size());
  EXPECT_EQ(a.train.size() + a.val.size() + a.test.size(), cohort.size());
  EXPECT_NEAR(static_cast<double>(a.train.size()) / 400.0, 0.70, 0.01);
  auto rate = [&](const std::vector<std::size_t>& idx) {
    double p = 0;
    for (auto i : idx) p += cohort[i].label;
    return p / static_cast<double>(idx.size());
  };
  EXPECT_NEAR(rate(a.train), rate(a.test), 0.03);
  c.rng_seed = 2;
  EXPECT_NE(split_patients(cohort, c).train, a.train);
}

TEST(StageOne, ToySeparableCohortReachesLowLoss) {
  const auto cohort = separable_cohort(32, 1);
  TrainConfig c = quick_train(200);
  c.patience = 200;
  const auto result = train_stage1(cohort, cohort, tiny_model(), Variant::kFull, c);
  ASSERT_LE(result.log.epochs.size(), 200u);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : result.log.epochs) best = std::min(best, r.train_loss);
  EXPECT_LT(best, 0.05);
}

TEST(StageOne, SameSeedSameParameters) {
  const auto cohort = separable_cohort(24, 2);
  const auto a = train_stage1(cohort, cohort, tiny_model(), Variant::kFull, quick_train(3));
  const auto b = train_stage1(cohort, cohort, tiny_model(), Variant::kFull, quick_train(3));
  EXPECT_EQ(flat(a.model.params()), flat(b.model.params()));
  TrainConfig other = quick_train(3);
  other.rng_seed = 9;
  const auto c = train_stage1(cohort, cohort, tiny_model(), Variant::kFull, other);
  EXPECT_NE(flat(a.model.params()), flat(c.model.params()));
}

TEST(StageOne, PatienceZeroStopsAtFirstNonImprovement) {
  const auto cohort = separable_cohort(24, 3);
  TrainConfig c = quick_train(60);
  c.patience = 0;
  const auto result = train_stage1(cohort, cohort, tiny_model(), Variant::kFull, c);
  std::size_t first_stale = result.log.epochs.size();
  for (std::size_t i = 0; i < result.log.epochs.size(); ++i) {
    if (!result.log.epochs[i].improved) {
      first_stale = i;
      break;
    }
  }
  ASSERT_LT(first_stale, 60u);
  EXPECT_EQ(result.log.epochs.size(), first_stale + 1);
  EXPECT_TRUE(result.log.early_stopped);
  for (std::size_t i = 0; i < result.log.epochs.size(); ++i) EXPECT_EQ(result.log.epochs[i].epoch, i);
}

TEST(StageOne, NonFiniteLossAbortsWithDiagnostics) {
  auto cohort = separable_cohort(8, 4);
  cohort[3].values(0, 1) = std::numeric_limits<double>::quiet_NaN();
  cohort[3].obs_mask(0, 1) = 1;
  try {
    train_stage1(cohort, cohort, tiny_model(), Variant::kFull, quick_train(2));
    FAIL() << "expected non-finite abort";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST(Extraction, CacheMatchesRecomputationAndShape) {
  const auto cohort = separable_cohort(20, 5);
  const auto model = StageOneModel::init(tiny_model(), Variant::kFull, 6);
  const std::string before = parameter_digest(model.params());
  const auto tuples = extract_representations(model, cohort, 2);
  EXPECT_EQ(parameter_digest(model.params()), before);
  ASSERT_EQ(tuples.size(), cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto fresh = stage_one_forward(model, cohort[i]);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(tuples[i].global[k], fresh.global[k], 1e-12);
    for (std::size_t r = 0; r < tuples[i].t_valid; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 6; ++c) s += tuples[i].attention.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
    EXPECT_EQ(tuples[i].patient_id, cohort[i].patient_id);
    EXPECT_EQ(tuples[i].label, cohort[i].label);
  }
}

TEST(Extraction, ResultsIndependentOfThreadCount) {
  const auto cohort = separable_cohort(16, 7);
  const auto model = StageOneModel::init(tiny_model(), Variant::kFull, 8);
  EXPECT_EQ(predict_stage1(model, cohort, 1), predict_stage1(model, cohort, 3));
}

TEST(StageTwo, DoesNotTouchStageOneAndHasNoStageOneGradient) {
  const auto cohort = separable_cohort(24, 9);
  const auto s1 = train_stage1(cohort, cohort, tiny_model(), Variant::kFull, quick_train(2));
  const std::string digest = parameter_digest(s1.model.params());
  const auto tuples = extract_representations(s1.model, cohort, 1);
  const auto s2 = train_stage2(tuples, tuples, tiny_model(), Variant::kFull, quick_train(3));
  EXPECT_EQ(parameter_digest(s1.model.params()), digest);

  for (auto& p : s1.model.params()) p.tensor.zero_grad();
  for (auto& p : s2.model.params()) p.tensor.zero_grad();
  {
    grad::Tape tape;
    const auto out = stage_two_from_sequence(s1.model, s2.model, cohort[0]);
    tape.backward(grad::binary_cross_entropy(out.probability, 1.0));
  }
  for (const auto& p : s1.model.params()) {
    for (double g : p.tensor.grad()) ASSERT_EQ(g, 0.0) << p.name;
  }
  double stage2_norm = 0;
  for (const auto& p : s2.model.params())
    for (double g : p.tensor.grad()) stage2_norm += g * g;
  EXPECT_GT(stage2_norm, 0.0);
}

TEST(StageTwo, SaturatedGateRecoversStageOnePath) {
  const auto cohort = separable_cohort(12, 10);
  const auto s1 = StageOneModel::init(tiny_model(), Variant::kFull, 11);
  auto s2 = StageTwoModel::init(6, 4, Variant::kFull, 12);
  for (double& v : s2.fusion.gate_w.mutable_values()) v = 0.0;
  for (double& v : s2.fusion.gate_b.mutable_values()) v = 50.0;
  std::copy(s1.head.weight.values().begin(), s1.head.weight.values().end(),
            s2.fusion.classifier.weight.mutable_values().begin());
  s2.fusion.classifier.bias.mutable_values()[0] = s1.head.bias[0];
  for (const auto& seq : cohort) {
    const auto out = stage_two_from_sequence(s1, s2, seq);
    for (double g : out.gate.values()) EXPECT_EQ(g, 1.0);
    EXPECT_EQ(out.probability.item(), predict_probability(s1, nullptr, seq));
  }
}

TEST(StageTwo, WarmStartCopiesStageOneHead) {
  const auto cohort = separable_cohort(8, 13);
  const auto s1 = StageOneModel::init(tiny_model(), Variant::kFull, 14);
  const auto tuples = extract_representations(s1, cohort, 1);
  TrainConfig c = quick_train(1);
  c.lr_stage2 = 1e-12;
  c.warm_start = true;
  const auto s2 = train_stage2(tuples, tuples, tiny_model(), Variant::kGOnly, c, &s1.head);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(s2.model.fusion.classifier.weight[i], s1.head.weight[i], 1e-9);
}

TEST(StageTwo, RejectsMismatchedTuplesAndStageOneOnlyVariants) {
  const auto cohort = separable_cohort(4, 15);
  const auto s1 = StageOneModel::init(tiny_model(), Variant::kFull, 16);
  const auto tuples = extract_representations(s1, cohort, 1);
  auto wrong = tiny_model();
  wrong.hidden_dim = 6;
  EXPECT_THROW(train_stage2(tuples, tuples, wrong, Variant::kFull, quick_train(1)), std::invalid_argument);
  EXPECT_THROW(train_stage2(tuples, tuples, tiny_model(), Variant::kNoTransformer, quick_train(1)),
               std::invalid_argument);
}

TEST(Variants, NamesRoundTripAndUnknownListsValid) {
  for (auto v : all_variants()) EXPECT_EQ(parse_variant(variant_name(v)), v);
  try {
    parse_variant("wide");
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    for (auto v : all_variants()) EXPECT_NE(msg.find(variant_name(v)), std::string::npos) << msg;
  }
  EXPECT_FALSE(has_stage_two(Variant::kNoTransformer));
  EXPECT_TRUE(has_stage_two(Variant::kFull));
}

TEST(Checkpoint, StageOneRoundTripIsByteIdenticalAndReproducesLogits) {
  const auto cohort = separable_cohort(6, 17);
  for (auto v : {Variant::kFull, Variant::kNoCfc, Variant::kNoTransformer}) {
    const auto model = StageOneModel::init(tiny_model(), v, 18);
    const auto c = stage_one_container(model, {{"epochs", 3}});
    const std::string bytes = serialize_container(c);
    const auto loaded = stage_one_from_container(parse_container(bytes));
    EXPECT_EQ(serialize_container(stage_one_container(loaded, {{"epochs", 3}})), bytes);
    EXPECT_EQ(predict_stage1(loaded, cohort, 1), predict_stage1(model, cohort, 1));
  }
}

TEST(Checkpoint, TamperedDigestIsRejected) {
  const auto model = StageOneModel::init(tiny_model(), Variant::kFull, 19);
  auto c = stage_one_container(model, nlohmann::json::object());
  c.arrays[0].values[0] += 1.0;
  EXPECT_THROW(stage_one_from_container(c), std::exception);
}

TEST(Checkpoint, StageTwoAndTupleCacheRoundTrip) {
  const auto cohort = separable_cohort(6, 20);
  const auto s1 = StageOneModel::init(tiny_model(), Variant::kFull, 21);
  const auto s2 = StageTwoModel::init(6, 4, Variant::kFull, 22);
  const auto digest = parameter_digest(s1.params());
  const std::string bytes = serialize_container(stage_two_container(s2, tiny_model(), digest, {}));
  const auto loaded = stage_two_from_container(parse_container(bytes));
  EXPECT_EQ(serialize_container(stage_two_container(loaded, tiny_model(), digest, {})), bytes);

  const auto tuples = extract_representations(s1, cohort, 1);
  EXPECT_EQ(predict_stage2(loaded, tuples, 1), predict_stage2(s2, tuples, 1));
  const TupleCache cache{tiny_model(), digest, tuples};
  const std::string cache_bytes = serialize_container(tuple_cache_container(cache));
  const auto back = tuple_cache_from_container(parse_container(cache_bytes));
  EXPECT_EQ(back.stage_one_digest, digest);
  ASSERT_EQ(back.tuples.size(), cohort.size());
  EXPECT_EQ(serialize_container(tuple_cache_container(back)), cache_bytes);
  EXPECT_EQ(predict_stage2(s2, back.tuples, 1), predict_stage2(s2, tuples, 1));
}

TEST(Container, CorruptInputIsRejected) {
  const auto bytes = serialize_container(stage_one_container(
      StageOneModel::init(tiny_model(), Variant::kFull, 23), nlohmann::json::object()));
  EXPECT_THROW(parse_container("NOTMAGIC" + bytes.substr(8)), std::runtime_error);
  EXPECT_THROW(parse_container(bytes.substr(0, bytes.size() - 5)), std::runtime_error);
}

TEST(Pipeline, ToyStageTwoDoesNotRegressValidationAuprc) {
  const auto e = small_experiment(240);
  auto train = e.train;
  train.max_epochs_stage1 = 8;
  train.max_epochs_stage2 = 20;
  const auto cohort = prepare_cohort(data::generate_synthetic_cohort(e.data), train);
  const auto r = run_pipeline(cohort, e.model, Variant::kFull, train);
  ASSERT_TRUE(r.stage2_val && r.stage2_val->auprc && r.stage1_val.auprc);
  EXPECT_GE(*r.stage2_val->auprc, *r.stage1_val.auprc - 0.02);
  EXPECT_EQ(r.stage1_digest, r.stage1_digest_after);
}

TEST(Pipeline, NoTransformerReportHasNoCausalFields) {
  const auto e = small_experiment(80);
  const auto cohort = prepare_cohort(data::generate_synthetic_cohort(e.data), e.train);
  const auto r = run_pipeline(cohort, e.model, Variant::kNoTransformer, e.train);
  EXPECT_FALSE(r.stage2.has_value());
  const auto rep = variant_report(r);
  EXPECT_FALSE(rep.at("has_stage2").get<bool>());
  EXPECT_FALSE(rep.at("causal_available").get<bool>());
  EXPECT_TRUE(rep.at("stage2_test").is_null());
}

TEST(Pipeline, AblationReportsAreDeterministicAndShareStageOne) {
  const auto e = small_experiment(80);
  const auto cohort = prepare_cohort(data::generate_synthetic_cohort(e.data), e.train);
  const std::vector<Variant> vs{Variant::kFull, Variant::kGOnly, Variant::kLOnly};
  const auto a = run_ablation(vs, cohort, e.model, e.train);
  const auto b = run_ablation(vs, cohort, e.model, e.train);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(variant_report(a[i]).dump(), variant_report(b[i]).dump());
    EXPECT_EQ(a[i].stage1_digest, a[0].stage1_digest);
    EXPECT_EQ(a[i].stage1_digest, a[i].stage1_digest_after);
  }
  auto keys_of = [](const nlohmann::json& j) {
    std::set<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
    return keys;
  };
  const auto keys0 = keys_of(variant_report(a[0]));
  for (const auto& r : a) EXPECT_EQ(keys_of(variant_report(r)), keys0);
}

TEST(Pipeline, EpochLoggerSeesMonotoneEpochs) {
  const auto e = small_experiment(80);
  const auto cohort = prepare_cohort(data::generate_synthetic_cohort(e.data), e.train);
  std::vector<std::pair<int, std::size_t>> seen;
  run_pipeline(cohort, e.model, Variant::kFull, e.train, nullptr,
               [&](int stage, const EpochRecord& r) { seen.emplace_back(stage, r.epoch); });
  ASSERT_FALSE(seen.empty());
  for (std::size_t i = 1; i < seen.size(); ++i) {
    if (seen[i].first == seen[i - 1].first) EXPECT_EQ(seen[i].second, seen[i - 1].second + 1);
    else EXPECT_EQ(seen[i].second, 0u);
  }
}

TEST(Pipeline, DepthGridCardinality) {
  auto e = small_experiment(60);
  e.train.max_epochs_stage1 = 1;
  e.train.max_epochs_stage2 = 1;
  const auto cells = run_depth_grid(e, 1, 2, 1, 3);
  ASSERT_EQ(cells.size(), 6u);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& c : cells) seen.insert({c.cfc_layers, c.transformer_layers});
  EXPECT_EQ(seen.size(), 6u);
}
