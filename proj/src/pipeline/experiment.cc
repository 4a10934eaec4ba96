#include "ctformer/pipeline/experiment.h"

#include <algorithm>
#include <stdexcept>

#include "ctformer/metrics/metrics.h"

namespace ctformer::pipeline {

using nlohmann::json;

namespace {

std::vector<data::PatientSequence> pick(const std::vector<data::PatientSequence>& all,
                                        const std::vector<std::size_t>& idx) {
  std::vector<data::PatientSequence> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

template <typename T>
std::vector<int> labels_of(const std::vector<T>& items) {
  std::vector<int> out;
  for (const auto& x : items) out.push_back(x.label);
  return out;
}

bool shares_full_stage_one(Variant v) {
  return v == Variant::kFull || v == Variant::kGOnly || v == Variant::kLOnly;
}

EpochCallback stage_callback(const StageLogger& logger, int stage) {
  if (!logger) return {};
  return [logger, stage](const EpochRecord& r) { logger(stage, r); };
}

}  // namespace

PreparedCohort prepare_cohort(const std::vector<data::PatientSequence>& raw, const TrainConfig& config) {
  PreparedCohort out;
  out.split = split_patients(raw, config);
  out.train = pick(raw, out.split.train);
  out.stats = data::fit_normalization(out.train);
  out.train = data::zscore_normalize(std::move(out.train), out.stats);
  out.val = data::zscore_normalize(pick(raw, out.split.val), out.stats);
  out.test = data::zscore_normalize(pick(raw, out.split.test), out.stats);
  return out;
}

ModelConfig model_for_data(ModelConfig model, const data::SyntheticConfig& data) {
  model.n_features = data.n_features;
  model.t_max = data.t_max;
  return model;
}

SplitMetrics score_split(const std::vector<double>& probs, const std::vector<int>& labels) {
  SplitMetrics m;
  m.n = probs.size();
  m.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (m.positives > 0 && m.positives < m.n) {
    metrics::ScoredSet set{probs, labels};
    m.auroc = metrics::auroc(set);
    m.auprc = metrics::auprc(set);
  }
  return m;
}

json to_json(const SplitMetrics& m) {
  return json{{"n", m.n},
              {"positives", m.positives},
              {"auroc", m.auroc ? json(*m.auroc) : json(nullptr)},
              {"auprc", m.auprc ? json(*m.auprc) : json(nullptr)}};
}

PipelineResult run_pipeline(const PreparedCohort& cohort, const ModelConfig& model, Variant variant,
                            const TrainConfig& config, const StageOneResult* shared_stage1,
                            const StageLogger& logger) {
  PipelineResult r;
  r.variant = variant;
  if (shared_stage1 != nullptr) {
    if (shared_stage1->model.config != model ||
        shares_full_stage_one(shared_stage1->model.variant) != shares_full_stage_one(variant)) {
      throw std::invalid_argument("run_pipeline: shared stage one does not match variant " +
                                  variant_name(variant));
    }
    r.stage1 = shared_stage1->model;
    r.stage1_log = shared_stage1->log;
  } else {
    StageOneResult s1 = train_stage1(cohort.train, cohort.val, model, variant, config,
                                     stage_callback(logger, 1));
    r.stage1 = std::move(s1.model);
    r.stage1_log = std::move(s1.log);
  }
  r.stage1_digest = parameter_digest(r.stage1.params());
  const std::vector<int> val_labels = labels_of(cohort.val);
  r.test_labels = labels_of(cohort.test);
  r.stage1_val = score_split(predict_stage1(r.stage1, cohort.val, config.threads), val_labels);
  const std::vector<double> stage1_test = predict_stage1(r.stage1, cohort.test, config.threads);
  r.stage1_test = score_split(stage1_test, r.test_labels);
  r.test_scores = stage1_test;

  if (has_stage_two(variant)) {
    const auto train_t = extract_representations(r.stage1, cohort.train, config.threads);
    const auto val_t = extract_representations(r.stage1, cohort.val, config.threads);
    const auto test_t = extract_representations(r.stage1, cohort.test, config.threads);
    StageTwoResult s2 = train_stage2(train_t, val_t, model, variant, config, &r.stage1.head,
                                     stage_callback(logger, 2));
    r.stage2_val = score_split(predict_stage2(s2.model, val_t, config.threads), val_labels);
    r.test_scores = predict_stage2(s2.model, test_t, config.threads);
    r.stage2_test = score_split(r.test_scores, r.test_labels);
    r.stage2 = std::move(s2.model);
    r.stage2_log = std::move(s2.log);
  }
  r.stage1_digest_after = parameter_digest(r.stage1.params());
  return r;
}

std::vector<PipelineResult> run_ablation(const std::vector<Variant>& variants,
                                         const PreparedCohort& cohort, const ModelConfig& model,
                                         const TrainConfig& config, const StageLogger& logger) {
  std::optional<StageOneResult> shared;
  std::vector<PipelineResult> out;
  for (Variant v : variants) {
    if (shares_full_stage_one(v)) {
      if (!shared) {
        shared = train_stage1(cohort.train, cohort.val, model, Variant::kFull, config,
                              stage_callback(logger, 1));
      }
      out.push_back(run_pipeline(cohort, model, v, config, &*shared, logger));
    } else {
      out.push_back(run_pipeline(cohort, model, v, config, nullptr, logger));
    }
  }
  return out;
}

json variant_report(const PipelineResult& r) {
  json j{{"variant", variant_name(r.variant)},
         {"stage1_digest", r.stage1_digest},
         {"stage1_frozen", r.stage1_digest == r.stage1_digest_after},
         {"stage1_epochs", r.stage1_log.epochs.size()},
         {"stage1_best_epoch", r.stage1_log.best_epoch},
         {"stage1_val", to_json(r.stage1_val)},
         {"stage1_test", to_json(r.stage1_test)},
         {"test", to_json(r.final_test())}};
  const bool causal = r.stage2 && r.variant != Variant::kGOnly;
  j["has_stage2"] = r.stage2.has_value();
  j["causal_available"] = causal;
  j["stage2_epochs"] = r.stage2_log ? json(r.stage2_log->epochs.size()) : json(nullptr);
  j["stage2_val"] = r.stage2_val ? to_json(*r.stage2_val) : json(nullptr);
  j["stage2_test"] = r.stage2_test ? to_json(*r.stage2_test) : json(nullptr);
  j["stage2_digest"] = r.stage2 ? json(parameter_digest(r.stage2->params())) : json(nullptr);
  return j;
}

ExperimentConfig with_seed(ExperimentConfig config, std::uint64_t seed) {
  config.data.rng_seed = seed;
  config.train.rng_seed = seed;
  return config;
}

PipelineResult run_lead_time(const ExperimentConfig& config, int lead_time_hours,
                             const StageLogger& logger) {
  data::SyntheticConfig data = config.data;
  data.lead_time_hours = lead_time_hours;
  const PreparedCohort cohort = prepare_cohort(data::generate_synthetic_cohort(data), config.train);
  return run_pipeline(cohort, model_for_data(config.model, data), Variant::kFull, config.train,
                      nullptr, logger);
}

std::vector<DepthCell> run_depth_grid(const ExperimentConfig& config, std::size_t cfc_lo,
                                      std::size_t cfc_hi, std::size_t transformer_lo,
                                      std::size_t transformer_hi, const StageLogger& logger) {
  if (cfc_lo == 0 || transformer_lo == 0 || cfc_lo > cfc_hi || transformer_lo > transformer_hi) {
    throw std::invalid_argument("run_depth_grid: ranges must be non-empty and start at >= 1");
  }
  const PreparedCohort cohort =
      prepare_cohort(data::generate_synthetic_cohort(config.data), config.train);
  std::vector<DepthCell> out;
  for (std::size_t c = cfc_lo; c <= cfc_hi; ++c) {
    for (std::size_t t = transformer_lo; t <= transformer_hi; ++t) {
      ModelConfig model = model_for_data(config.model, config.data);
      model.cfc_layers = c;
      model.transformer_layers = t;
      const PipelineResult r = run_pipeline(cohort, model, Variant::kFull, config.train, nullptr, logger);
      out.push_back(DepthCell{c, t, r.final_test()});
    }
  }
  return out;
}

}  // namespace ctformer::pipeline
