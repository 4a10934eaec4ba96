#ifndef CTFORMER_PIPELINE_EXPERIMENT_H_
#define CTFORMER_PIPELINE_EXPERIMENT_H_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctformer/data/normalization.h"
#include "ctformer/data/synthetic.h"
#include "ctformer/pipeline/trainer.h"

namespace ctformer::pipeline {

struct PreparedCohort {
  std::vector<data::PatientSequence> train, val, test;  // z-scored
  data::NormalizationStats stats;
  SplitIndices split;
};

// Split (patient level), fit normalization on train, normalize every split.
PreparedCohort prepare_cohort(const std::vector<data::PatientSequence>& raw, const TrainConfig& config);

// Model dimensions that follow the data: n_features and t_max.
ModelConfig model_for_data(ModelConfig model, const data::SyntheticConfig& data);

struct SplitMetrics {
  std::size_t n = 0;
  std::size_t positives = 0;
  // Absent when the split lacks one of the classes.
  std::optional<double> auroc;
  std::optional<double> auprc;
};

SplitMetrics score_split(const std::vector<double>& probs, const std::vector<int>& labels);
nlohmann::json to_json(const SplitMetrics& m);

using StageLogger = std::function<void(int stage, const EpochRecord&)>;

struct PipelineResult {
  Variant variant = Variant::kFull;
  StageOneModel stage1;
  TrainLog stage1_log;
  std::optional<StageTwoModel> stage2;
  std::optional<TrainLog> stage2_log;
  std::string stage1_digest;
  // Recomputed after stage two; equal to stage1_digest when frozen.
  std::string stage1_digest_after;
  SplitMetrics stage1_val, stage1_test;
  std::optional<SplitMetrics> stage2_val, stage2_test;
  std::vector<double> test_scores;  // final model
  std::vector<int> test_labels;
  SplitMetrics final_test() const { return stage2_test ? *stage2_test : stage1_test; }
};

// Stage one (or reuse of `shared_stage1`, which must match the variant's
// architecture), extraction, then stage two when the variant has one.
PipelineResult run_pipeline(const PreparedCohort& cohort, const ModelConfig& model, Variant variant,
                            const TrainConfig& config, const StageOneResult* shared_stage1 = nullptr,
                            const StageLogger& logger = {});

// Variants sharing the full stage-one architecture (full, g_only, l_only)
// reuse one stage-one run.
std::vector<PipelineResult> run_ablation(const std::vector<Variant>& variants,
                                         const PreparedCohort& cohort, const ModelConfig& model,
                                         const TrainConfig& config, const StageLogger& logger = {});

// Report with the same fields for every variant; causal fields are null for
// variants without a second stage.
nlohmann::json variant_report(const PipelineResult& r);

struct ExperimentConfig {
  data::SyntheticConfig data;
  ModelConfig model;
  TrainConfig train;
};

// Seed s drives both the cohort and the training streams.
ExperimentConfig with_seed(ExperimentConfig config, std::uint64_t seed);

// Generate, prepare and run the full model for one lead time.
PipelineResult run_lead_time(const ExperimentConfig& config, int lead_time_hours,
                             const StageLogger& logger = {});

struct DepthCell {
  std::size_t cfc_layers = 0;
  std::size_t transformer_layers = 0;
  SplitMetrics test;
};

std::vector<DepthCell> run_depth_grid(const ExperimentConfig& config, std::size_t cfc_lo,
                                      std::size_t cfc_hi, std::size_t transformer_lo,
                                      std::size_t transformer_hi, const StageLogger& logger = {});

}  // namespace ctformer::pipeline

#endif  // CTFORMER_PIPELINE_EXPERIMENT_H_
