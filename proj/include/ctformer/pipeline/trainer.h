#ifndef CTFORMER_PIPELINE_TRAINER_H_
#define CTFORMER_PIPELINE_TRAINER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctformer/data/patient_sequence.h"
#include "ctformer/pipeline/model.h"

namespace ctformer::pipeline {

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr_stage1 = 1e-3;
  double lr_stage2 = 1e-3;
  std::size_t max_epochs_stage1 = 15;
  std::size_t max_epochs_stage2 = 40;
  // Training stops once this many consecutive epochs fail to improve the
  // validation score.
  std::size_t patience = 10;
  double lambda = 1e-3;
  std::uint64_t rng_seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  double positive_weight = 1.0;
  // Start the stage-two classifier from the stage-one head.
  bool warm_start = false;
  std::size_t threads = 1;

  bool operator==(const TrainConfig&) const = default;
};

// Throws std::invalid_argument.
void validate(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Patient-level split, stratified by label, deterministic in rng_seed.
SplitIndices split_patients(const std::vector<data::PatientSequence>& cohort,
                            const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_auroc;
  std::optional<double> val_auprc;
  bool improved = false;
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct StageOneResult {
  StageOneModel model;
  TrainLog log;
};

StageOneResult train_stage1(const std::vector<data::PatientSequence>& train,
                            const std::vector<data::PatientSequence>& val,
                            const ModelConfig& model_config, Variant variant,
                            const TrainConfig& config, const EpochCallback& on_epoch = {});

struct StageTwoResult {
  StageTwoModel model;
  TrainLog log;
};

// Trains only the stage-two parameters of `variant`. When warm_start is set
// and `stage1_head` is given, the classifier starts from it.
StageTwoResult train_stage2(const std::vector<StageTwoTuple>& train,
                            const std::vector<StageTwoTuple>& val, const ModelConfig& model_config,
                            Variant variant, const TrainConfig& config,
                            const nn::LogisticHead* stage1_head = nullptr,
                            const EpochCallback& on_epoch = {});

// One tuple per patient, in cohort order. Stage-one parameters are read only.
std::vector<StageTwoTuple> extract_representations(const StageOneModel& model,
                                                   const std::vector<data::PatientSequence>& cohort,
                                                   std::size_t threads);

std::vector<double> predict_stage1(const StageOneModel& model,
                                   const std::vector<data::PatientSequence>& cohort,
                                   std::size_t threads);
std::vector<double> predict_stage2(const StageTwoModel& model,
                                   const std::vector<StageTwoTuple>& tuples, std::size_t threads);

}  // namespace ctformer::pipeline

#endif  // CTFORMER_PIPELINE_TRAINER_H_
