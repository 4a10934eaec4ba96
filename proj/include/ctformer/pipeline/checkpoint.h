#ifndef CTFORMER_PIPELINE_CHECKPOINT_H_
#define CTFORMER_PIPELINE_CHECKPOINT_H_

#include <string>
#include <vector>

#include "json.hpp"

#include "ctformer/pipeline/container.h"
#include "ctformer/pipeline/model.h"

namespace ctformer::pipeline {

inline constexpr int kCheckpointSchemaVersion = 1;

nlohmann::json to_json(const ModelConfig& config);
// Rejects unknown keys.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Metadata stored with stage one: model configuration, variant, stage marker,
// parameter digest and whatever the trainer adds (rng state, epochs, ...).
Container stage_one_container(const StageOneModel& model, const nlohmann::json& training);
StageOneModel stage_one_from_container(const Container& c);

Container stage_two_container(const StageTwoModel& model, const ModelConfig& config,
                              const std::string& stage_one_digest, const nlohmann::json& training);
StageTwoModel stage_two_from_container(const Container& c);

struct TupleCache {
  ModelConfig config;
  std::string stage_one_digest;
  std::vector<StageTwoTuple> tuples;
};

// Keyed by patient_id: arrays "<id>/h_cfc", "<id>/global", "<id>/attention"
// plus per-patient {t_valid, label} in the metadata.
Container tuple_cache_container(const TupleCache& cache);
TupleCache tuple_cache_from_container(const Container& c);

}  // namespace ctformer::pipeline

#endif  // CTFORMER_PIPELINE_CHECKPOINT_H_
