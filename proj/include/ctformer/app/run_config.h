#ifndef CTFORMER_APP_RUN_CONFIG_H_
#define CTFORMER_APP_RUN_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctformer/attribution/attribution.h"
#include "ctformer/data/synthetic.h"
#include "ctformer/pipeline/experiment.h"

namespace ctformer::app {

// Everything a command needs. Sections: data, model, train, attribution, run.
// model omits n_features and t_max, which follow data.
struct RunConfig {
  data::SyntheticConfig data;
  pipeline::ModelConfig model;
  pipeline::TrainConfig train;
  attribution::AttributionConfig attribution;
  // Seeds averaged by evaluate and ablate. Empty means the configured
  // data/train seeds as they are.
  std::vector<std::uint64_t> seeds;
  // Patients explained by `explain --cohort` and `align-check` (test-split
  // positives, in cohort order); 0 means all.
  std::size_t explain_limit = 40;

  pipeline::ExperimentConfig experiment() const;
};

nlohmann::json to_json(const RunConfig& config);
// Missing keys take defaults; unknown sections or keys throw.
RunConfig run_config_from_json(const nlohmann::json& j);

// "section.key=value". The value is parsed as JSON when possible, else taken
// as a string. Unknown keys throw.
nlohmann::json apply_override(nlohmann::json config, const std::string& assignment);

// File (may be empty path for defaults) plus overrides, validated.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace ctformer::app

#endif  // CTFORMER_APP_RUN_CONFIG_H_
