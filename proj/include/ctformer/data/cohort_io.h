#ifndef CTFORMER_DATA_COHORT_IO_H_
#define CTFORMER_DATA_COHORT_IO_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctformer/data/normalization.h"
#include "ctformer/data/patient_sequence.h"
#include "ctformer/data/synthetic.h"

namespace ctformer::data {

inline constexpr int kCohortSchemaVersion = 1;

struct Cohort {
  std::optional<SyntheticConfig> config;
  std::vector<PatientSequence> patients;
};

nlohmann::json to_json(const SyntheticConfig& config);
// Rejects unknown keys.
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PatientSequence& seq);
PatientSequence patient_from_json(const nlohmann::json& j);

nlohmann::json to_json(const NormalizationStats& stats);
NormalizationStats normalization_from_json(const nlohmann::json& j);

// NDJSON: a header object {"schema_version", "config"} followed by one patient
// object per line. Doubles are written in shortest round-trip form so a
// save/load cycle is bit-exact.
void save_cohort(const std::string& path, const Cohort& cohort);

// An empty file yields an empty cohort. Malformed lines and sequences that
// violate their invariants raise std::runtime_error naming the line number.
Cohort load_cohort(const std::string& path);

}  // namespace ctformer::data

#endif  // CTFORMER_DATA_COHORT_IO_H_
