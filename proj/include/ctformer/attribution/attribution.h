#ifndef CTFORMER_ATTRIBUTION_ATTRIBUTION_H_
#define CTFORMER_ATTRIBUTION_ATTRIBUTION_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctformer/attribution/shapley.h"
#include "ctformer/data/patient_sequence.h"
#include "ctformer/pipeline/model.h"

namespace ctformer::attribution {

using data::PatientSequence;

// Model output (risk probability) for one sequence. Must be deterministic and
// thread safe.
using Predictor = std::function<double(const PatientSequence&)>;

Predictor make_predictor(const pipeline::StageOneModel& stage1, const pipeline::StageTwoModel* stage2);

// Turns every cell with off(t, f) != 0 unobserved: mask 0, value 0, deltas
// re-derived. Timestamps and step_delta are kept.
PatientSequence perturb_cells(const PatientSequence& seq, const data::MaskGrid& off);

// A cell is off when its step is in off_events or its feature is in
// off_features. Throws std::out_of_range for indices beyond t_valid or F.
PatientSequence perturb_sequence(const PatientSequence& seq, const std::set<std::size_t>& off_events,
                                 const std::set<std::size_t>& off_features);

// The all-unobserved background.
PatientSequence background_sequence(const PatientSequence& seq);

// Each player owns a set of cells inside the valid window; cells owned by
// absent players are switched off.
using Cell = std::pair<std::size_t, std::size_t>;
CoalitionGame cell_game(const PatientSequence& seq, const Predictor& predict,
                        std::vector<std::vector<Cell>> players);

struct PruningResult {
  std::size_t index = 0;
  // prefix_values[c]: Shapley value of the grouped prefix {steps < c} in the
  // two-player game against {steps >= c}, for c in [0, t_valid).
  std::vector<double> prefix_values;
};

// Scans every cut and keeps the largest whose grouped-prefix attribution has
// magnitude <= tolerance. Cut 0 always qualifies. Throws on tolerance < 0.
PruningResult temporal_prune(const PatientSequence& seq, const Predictor& predict, double tolerance);

struct AttributionConfig {
  double prune_tolerance = 0.025;
  std::size_t exact_max_players = 10;
  std::size_t permutations = 64;
  std::size_t top_events = 3;
  std::size_t top_features = 5;
  std::size_t alignment_k = 3;
  std::uint64_t seed = 11;
  std::size_t threads = 1;

  bool operator==(const AttributionConfig&) const = default;
};

void validate(const AttributionConfig& config);
nlohmann::json to_json(const AttributionConfig& config);
AttributionConfig attribution_config_from_json(const nlohmann::json& j);

struct LevelMeta {
  bool exact = true;
  std::size_t players = 0;
  std::size_t permutations = 0;
  std::size_t evaluations = 0;
  // Bound on |sum of values - (full - background)| the caller may assume.
  double efficiency_tolerance = 0.0;
};

struct AttributionReport {
  std::string patient_id;
  int label = 0;
  std::size_t t_valid = 0;
  double full_value = 0.0;
  double background_value = 0.0;

  std::size_t pruning_index = 0;
  std::vector<double> pruning_curve;

  // Event level: one player per retained step plus the grouped prefix.
  double pruned_value = 0.0;
  std::vector<std::size_t> event_steps;
  std::vector<double> event_values;
  std::vector<double> event_standard_errors;
  LevelMeta event_meta;

  // Feature level: one player per feature over the retained steps plus the
  // grouped prefix.
  double feature_pruned_value = 0.0;
  std::vector<double> feature_values;
  std::vector<double> feature_standard_errors;
  LevelMeta feature_meta;

  // Cell level: top events x top features, everything else retained in one
  // "other" player, plus the grouped prefix.
  std::vector<std::size_t> cell_steps;
  std::vector<std::size_t> cell_features;
  std::vector<std::vector<double>> cell_values;
  double cell_other_value = 0.0;
  double cell_pruned_value = 0.0;
  LevelMeta cell_meta;

  AttributionConfig config;
};

// Exact enumeration up to exact_max_players, permutation sampling beyond.
ShapleyValues solve(const CoalitionGame& game, const AttributionConfig& config);

void event_level(const PatientSequence& seq, const Predictor& predict,
                 const AttributionConfig& config, AttributionReport& report);
void feature_level(const PatientSequence& seq, const Predictor& predict,
                   const AttributionConfig& config, AttributionReport& report);
// Uses the event and feature rankings already in the report.
void cell_level(const PatientSequence& seq, const Predictor& predict,
                const AttributionConfig& config, AttributionReport& report);

// Pruning followed by all three levels.
AttributionReport explain(const PatientSequence& seq, const Predictor& predict,
                          const AttributionConfig& config);

// Indices of the k largest scores, ties broken by lower index.
std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k);
double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

struct AlignmentResult {
  std::string patient_id;
  std::vector<std::size_t> alpha_top;
  std::vector<std::size_t> shapley_top;
  double overlap = 0.0;
  std::optional<std::size_t> onset_index;
};

// Top-k steps by causal attention alpha versus top-k retained steps by
// |event Shapley|. Requires a stage-two model with a causal branch.
AlignmentResult alignment_check(const pipeline::StageOneModel& stage1,
                                const pipeline::StageTwoModel& stage2, const PatientSequence& seq,
                                const AttributionConfig& config);

nlohmann::json to_json(const AttributionReport& report);
// CSV exports: step,timestamp,value,standard_error / feature,name,value,
// standard_error / step,feature,name,value / cut,prefix_value.
void write_event_csv(const std::string& path, const AttributionReport& r, const PatientSequence& seq);
void write_feature_csv(const std::string& path, const AttributionReport& r);
void write_cell_csv(const std::string& path, const AttributionReport& r);
void write_pruning_csv(const std::string& path, const AttributionReport& r);

}  // namespace ctformer::attribution

#endif  // CTFORMER_ATTRIBUTION_ATTRIBUTION_H_
