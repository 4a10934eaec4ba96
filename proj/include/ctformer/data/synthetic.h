#ifndef CTFORMER_DATA_SYNTHETIC_H_
#define CTFORMER_DATA_SYNTHETIC_H_

#include <cstdint>
#include <vector>

#include "ctformer/data/patient_sequence.h"

namespace ctformer::data {

inline constexpr int kLeadTimes[] = {0, 6, 12, 18, 24};

struct SyntheticConfig {
  std::size_t n_patients = 2000;
  std::size_t n_features = 12;
  std::size_t t_max = 48;
  double target_prevalence = 0.35;
  double missing_rate = 0.4;
  int lead_time_hours = 6;
  // Scales the visible step change of the planted shock.
  double shock_magnitude = 1.0;
  // Hours from shock start until the creatinine rule fires.
  double shock_ramp_hours = 36.0;
  // Probability of a transient, non-progressing episode per patient.
  double decoy_rate = 0.35;
  // Log-odds weight of the latent chronic risk on shock occurrence.
  double chronic_risk_coupling = 1.5;
  std::uint64_t rng_seed = 7;

  bool operator==(const SyntheticConfig&) const = default;
};

// Throws std::invalid_argument for out-of-range settings.
void validate(const SyntheticConfig& config);

// Deterministic in config. Sequences carry raw (unnormalized) values with
// deltas computed; labels come from kdigo_label on each raw series and
// positive windows end strictly before onset - lead_time. onset_index marks
// the first retained step at or after the planted shock start.
std::vector<PatientSequence> generate_synthetic_cohort(const SyntheticConfig& config);

}  // namespace ctformer::data

#endif  // CTFORMER_DATA_SYNTHETIC_H_
