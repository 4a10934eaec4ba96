#ifndef CTFORMER_DATA_NORMALIZATION_H_
#define CTFORMER_DATA_NORMALIZATION_H_

#include <cstdint>
#include <vector>

#include "ctformer/data/patient_sequence.h"

namespace ctformer::data {

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  // 1 where the feature had zero variance (or no observations) and std was
  // forced to 1.
  std::vector<std::uint8_t> degenerate;

  bool operator==(const NormalizationStats&) const = default;
};

// Per-feature moments over the observed cells of the given patients. Pass the
// training split only.
NormalizationStats fit_normalization(const std::vector<PatientSequence>& training);

// (v - mean) / std on observed cells; unobserved and padded cells become 0.
std::vector<PatientSequence> zscore_normalize(std::vector<PatientSequence> cohort,
                                              const NormalizationStats& stats);

}  // namespace ctformer::data

#endif  // CTFORMER_DATA_NORMALIZATION_H_
