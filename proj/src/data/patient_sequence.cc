#include "ctformer/data/patient_sequence.h"

#include <cmath>
#include <stdexcept>

namespace ctformer::data {

std::string channel_name(std::size_t feature) {
  switch (feature) {
    case kCreatinine:
      return "creatinine";
    case kUrineRate:
      return "urine_rate";
    case kRespiratoryRate:
      return "resp_rate";
    default:
      return "channel_" + std::to_string(feature);
  }
}

Deltas compute_deltas(std::span<const double> timestamps, const MaskGrid& obs_mask) {
  const std::size_t n = timestamps.size();
  if (obs_mask.rows < n) {
    throw std::invalid_argument("compute_deltas: mask has " + std::to_string(obs_mask.rows) +
                                " rows for " + std::to_string(n) + " timestamps");
  }
  Deltas out{RealGrid(obs_mask.rows, obs_mask.cols, 0.0), std::vector<double>(obs_mask.rows, 0.0)};
  for (std::size_t t = 1; t < n; ++t) {
    const double gap = timestamps[t] - timestamps[t - 1];
    if (!(gap > 0.0)) {
      throw std::invalid_argument("compute_deltas: timestamps not strictly increasing at step " +
                                  std::to_string(t));
    }
    out.step_delta[t] = gap;
    for (std::size_t f = 0; f < obs_mask.cols; ++f) {
      out.feature_delta(t, f) = obs_mask(t - 1, f) ? gap : out.feature_delta(t - 1, f) + gap;
    }
  }
  return out;
}

void validate(const PatientSequence& seq) {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("patient " + seq.patient_id + ": " + what);
  };
  const std::size_t t_max = seq.values.rows, f = seq.values.cols;
  if (seq.obs_mask.rows != t_max || seq.obs_mask.cols != f || seq.feature_delta.rows != t_max ||
      seq.feature_delta.cols != f || seq.step_delta.size() != t_max) {
    fail("inconsistent matrix shapes");
  }
  if (seq.t_valid > t_max) fail("t_valid exceeds t_max");
  if (seq.timestamps.size() != seq.t_valid) fail("timestamps length differs from t_valid");
  if (seq.label != 0 && seq.label != 1) fail("label must be 0 or 1");
  if (seq.onset_index && *seq.onset_index >= seq.t_valid) fail("onset_index beyond t_valid");
  for (std::size_t t = 0; t < t_max; ++t) {
    for (std::size_t c = 0; c < f; ++c) {
      const double v = seq.values(t, c);
      const double d = seq.feature_delta(t, c);
      const std::uint8_t m = seq.obs_mask(t, c);
      if (!std::isfinite(v) || !std::isfinite(d)) fail("non-finite cell at step " + std::to_string(t));
      if (m > 1) fail("mask entry not binary at step " + std::to_string(t));
      if (t >= seq.t_valid && (m != 0 || v != 0.0 || d != 0.0)) {
        fail("non-zero padding at step " + std::to_string(t));
      }
      if (t < seq.t_valid && m == 0 && v != 0.0) {
        fail("unobserved cell carries a value at step " + std::to_string(t));
      }
    }
    if (t >= seq.t_valid && seq.step_delta[t] != 0.0) {
      fail("non-zero step_delta padding at step " + std::to_string(t));
    }
  }
  const Deltas expected = compute_deltas(seq.timestamps, seq.obs_mask);
  if (expected.feature_delta != seq.feature_delta) fail("feature_delta violates its recurrence");
  if (expected.step_delta != seq.step_delta) fail("step_delta differs from timestamp gaps");
}

}  // namespace ctformer::data
