#include "ctformer/data/normalization.h"

#include <cmath>
#include <stdexcept>

namespace ctformer::data {

NormalizationStats fit_normalization(const std::vector<PatientSequence>& training) {
  if (training.empty()) throw std::invalid_argument("fit_normalization: empty training split");
  const std::size_t f = training.front().n_features();
  std::vector<double> sum(f, 0.0), sum_sq(f, 0.0);
  std::vector<std::size_t> count(f, 0);
  for (const PatientSequence& seq : training) {
    if (seq.n_features() != f) throw std::invalid_argument("fit_normalization: feature count differs");
    for (std::size_t t = 0; t < seq.t_valid; ++t) {
      for (std::size_t c = 0; c < f; ++c) {
        if (!seq.obs_mask(t, c)) continue;
        sum[c] += seq.values(t, c);
        ++count[c];
      }
    }
  }
  NormalizationStats stats{std::vector<double>(f, 0.0), std::vector<double>(f, 1.0),
                           std::vector<std::uint8_t>(f, 0)};
  for (std::size_t c = 0; c < f; ++c) {
    if (count[c] > 0) stats.mean[c] = sum[c] / static_cast<double>(count[c]);
  }
  // Second pass keeps the variance well conditioned for large offsets.
  for (const PatientSequence& seq : training) {
    for (std::size_t t = 0; t < seq.t_valid; ++t) {
      for (std::size_t c = 0; c < f; ++c) {
        if (!seq.obs_mask(t, c)) continue;
        const double d = seq.values(t, c) - stats.mean[c];
        sum_sq[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < f; ++c) {
    const double var = count[c] > 0 ? sum_sq[c] / static_cast<double>(count[c]) : 0.0;
    if (var > 0.0) {
      stats.stddev[c] = std::sqrt(var);
    } else {
      stats.degenerate[c] = 1;
    }
  }
  return stats;
}

std::vector<PatientSequence> zscore_normalize(std::vector<PatientSequence> cohort,
                                              const NormalizationStats& stats) {
  for (PatientSequence& seq : cohort) {
    if (seq.n_features() != stats.mean.size()) {
      throw std::invalid_argument("zscore_normalize: feature count differs from stats");
    }
    for (std::size_t t = 0; t < seq.t_max(); ++t) {
      for (std::size_t c = 0; c < seq.n_features(); ++c) {
        if (t < seq.t_valid && seq.obs_mask(t, c)) {
          seq.values(t, c) = (seq.values(t, c) - stats.mean[c]) / stats.stddev[c];
        } else {
          seq.values(t, c) = 0.0;
        }
      }
    }
  }
  return cohort;
}

}  // namespace ctformer::data
