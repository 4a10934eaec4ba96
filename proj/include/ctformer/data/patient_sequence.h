#ifndef CTFORMER_DATA_PATIENT_SEQUENCE_H_
#define CTFORMER_DATA_PATIENT_SEQUENCE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ctformer::data {

// Row-major dense matrix used for per-patient step x feature data.
template <typename T>
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Grid&) const = default;
};

using RealGrid = Grid<double>;
using MaskGrid = Grid<std::uint8_t>;

// Pinned channel semantics. Remaining channels are generic vitals/labs.
enum Channel : std::size_t {
  kCreatinine = 0,
  kUrineRate = 1,
  kRespiratoryRate = 2,
  kFirstGenericChannel = 3,
};

std::string channel_name(std::size_t feature);

// Untruncated ground-truth physiology used for labeling. Every channel is
// sampled at every timestamp.
struct RawSeries {
  std::vector<double> timestamps;
  std::vector<double> creatinine;   // mg/dL
  std::vector<double> urine_rate;   // ml/kg/h

  bool operator==(const RawSeries&) const = default;
};

// One irregularly sampled multivariate record, right-padded to t_max rows.
struct PatientSequence {
  std::string patient_id;
  std::vector<double> timestamps;  // hours, length t_valid
  RealGrid values;                 // [t_max x F]
  MaskGrid obs_mask;               // [t_max x F]
  RealGrid feature_delta;          // [t_max x F]
  std::vector<double> step_delta;  // [t_max]
  std::size_t t_valid = 0;
  int label = 0;
  std::optional<std::size_t> onset_index;
  std::optional<double> onset_hour;
  std::optional<RawSeries> raw_series;

  std::size_t t_max() const { return values.rows; }
  std::size_t n_features() const { return values.cols; }

  bool operator==(const PatientSequence&) const = default;
};

struct Deltas {
  RealGrid feature_delta;
  std::vector<double> step_delta;
};

// feature_delta[0][f] = 0; for t >= 1 the gap ts[t] - ts[t-1] is added to the
// previous delta unless feature f was observed at t-1, in which case it
// restarts from the gap. Rows at or beyond timestamps.size() are zero. Throws
// std::invalid_argument on non-increasing timestamps.
Deltas compute_deltas(std::span<const double> timestamps, const MaskGrid& obs_mask);

// Throws std::invalid_argument describing the first violated invariant.
void validate(const PatientSequence& seq);

}  // namespace ctformer::data

#endif  // CTFORMER_DATA_PATIENT_SEQUENCE_H_
