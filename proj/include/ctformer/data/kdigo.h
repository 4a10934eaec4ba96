#ifndef CTFORMER_DATA_KDIGO_H_
#define CTFORMER_DATA_KDIGO_H_

#include <optional>
#include <span>

namespace ctformer::data {

// Labeling thresholds. Comparisons against the creatinine thresholds allow
// kKdigoSlack so that decimal inputs such as 1.3 - 1.0 are not rejected by
// binary rounding.
inline constexpr double kCreatinineRise = 0.3;        // mg/dL
inline constexpr double kCreatinineRiseWindow = 48.0;  // hours
inline constexpr double kCreatinineRatio = 1.5;
inline constexpr double kCreatinineRatioWindow = 168.0;  // hours
inline constexpr double kOliguriaRate = 0.5;             // ml/kg/h
inline constexpr double kOliguriaHours = 6.0;
inline constexpr double kKdigoSlack = 1e-9;

struct TimedSeries {
  std::span<const double> times;
  std::span<const double> values;
};

struct KdigoResult {
  int label = 0;
  std::optional<double> onset_hour;
};

// Earliest time any of the three rules holds:
//   * creatinine at t exceeds some value observed in [t - 48h, t) by >= 0.3;
//   * creatinine at t >= 1.5 x baseline with t - t_baseline <= 7 days, where
//     the baseline is the first creatinine observation;
//   * a run of consecutive urine observations all below 0.5 spans >= 6 h; the
//     rule fires at the observation that completes the span.
// Throws std::invalid_argument for an empty creatinine series or mismatched /
// unsorted inputs. An empty urine series disables the oliguria rule.
KdigoResult kdigo_label(TimedSeries creatinine, TimedSeries urine_rate);

}  // namespace ctformer::data

#endif  // CTFORMER_DATA_KDIGO_H_
