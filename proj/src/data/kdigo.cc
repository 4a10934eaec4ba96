#include "ctformer/data/kdigo.h"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace ctformer::data {

namespace {

void check_series(const TimedSeries& s, const char* name) {
  if (s.times.size() != s.values.size()) {
    throw std::invalid_argument(std::string("kdigo_label: ") + name +
                                " times/values length mismatch");
  }
  for (std::size_t i = 1; i < s.times.size(); ++i) {
    if (!(s.times[i] > s.times[i - 1])) {
      throw std::invalid_argument(std::string("kdigo_label: ") + name +
                                  " times not strictly increasing");
    }
  }
}

std::optional<double> earliest(std::optional<double> a, std::optional<double> b) {
  if (!a) return b;
  if (!b) return a;
  return std::min(*a, *b);
}

// Sliding-window minimum over the trailing 48 hours.
std::optional<double> first_rise(const TimedSeries& cr) {
  std::deque<std::size_t> window;  // indices with increasing values
  for (std::size_t j = 0; j < cr.times.size(); ++j) {
    while (!window.empty() && cr.times[j] - cr.times[window.front()] > kCreatinineRiseWindow) {
      window.pop_front();
    }
    if (!window.empty() && cr.values[j] - cr.values[window.front()] >= kCreatinineRise - kKdigoSlack) {
      return cr.times[j];
    }
    while (!window.empty() && cr.values[window.back()] >= cr.values[j]) window.pop_back();
    window.push_back(j);
  }
  return std::nullopt;
}

std::optional<double> first_ratio(const TimedSeries& cr) {
  const double baseline = cr.values[0];
  for (std::size_t j = 1; j < cr.times.size(); ++j) {
    if (cr.times[j] - cr.times[0] > kCreatinineRatioWindow) break;
    if (cr.values[j] >= kCreatinineRatio * baseline - kKdigoSlack) return cr.times[j];
  }
  return std::nullopt;
}

std::optional<double> first_oliguria(const TimedSeries& urine) {
  std::optional<double> run_start;
  for (std::size_t j = 0; j < urine.times.size(); ++j) {
    if (urine.values[j] < kOliguriaRate) {
      if (!run_start) run_start = urine.times[j];
      if (urine.times[j] - *run_start >= kOliguriaHours) return urine.times[j];
    } else {
      run_start.reset();
    }
  }
  return std::nullopt;
}

}  // namespace

KdigoResult kdigo_label(TimedSeries creatinine, TimedSeries urine_rate) {
  if (creatinine.times.empty()) {
    throw std::invalid_argument("kdigo_label: empty creatinine series has no baseline");
  }
  check_series(creatinine, "creatinine");
  check_series(urine_rate, "urine_rate");
  std::optional<double> onset = earliest(first_rise(creatinine), first_ratio(creatinine));
  onset = earliest(onset, first_oliguria(urine_rate));
  KdigoResult result;
  if (onset) {
    result.label = 1;
    result.onset_hour = onset;
  }
  return result;
}

}  // namespace ctformer::data
