#include "ctformer/data/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "ctformer/data/kdigo.h"

namespace ctformer::data {

namespace {

constexpr int kMaxAttempts = 20;
constexpr double kShockStartMin = 8.0;
// Creatinine rise reached at the end of the ramp; above the 0.3 rule so the
// label fires near shock_start + ramp despite measurement noise.
constexpr double kShockCreatinineRise = 0.36;
constexpr double kShockCreatinineJump = 0.04;
constexpr double kAcuteDecayHours = 4.0;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Intercept b such that E[logistic(b + k r)] = prevalence for r ~ N(0, 1).
double prevalence_intercept(double prevalence, double coupling) {
  auto expected = [&](double b) {
    double total = 0.0, weight = 0.0;
    for (double r = -8.0; r <= 8.0; r += 0.01) {
      const double w = std::exp(-0.5 * r * r);
      total += w * logistic(b + coupling * r);
      weight += w;
    }
    return total / weight;
  };
  double lo = -30.0, hi = 30.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < prevalence ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct Episode {
  double start = 0.0;
  double magnitude = 0.0;
};

struct Physiology {
  double risk = 0.0;
  double creatinine_base = 0.0, creatinine_slope = 0.0;
  double urine_base = 0.0, resp_base = 0.0;
  std::vector<double> generic_base, generic_slope, generic_phase;
  std::optional<Episode> shock;
  std::optional<Episode> decoy;
};

class PatientGenerator {
 public:
  PatientGenerator(const SyntheticConfig& config, double intercept)
      : config_(config), intercept_(intercept) {
    for (std::size_t f = kFirstGenericChannel; f < config.n_features; ++f) {
      const std::size_t n_generic = config.n_features - kFirstGenericChannel;
      coupling_.push_back(f - kFirstGenericChannel < (n_generic + 1) / 2 ? 0.6 : 0.0);
    }
  }

  std::optional<PatientSequence> generate(std::size_t index, int attempt) const {
    std::seed_seq seq{config_.rng_seed, static_cast<std::uint64_t>(index),
                      static_cast<std::uint64_t>(attempt)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double span = 1.2 * static_cast<double>(config_.t_max);
    const double ramp = config_.shock_ramp_hours;
    const double lead = config_.lead_time_hours;

    Physiology p;
    p.risk = normal(rng);
    const bool planned = unif(rng) < logistic(intercept_ + config_.chronic_risk_coupling * p.risk);
    // Reference shock start; negatives use it only to place their window.
    const double anchor = kShockStartMin + span * unif(rng);
    if (planned) {
      p.shock = Episode{anchor, config_.shock_magnitude * (0.5 + unif(rng))};
    }
    if (unif(rng) < config_.decoy_rate) {
      p.decoy = Episode{kShockStartMin + (span + ramp) * unif(rng),
                        config_.shock_magnitude * (0.5 + unif(rng))};
    }
    p.creatinine_base = std::max(0.5, 0.6 + 0.7 * unif(rng) + 0.1 * p.risk);
    p.creatinine_slope = 0.0008 * std::clamp(p.risk, -2.5, 2.5);
    p.urine_base = std::max(0.75, 0.8 + 0.6 * unif(rng) - 0.08 * p.risk);
    p.resp_base = 14.0 + 6.0 * unif(rng) + 1.0 * p.risk;
    for (std::size_t g = 0; g < coupling_.size(); ++g) {
      p.generic_base.push_back(normal(rng) + coupling_[g] * p.risk);
      p.generic_slope.push_back(0.01 * normal(rng) + 0.02 * coupling_[g] * p.risk);
      p.generic_phase.push_back(2.0 * std::numbers::pi * unif(rng));
    }

    // Irregular timeline: mostly hourly, occasionally skipping.
    const double horizon = anchor + ramp + 12.0;
    std::vector<double> times;
    double t = 0.25 * unif(rng);
    while (t <= horizon) {
      times.push_back(t);
      const double u = unif(rng);
      const double base_gap = u < 0.75 ? 1.0 : (u < 0.95 ? 2.0 : 3.0);
      t += base_gap * (0.75 + 0.5 * unif(rng));
    }

    const std::size_t n_raw = times.size();
    RealGrid raw(n_raw, config_.n_features, 0.0);
    for (std::size_t k = 0; k < n_raw; ++k) {
      for (std::size_t f = 0; f < config_.n_features; ++f) {
        raw(k, f) = channel_value(p, f, times[k], ramp) + noise(f) * normal(rng);
      }
    }

    RawSeries series;
    series.timestamps = times;
    for (std::size_t k = 0; k < n_raw; ++k) {
      series.creatinine.push_back(raw(k, kCreatinine));
      series.urine_rate.push_back(raw(k, kUrineRate));
    }
    const KdigoResult kdigo = kdigo_label({series.timestamps, series.creatinine},
                                          {series.timestamps, series.urine_rate});
    const double cut = kdigo.label ? *kdigo.onset_hour - lead : anchor + ramp - lead;

    std::size_t end = 0;
    while (end < n_raw && times[end] < cut) ++end;
    const std::size_t t_valid = std::min(end, config_.t_max);
    if (t_valid < 4) return std::nullopt;
    const std::size_t begin = end - t_valid;

    PatientSequence out;
    char id[32];
    std::snprintf(id, sizeof(id), "p%06zu", index);
    out.patient_id = id;
    out.t_valid = t_valid;
    out.label = kdigo.label;
    out.onset_hour = kdigo.onset_hour;
    out.values = RealGrid(config_.t_max, config_.n_features, 0.0);
    out.obs_mask = MaskGrid(config_.t_max, config_.n_features, 0);
    for (std::size_t i = 0; i < t_valid; ++i) {
      const std::size_t k = begin + i;
      out.timestamps.push_back(times[k]);
      bool any = false;
      for (std::size_t f = 0; f < config_.n_features; ++f) {
        if (unif(rng) >= config_.missing_rate) {
          out.obs_mask(i, f) = 1;
          any = true;
        }
      }
      if (!any) {
        std::uniform_int_distribution<std::size_t> pick(0, config_.n_features - 1);
        out.obs_mask(i, pick(rng)) = 1;
      }
      for (std::size_t f = 0; f < config_.n_features; ++f) {
        if (out.obs_mask(i, f)) out.values(i, f) = raw(k, f);
      }
    }
    Deltas deltas = compute_deltas(out.timestamps, out.obs_mask);
    out.feature_delta = std::move(deltas.feature_delta);
    out.step_delta = std::move(deltas.step_delta);
    if (kdigo.label && p.shock && p.shock->start < cut && p.shock->start >= out.timestamps.front()) {
      for (std::size_t i = 0; i < t_valid; ++i) {
        if (out.timestamps[i] >= p.shock->start) {
          out.onset_index = i;
          break;
        }
      }
    }
    out.raw_series = std::move(series);
    return out;
  }

 private:
  double noise(std::size_t f) const {
    switch (f) {
      case kCreatinine:
        return 0.05;
      case kUrineRate:
        return 0.08;
      case kRespiratoryRate:
        return 1.0;
      default:
        return 0.25;
    }
  }

  double channel_value(const Physiology& p, std::size_t f, double t, double ramp) const {
    double since = -1.0, mag = 0.0;
    if (p.shock && t >= p.shock->start) {
      since = t - p.shock->start;
      mag = p.shock->magnitude;
    }
    const double progress = since >= 0.0 ? std::min(since / ramp, 1.0) : 0.0;
    // Acute response at shock start, fading over a few hours.
    const double acute = since >= 0.0 ? mag * std::exp(-since / kAcuteDecayHours) : 0.0;
    double decoy = 0.0;
    if (p.decoy && t >= p.decoy->start) {
      decoy = p.decoy->magnitude * std::exp(-(t - p.decoy->start) / kAcuteDecayHours);
    }
    const double circadian = std::sin(t * 2.0 * std::numbers::pi / 24.0);
    switch (f) {
      case kCreatinine: {
        double v = p.creatinine_base + p.creatinine_slope * t;
        if (since >= 0.0) {
          // Small step, then an accelerating climb that crosses the rise
          // rule only near the end of the ramp.
          const double jump = std::min(kShockCreatinineJump * mag, 2.0 * kShockCreatinineJump);
          v += jump + (kShockCreatinineRise - jump) * progress * progress * progress;
        }
        return v;
      }
      case kUrineRate: {
        double v = p.urine_base + 0.05 * circadian;
        if (since >= 0.0) {
          v -= 0.3 * acute + 0.1 * mag * progress;
          if (progress < 1.0) v = std::max(v, 0.6);
        }
        return v;
      }
      case kRespiratoryRate:
        return p.resp_base + 5.0 * acute + 1.0 * mag * progress + 5.0 * decoy;
      default: {
        const std::size_t g = f - kFirstGenericChannel;
        double v = p.generic_base[g] + p.generic_slope[g] * t + 0.3 * std::sin(t * 2.0 * std::numbers::pi / 24.0 + p.generic_phase[g]);
        if (g == 0) v += 1.5 * acute + 1.5 * decoy;
        if (g == 1) v += 1.5 * acute;
        return v;
      }
    }
  }

  const SyntheticConfig& config_;
  double intercept_;
  std::vector<double> coupling_;
};

}  // namespace

void validate(const SyntheticConfig& config) {
  if (config.n_patients == 0) throw std::invalid_argument("SyntheticConfig: n_patients must be > 0");
  if (config.n_features < kFirstGenericChannel) {
    throw std::invalid_argument("SyntheticConfig: n_features must be >= 3 (pinned channels)");
  }
  if (config.t_max < 8) throw std::invalid_argument("SyntheticConfig: t_max must be >= 8");
  if (!(config.target_prevalence > 0.0 && config.target_prevalence < 1.0)) {
    throw std::invalid_argument("SyntheticConfig: target_prevalence must lie in (0, 1)");
  }
  if (!(config.missing_rate >= 0.0 && config.missing_rate < 1.0)) {
    throw std::invalid_argument("SyntheticConfig: missing_rate must lie in [0, 1)");
  }
  if (std::find(std::begin(kLeadTimes), std::end(kLeadTimes), config.lead_time_hours) ==
      std::end(kLeadTimes)) {
    throw std::invalid_argument("SyntheticConfig: lead_time_hours must be one of 0,6,12,18,24");
  }
  if (!(config.shock_magnitude > 0.0)) {
    throw std::invalid_argument("SyntheticConfig: shock_magnitude must be > 0");
  }
  if (!(config.shock_ramp_hours > static_cast<double>(config.lead_time_hours))) {
    throw std::invalid_argument("SyntheticConfig: shock_ramp_hours must exceed lead_time_hours");
  }
  if (!(config.decoy_rate >= 0.0 && config.decoy_rate <= 1.0)) {
    throw std::invalid_argument("SyntheticConfig: decoy_rate must lie in [0, 1]");
  }
}

std::vector<PatientSequence> generate_synthetic_cohort(const SyntheticConfig& config) {
  validate(config);
  const double intercept =
      prevalence_intercept(config.target_prevalence, config.chronic_risk_coupling);
  PatientGenerator generator(config, intercept);
  std::vector<PatientSequence> cohort;
  cohort.reserve(config.n_patients);
  for (std::size_t i = 0; i < config.n_patients; ++i) {
    std::optional<PatientSequence> seq;
    for (int attempt = 0; attempt < kMaxAttempts && !seq; ++attempt) {
      seq = generator.generate(i, attempt);
    }
    if (!seq) {
      throw std::runtime_error("generate_synthetic_cohort: patient " + std::to_string(i) +
                               " kept fewer than 4 valid steps after " +
                               std::to_string(kMaxAttempts) + " attempts");
    }
    cohort.push_back(std::move(*seq));
  }
  return cohort;
}

}  // namespace ctformer::data
