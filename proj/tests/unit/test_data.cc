#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "ctformer/data/cohort_io.h"
#include "ctformer/data/kdigo.h"
#include "ctformer/data/normalization.h"
#include "ctformer/data/synthetic.h"

using namespace ctformer::data;

namespace {

MaskGrid mask_column(std::vector<std::uint8_t> col) {
  MaskGrid m(col.size(), 1, 0);
  for (std::size_t i = 0; i < col.size(); ++i) m(i, 0) = col[i];
  return m;
}

// Enumerates every observation pair and every urine window directly.
KdigoResult brute_force_kdigo(const std::vector<double>& t, const std::vector<double>& cr,
                              const std::vector<double>& ut, const std::vector<double>& ur) {
  std::optional<double> onset;
  auto take = [&](double v) {
    if (!onset || v < *onset) onset = v;
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (t[i] - t[j] <= 48.0 && cr[i] - cr[j] >= 0.3 - 1e-9) take(t[i]);
    }
    if (i > 0 && t[i] - t[0] <= 168.0 && cr[i] >= 1.5 * cr[0] - 1e-9) take(t[i]);
  }
  for (std::size_t i = 0; i < ut.size(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      bool all_low = true;
      for (std::size_t k = j; k <= i; ++k) all_low = all_low && ur[k] < 0.5;
      if (all_low && ut[i] - ut[j] >= 6.0) take(ut[i]);
    }
  }
  KdigoResult r;
  if (onset) {
    r.label = 1;
    r.onset_hour = onset;
  }
  return r;
}

SyntheticConfig small_config(std::uint64_t seed = 7) {
  SyntheticConfig c;
  c.n_patients = 60;
  c.n_features = 5;
  c.t_max = 16;
  c.rng_seed = seed;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ctformer_test_" + name)).string();
}

}  // namespace

TEST(ComputeDeltas, WorkedRecurrence) {
  const std::vector<double> ts{0, 2, 5};
  const Deltas d = compute_deltas(ts, mask_column({1, 0, 1}));
  EXPECT_EQ(d.feature_delta(0, 0), 0.0);
  EXPECT_EQ(d.feature_delta(1, 0), 2.0);
  EXPECT_EQ(d.feature_delta(2, 0), 5.0);
}

TEST(ComputeDeltas, FullyObservedColumnsAreGaps) {
  const std::vector<double> ts{0, 1, 2};
  MaskGrid m(3, 2, 1);
  const Deltas d = compute_deltas(ts, m);
  for (std::size_t f = 0; f < 2; ++f) {
    EXPECT_EQ(d.feature_delta(0, f), 0.0);
    EXPECT_EQ(d.feature_delta(1, f), 1.0);
    EXPECT_EQ(d.feature_delta(2, f), 1.0);
  }
}

TEST(ComputeDeltas, StepDelta) {
  const std::vector<double> ts{0, 3};
  const Deltas d = compute_deltas(ts, mask_column({1, 1}));
  EXPECT_EQ(d.step_delta, (std::vector<double>{0, 3}));
}

TEST(ComputeDeltas, RejectsNonIncreasingTimestamps) {
  const std::vector<double> ts{0, 2, 2};
  EXPECT_THROW(compute_deltas(ts, mask_column({1, 1, 1})), std::invalid_argument);
}

TEST(ComputeDeltas, InvariantToMaskedTrailingPadding) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> bit(0, 1);
  const std::vector<double> ts{0.0, 1.5, 2.0, 4.5, 5.0};
  MaskGrid short_mask(5, 3, 0), long_mask(9, 3, 0);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t f = 0; f < 3; ++f) short_mask(t, f) = long_mask(t, f) = static_cast<std::uint8_t>(bit(rng));
  }
  const Deltas a = compute_deltas(ts, short_mask), b = compute_deltas(ts, long_mask);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(a.step_delta[t], b.step_delta[t]);
    for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(a.feature_delta(t, f), b.feature_delta(t, f));
  }
  for (std::size_t t = 5; t < 9; ++t) {
    EXPECT_EQ(b.step_delta[t], 0.0);
    for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(b.feature_delta(t, f), 0.0);
  }
}

TEST(Kdigo, AbsoluteRise) {
  const std::vector<double> t{0, 10}, cr{1.0, 1.35};
  const KdigoResult r = kdigo_label({t, cr}, {});
  EXPECT_EQ(r.label, 1);
  EXPECT_EQ(*r.onset_hour, 10.0);
}

TEST(Kdigo, NoCriterionMet) {
  const std::vector<double> t{0, 10, 20, 30}, cr{1.0, 1.1, 1.25, 1.2}, ur{0.9, 0.8, 0.7, 0.6};
  const KdigoResult r = kdigo_label({t, cr}, {t, ur});
  EXPECT_EQ(r.label, 0);
  EXPECT_FALSE(r.onset_hour);
}

TEST(Kdigo, SustainedOliguria) {
  std::vector<double> t, ur;
  for (int h = 0; h <= 24; ++h) {
    t.push_back(h);
    ur.push_back(h >= 12 && h <= 18 ? 0.4 : 1.0);
  }
  const std::vector<double> cr(t.size(), 1.0);
  const KdigoResult r = kdigo_label({t, cr}, {t, ur});
  EXPECT_EQ(r.label, 1);
  EXPECT_EQ(*r.onset_hour, 18.0);
}

TEST(Kdigo, RatioAgainstFirstValue) {
  const std::vector<double> t{0, 60, 120}, cr{1.0, 1.2, 1.5};
  const KdigoResult r = kdigo_label({t, cr}, {});
  EXPECT_EQ(r.label, 1);
  EXPECT_EQ(*r.onset_hour, 120.0);
}

TEST(Kdigo, EmptyCreatinineIsAnError) {
  EXPECT_THROW(kdigo_label({}, {}), std::invalid_argument);
}

TEST(Kdigo, AgreesWithBruteForceScanner) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> gap(0.5, 12.0), step(-0.15, 0.2), urine(0.3, 0.9);
  std::uniform_int_distribution<int> len(1, 20);
  int positives = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = len(rng);
    std::vector<double> t{0.0}, cr{1.0}, ur{urine(rng)};
    for (int i = 1; i < n; ++i) {
      t.push_back(t.back() + gap(rng));
      cr.push_back(std::max(0.3, cr.back() + step(rng)));
      ur.push_back(urine(rng));
    }
    const KdigoResult fast = kdigo_label({t, cr}, {t, ur});
    const KdigoResult slow = brute_force_kdigo(t, cr, t, ur);
    ASSERT_EQ(fast.label, slow.label) << "trial " << trial;
    if (fast.label) {
      ASSERT_EQ(*fast.onset_hour, *slow.onset_hour) << "trial " << trial;
      ++positives;
    }
  }
  EXPECT_GT(positives, 200);
  EXPECT_LT(positives, 1800);
}

TEST(Normalization, ZscoreExamples) {
  NormalizationStats stats{{2.0}, {2.0}, {0}};
  PatientSequence seq;
  seq.patient_id = "x";
  seq.t_valid = 2;
  seq.timestamps = {0, 1};
  seq.values = RealGrid(3, 1, 0.0);
  seq.obs_mask = MaskGrid(3, 1, 0);
  seq.values(0, 0) = 4.0;
  seq.obs_mask(0, 0) = 1;
  seq.values(1, 0) = 0.0;  // unobserved
  const Deltas d = compute_deltas(seq.timestamps, seq.obs_mask);
  seq.feature_delta = d.feature_delta;
  seq.step_delta = d.step_delta;
  auto out = zscore_normalize({seq}, stats);
  EXPECT_EQ(out[0].values(0, 0), 1.0);
  EXPECT_EQ(out[0].values(1, 0), 0.0);
  stats.mean[0] = 4.0;
  out = zscore_normalize({seq}, stats);
  EXPECT_EQ(out[0].values(0, 0), 0.0);
}

TEST(Normalization, ZeroVarianceFeatureIsFlagged) {
  auto cohort = generate_synthetic_cohort(small_config());
  for (auto& p : cohort) {
    for (std::size_t t = 0; t < p.t_valid; ++t) {
      if (p.obs_mask(t, 4)) p.values(t, 4) = 3.0;
    }
  }
  const NormalizationStats stats = fit_normalization(cohort);
  EXPECT_EQ(stats.degenerate[4], 1);
  EXPECT_EQ(stats.stddev[4], 1.0);
  EXPECT_EQ(stats.mean[4], 3.0);
  EXPECT_EQ(stats.degenerate[0], 0);
  EXPECT_GT(stats.stddev[0], 0.0);
}

TEST(Synthetic, DeterministicBySeed) {
  EXPECT_EQ(generate_synthetic_cohort(small_config()), generate_synthetic_cohort(small_config()));
  EXPECT_NE(generate_synthetic_cohort(small_config(7)), generate_synthetic_cohort(small_config(8)));
}

TEST(Synthetic, PrevalenceNearTarget) {
  SyntheticConfig c;
  c.n_patients = 2000;
  const auto cohort = generate_synthetic_cohort(c);
  double positives = 0;
  for (const auto& p : cohort) positives += p.label;
  const double prevalence = positives / static_cast<double>(cohort.size());
  EXPECT_GE(prevalence, 0.30);
  EXPECT_LE(prevalence, 0.40);
}

TEST(Synthetic, InvariantsAndLeakageGuardAcrossConfigs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 12; ++trial) {
    SyntheticConfig c;
    c.n_patients = 40;
    c.n_features = 3 + rng() % 6;
    c.t_max = 8 + rng() % 40;
    c.missing_rate = 0.1 * static_cast<double>(rng() % 8);
    c.lead_time_hours = kLeadTimes[rng() % 5];
    c.rng_seed = rng();
    for (const PatientSequence& p : generate_synthetic_cohort(c)) {
      ASSERT_NO_THROW(validate(p));
      ASSERT_GE(p.t_valid, 4u);
      ASSERT_TRUE(p.raw_series);
      if (p.label) {
        ASSERT_TRUE(p.onset_hour);
        ASSERT_LT(p.timestamps.back(), *p.onset_hour - c.lead_time_hours);
      }
      if (p.onset_index) {
        ASSERT_EQ(p.label, 1);
        ASSERT_LT(*p.onset_index, p.t_valid);
      }
    }
  }
}

TEST(Synthetic, W24PositivesEndBeforeOnsetMinusLead) {
  SyntheticConfig c = small_config();
  c.n_patients = 200;
  c.t_max = 48;
  c.lead_time_hours = 24;
  int positives = 0;
  for (const auto& p : generate_synthetic_cohort(c)) {
    if (!p.label) continue;
    ++positives;
    EXPECT_LE(p.timestamps.back(), *p.onset_hour - 24.0);
  }
  EXPECT_GT(positives, 0);
}

TEST(Synthetic, LabelsComeFromRawSeries) {
  for (const auto& p : generate_synthetic_cohort(small_config())) {
    const auto& raw = *p.raw_series;
    const KdigoResult r = kdigo_label({raw.timestamps, raw.creatinine}, {raw.timestamps, raw.urine_rate});
    EXPECT_EQ(r.label, p.label);
    EXPECT_EQ(r.onset_hour, p.onset_hour);
  }
}

TEST(Synthetic, RejectsInvalidConfig) {
  SyntheticConfig c = small_config();
  c.lead_time_hours = 5;
  EXPECT_THROW(generate_synthetic_cohort(c), std::invalid_argument);
  c = small_config();
  c.target_prevalence = 1.0;
  EXPECT_THROW(generate_synthetic_cohort(c), std::invalid_argument);
  c = small_config();
  c.t_max = 7;
  EXPECT_THROW(generate_synthetic_cohort(c), std::invalid_argument);
}

TEST(CohortIo, RoundTripIsExact) {
  const auto path = temp_path("roundtrip.ndjson");
  const Cohort cohort{small_config(), generate_synthetic_cohort(small_config())};
  save_cohort(path, cohort);
  const Cohort loaded = load_cohort(path);
  EXPECT_EQ(loaded.config, cohort.config);
  EXPECT_EQ(loaded.patients, cohort.patients);
  std::filesystem::remove(path);
}

TEST(CohortIo, EmptyFileIsEmptyCohort) {
  const auto path = temp_path("empty.ndjson");
  { std::ofstream out(path); }
  EXPECT_TRUE(load_cohort(path).patients.empty());
  std::filesystem::remove(path);
}

TEST(CohortIo, InvariantViolationBeyondTValidIsRejected) {
  auto patients = generate_synthetic_cohort(small_config());
  PatientSequence p;
  p.patient_id = "padded";
  p.t_valid = 2;
  p.timestamps = {0.0, 1.0};
  p.values = RealGrid(3, patients[0].n_features(), 0.0);
  p.obs_mask = MaskGrid(3, patients[0].n_features(), 0);
  p.obs_mask(0, 0) = 1;
  const Deltas d = compute_deltas(p.timestamps, p.obs_mask);
  p.feature_delta = d.feature_delta;
  p.step_delta = d.step_delta;
  ASSERT_NO_THROW(validate(p));
  p.obs_mask(2, 0) = 1;
  const auto path = temp_path("bad_mask.ndjson");
  {
    std::ofstream out(path);
    out << "{\"schema_version\":1,\"config\":null}\n"
        << to_json(patients[0]).dump() << '\n' << to_json(p).dump() << '\n';
  }
  try {
    load_cohort(path);
    FAIL() << "expected a load error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(CohortIo, MalformedLineNamesLineNumber) {
  const auto path = temp_path("malformed.ndjson");
  {
    std::ofstream out(path);
    out << "{\"schema_version\":1,\"config\":null}\n{not json\n";
  }
  try {
    load_cohort(path);
    FAIL() << "expected a load error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}
