#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "ctformer/metrics/metrics.h"

using namespace ctformer::metrics;

namespace {

double brute_auroc(const ScoredSet& s) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (!s.labels[i]) continue;
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (s.labels[j]) continue;
      pairs += 1;
      if (s.scores[i] > s.scores[j]) wins += 1;
      else if (s.scores[i] == s.scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

ScoredSet random_set(std::mt19937_64& rng, std::size_t n, bool coarse) {
  ScoredSet s;
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> level(0, 9);
  for (std::size_t i = 0; i < n; ++i) {
    s.labels.push_back(i < 1 ? 1 : (i < 2 ? 0 : static_cast<int>(rng() % 2)));
    s.scores.push_back(coarse ? level(rng) / 10.0 : u(rng));
  }
  std::shuffle(s.labels.begin(), s.labels.end(), rng);
  return s;
}

}  // namespace

TEST(Auroc, WorkedExample) {
  EXPECT_EQ(auroc({{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}}), 0.75);
}

TEST(Auroc, PerfectAndAllTied) {
  EXPECT_EQ(auroc({{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}}), 1.0);
  EXPECT_EQ(auroc({{0.3, 0.3, 0.3, 0.3, 0.3}, {0, 1, 1, 0, 1}}), 0.5);
}

TEST(Auroc, SingleClassIsAnError) {
  EXPECT_THROW(auroc({{0.1, 0.2}, {1, 1}}), std::invalid_argument);
  EXPECT_THROW(auroc({{0.1, 0.2}, {0, 0}}), std::invalid_argument);
}

TEST(Auroc, EqualsPairwiseCountingExactly) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_set(rng, 2 + rng() % 199, trial % 2 == 0);
    ASSERT_EQ(auroc(s), brute_auroc(s)) << "trial " << trial;
  }
}

TEST(Auroc, MonotoneTransformAndLabelInversion) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    auto s = random_set(rng, 50, trial % 2 == 0);
    ScoredSet t = s, inv = s;
    for (double& x : t.scores) x = std::exp(3 * x) - 7;
    for (int& y : inv.labels) y = 1 - y;
    EXPECT_EQ(auroc(s), auroc(t));
    EXPECT_NEAR(auroc(inv), 1.0 - auroc(s), 1e-15);
  }
}

TEST(Auprc, WorkedExamples) {
  EXPECT_EQ(auprc({{0.9, 0.1}, {1, 0}}), 1.0);
  EXPECT_EQ(auprc({{0.9, 0.8, 0.7}, {1, 0, 1}}), (1.0 + 2.0 / 3.0) / 2.0);
  EXPECT_NEAR(auprc({{0.9, 0.8, 0.7}, {1, 0, 1}}), 0.8333, 5e-5);
}

TEST(Auprc, ConstantScoresGivePrevalence) {
  ScoredSet s{std::vector<double>(20, 0.4), {}};
  for (int i = 0; i < 20; ++i) s.labels.push_back(i % 4 == 0);
  EXPECT_EQ(auprc(s), 5.0 / 20.0);
}

TEST(Auprc, NoPositiveIsAnError) {
  EXPECT_THROW(auprc({{0.1, 0.2}, {0, 0}}), std::invalid_argument);
}

TEST(Auprc, DistinctScoresMatchPrecisionAtRank) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_set(rng, 2 + rng() % 60, false);
    std::vector<std::size_t> order(s.scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });
    double hits = 0, total = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (s.labels[order[r]]) {
        hits += 1;
        total += hits / static_cast<double>(r + 1);
      }
    }
    EXPECT_NEAR(auprc(s), total / hits, 1e-12);
  }
}

TEST(Curves, PerfectRocPassesThroughCorner) {
  const auto pts = curve_points({{0.2, 0.9}, {0, 1}}, CurveKind::kRoc);
  EXPECT_TRUE(std::any_of(pts.begin(), pts.end(), [](const CurvePoint& p) { return p.x == 0.0 && p.y == 1.0; }));
}

TEST(Curves, RocPointsMonotoneAndAreaMatchesAuroc) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const auto s = random_set(rng, 2 + rng() % 150, trial % 2 == 0);
    std::vector<double> distinct = s.scores;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (auto kind : {CurveKind::kRoc, CurveKind::kPr}) {
      const auto pts = curve_points(s, kind);
      EXPECT_LE(pts.size(), distinct.size() + 1);
      if (kind != CurveKind::kRoc) continue;
      for (std::size_t i = 1; i < pts.size(); ++i) {
        EXPECT_GE(pts[i].x, pts[i - 1].x);
        EXPECT_GE(pts[i].y, pts[i - 1].y);
      }
      EXPECT_EQ(pts.front().x, 0.0);
      EXPECT_EQ(pts.back().x, 1.0);
      EXPECT_EQ(pts.back().y, 1.0);
      EXPECT_NEAR(trapezoid_area(pts), auroc(s), 1e-12);
    }
  }
}

TEST(Curves, CsvHasHeader) {
  const auto path = (std::filesystem::temp_directory_path() / "ctformer_curve.csv").string();
  write_curve_csv(path, curve_points({{0.2, 0.9, 0.5}, {0, 1, 1}}, CurveKind::kPr));
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "threshold,x,y");
  std::filesystem::remove(path);
}
