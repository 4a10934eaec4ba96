#include "ctformer/metrics/metrics.h"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ctformer/util/format.h"

namespace ctformer::metrics {

namespace {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts check(const ScoredSet& set) {
  if (set.scores.size() != set.labels.size()) {
    throw std::invalid_argument("metrics: scores and labels differ in length");
  }
  ClassCounts counts;
  for (int y : set.labels) {
    if (y == 1) {
      ++counts.positives;
    } else if (y == 0) {
      ++counts.negatives;
    } else {
      throw std::invalid_argument("metrics: labels must be 0 or 1");
    }
  }
  return counts;
}

std::vector<std::size_t> descending_order(const ScoredSet& set) {
  std::vector<std::size_t> order(set.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });
  return order;
}

}  // namespace

double auroc(const ScoredSet& set) {
  const ClassCounts counts = check(set);
  if (counts.positives == 0 || counts.negatives == 0) {
    throw std::invalid_argument("auroc: needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(set.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });
  // Sum of mid-ranks (1-based) of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t tied_pos = 0;
    while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) {
      tied_pos += set.labels[order[j]];
      ++j;
    }
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += mid_rank * static_cast<double>(tied_pos);
    i = j;
  }
  const double p = static_cast<double>(counts.positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(counts.negatives));
}

double auprc(const ScoredSet& set) {
  const ClassCounts counts = check(set);
  if (counts.positives == 0) throw std::invalid_argument("auprc: needs at least one positive");
  const std::vector<std::size_t> order = descending_order(set);
  double tp = 0.0, fp = 0.0, credit = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double block_tp = 0.0;
    while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) {
      (set.labels[order[j]] ? block_tp : fp) += 1.0;
      ++j;
    }
    tp += block_tp;
    if (block_tp > 0.0) credit += block_tp * (tp / (tp + fp));
    i = j;
  }
  return credit / static_cast<double>(counts.positives);
}

std::vector<CurvePoint> curve_points(const ScoredSet& set, CurveKind kind) {
  const ClassCounts counts = check(set);
  if (counts.positives == 0 || (kind == CurveKind::kRoc && counts.negatives == 0)) {
    throw std::invalid_argument("curve_points: missing class");
  }
  const double p = static_cast<double>(counts.positives);
  const double n = static_cast<double>(counts.negatives);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<CurvePoint> points;
  points.push_back(kind == CurveKind::kRoc ? CurvePoint{inf, 0.0, 0.0} : CurvePoint{inf, 0.0, 1.0});
  const std::vector<std::size_t> order = descending_order(set);
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = set.scores[order[i]];
    std::size_t j = i;
    while (j < order.size() && set.scores[order[j]] == threshold) {
      (set.labels[order[j]] ? tp : fp) += 1.0;
      ++j;
    }
    if (kind == CurveKind::kRoc) {
      points.push_back({threshold, fp / n, tp / p});
    } else {
      points.push_back({threshold, tp / p, tp / (tp + fp)});
    }
    i = j;
  }
  return points;
}

double trapezoid_area(const std::vector<CurvePoint>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].x - points[i - 1].x) * 0.5 * (points[i].y + points[i - 1].y);
  }
  return area;
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& points) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_curve_csv: cannot open " + path);
  out << "threshold,x,y\n";
  for (const CurvePoint& pt : points) {
    out << util::format_double(pt.threshold) << ',' << util::format_double(pt.x) << ','
        << util::format_double(pt.y) << '\n';
  }
}

}  // namespace ctformer::metrics
