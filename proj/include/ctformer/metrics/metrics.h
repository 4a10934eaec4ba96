#ifndef CTFORMER_METRICS_METRICS_H_
#define CTFORMER_METRICS_METRICS_H_

#include <string>
#include <vector>

namespace ctformer::metrics {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 or 1
};

// Probability that a random positive outranks a random negative, ties counted
// one half, computed from mid-ranks. Throws std::invalid_argument unless both
// classes are present.
double auroc(const ScoredSet& set);

// Average precision without interpolation. Scores are visited in descending
// order (stable by index); a block of tied scores is one threshold, so each
// positive in the block is credited the precision at the end of the block.
// With distinct scores this is the mean of precision@rank over positives.
// Throws std::invalid_argument when there is no positive.
double auprc(const ScoredSet& set);

enum class CurveKind { kRoc, kPr };

struct CurvePoint {
  double threshold;  // predict positive when score >= threshold
  double x;          // FPR (roc) or recall (pr)
  double y;          // TPR (roc) or precision (pr)
};

// One point per distinct score plus the +inf starting point: (0, 0) for ROC
// and (0, 1) for PR. ROC points are monotone in FPR and end at (1, 1).
std::vector<CurvePoint> curve_points(const ScoredSet& set, CurveKind kind);

// Trapezoidal area under a point list, in emission order.
double trapezoid_area(const std::vector<CurvePoint>& points);

// CSV with header threshold,x,y.
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& points);

}  // namespace ctformer::metrics

#endif  // CTFORMER_METRICS_METRICS_H_
