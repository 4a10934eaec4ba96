#ifndef CTFORMER_TESTS_HELPERS_H_
#define CTFORMER_TESTS_HELPERS_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <random>
#include <string>
#include <vector>

#include "ctformer/data/patient_sequence.h"
#include "ctformer/grad/tensor.h"

namespace testing_helpers {

using ctformer::grad::Tensor;

inline Tensor random_tensor(ctformer::grad::Shape shape, std::mt19937_64& rng, double scale = 1.0,
                            bool requires_grad = true) {
  std::normal_distribution<double> n(0.0, scale);
  std::size_t count = 1;
  for (std::size_t s : shape) count *= s;
  std::vector<double> v(count);
  for (double& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Central differences straight from the definition; used as the oracle
// against reverse-mode gradients.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, Tensor& param,
                                            double eps = 1e-6) {
  auto values = param.mutable_values();
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = f();
    values[i] = saved - eps;
    const double down = f();
    values[i] = saved;
    out[i] = (up - down) / (2 * eps);
  }
  return out;
}

inline double max_relative_error(std::span<const double> analytic, const std::vector<double>& numeric,
                                 double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(a - numeric[i]) / denom);
  }
  return worst;
}

// Irregular random sequence with deltas filled in; values are already on a
// z-score scale.
inline ctformer::data::PatientSequence random_sequence(std::size_t n_features, std::size_t t_max,
                                                       std::size_t t_valid, std::mt19937_64& rng,
                                                       const std::string& id = "p") {
  using namespace ctformer::data;
  PatientSequence s;
  s.patient_id = id;
  s.t_valid = t_valid;
  s.values = RealGrid(t_max, n_features, 0.0);
  s.obs_mask = MaskGrid(t_max, n_features, 0);
  std::uniform_real_distribution<double> gap(0.3, 3.0);
  std::normal_distribution<double> val(0.0, 1.0);
  std::bernoulli_distribution seen(0.7);
  double t = 0.0;
  for (std::size_t i = 0; i < t_valid; ++i) {
    if (i > 0) t += gap(rng);
    s.timestamps.push_back(t);
    for (std::size_t f = 0; f < n_features; ++f) {
      if (seen(rng)) {
        s.obs_mask(i, f) = 1;
        s.values(i, f) = val(rng);
      }
    }
  }
  const Deltas d = compute_deltas(s.timestamps, s.obs_mask);
  s.feature_delta = d.feature_delta;
  s.step_delta = d.step_delta;
  return s;
}

// Same sequence stored with a different amount of trailing padding.
inline ctformer::data::PatientSequence repad(const ctformer::data::PatientSequence& s,
                                             std::size_t t_max) {
  using namespace ctformer::data;
  PatientSequence out = s;
  out.values = RealGrid(t_max, s.n_features(), 0.0);
  out.obs_mask = MaskGrid(t_max, s.n_features(), 0);
  out.feature_delta = RealGrid(t_max, s.n_features(), 0.0);
  out.step_delta.assign(t_max, 0.0);
  for (std::size_t t = 0; t < s.t_valid; ++t) {
    out.step_delta[t] = s.step_delta[t];
    for (std::size_t f = 0; f < s.n_features(); ++f) {
      out.values(t, f) = s.values(t, f);
      out.obs_mask(t, f) = s.obs_mask(t, f);
      out.feature_delta(t, f) = s.feature_delta(t, f);
    }
  }
  return out;
}

}  // namespace testing_helpers

#endif  // CTFORMER_TESTS_HELPERS_H_
