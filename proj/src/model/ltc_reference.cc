#include "ctformer/model/ltc_reference.h"

#include <cmath>
#include <stdexcept>

#include "ctformer/grad/ops.h"

namespace ctformer::model {

namespace {

std::vector<double> derivative(const Tensor& input, const std::vector<double>& h,
                               const CfcParams& params, std::span<const double> w) {
  const CfcHeads heads = cfc_heads(input, Tensor::vector(h), params);
  const Tensor f = grad::sigmoid(heads.f);
  std::vector<double> dh(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) dh[i] = -(w[i] + f[i]) * h[i] + w[i] * f[i];
  return dh;
}

std::vector<double> axpy(const std::vector<double>& y, double a, const std::vector<double>& x) {
  std::vector<double> out(y);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * x[i];
  return out;
}

}  // namespace

std::vector<double> ltc_reference_cell(std::span<const double> input, std::span<const double> h_prev,
                                       double dt, int solver_steps, const CfcParams& params,
                                       std::span<const double> w) {
  if (solver_steps < 1) throw std::invalid_argument("ltc_reference_cell: solver_steps must be >= 1");
  if (!(dt >= 0.0)) throw std::invalid_argument("ltc_reference_cell: negative elapsed time");
  if (w.size() != params.hidden_dim || h_prev.size() != params.hidden_dim) {
    throw std::invalid_argument("ltc_reference_cell: state / time-constant width mismatch");
  }
  for (double wi : w) {
    if (!(wi > 0.0)) throw std::invalid_argument("ltc_reference_cell: w must be positive");
  }
  grad::NoGradGuard no_grad;
  const Tensor u = Tensor::vector(std::vector<double>(input.begin(), input.end()));
  std::vector<double> h(h_prev.begin(), h_prev.end());
  const double step = dt / solver_steps;
  for (int s = 0; s < solver_steps && dt > 0.0; ++s) {
    const auto k1 = derivative(u, h, params, w);
    const auto k2 = derivative(u, axpy(h, 0.5 * step, k1), params, w);
    const auto k3 = derivative(u, axpy(h, 0.5 * step, k2), params, w);
    const auto k4 = derivative(u, axpy(h, step, k3), params, w);
    for (std::size_t i = 0; i < h.size(); ++i) {
      h[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  for (double v : h) {
    if (!std::isfinite(v)) throw std::runtime_error("ltc_reference_cell: state became non-finite");
  }
  return h;
}

}  // namespace ctformer::model
