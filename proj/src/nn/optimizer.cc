#include "ctformer/nn/optimizer.h"

#include <cmath>

namespace ctformer::nn {

Adam::Adam(std::vector<grad::NamedTensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::scale_grad(double s) {
  for (auto& p : params_) {
    for (double& g : p.tensor.mutable_grad()) g *= s;
  }
}

double Adam::grad_norm() const {
  double total = 0.0;
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) total += g * g;
  }
  return std::sqrt(total);
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    grad::Tensor& tensor = params_[k].tensor;
    auto values = tensor.mutable_values();
    auto g = tensor.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m_[k][i] = options_.beta1 * m_[k][i] + (1.0 - options_.beta1) * gi;
      v_[k][i] = options_.beta2 * v_[k][i] + (1.0 - options_.beta2) * gi * gi;
      values[i] -= options_.learning_rate * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + options_.epsilon);
    }
  }
}

}  // namespace ctformer::nn
