#include "ctformer/nn/layers.h"

#include <cmath>
#include <stdexcept>

#include "ctformer/grad/ops.h"

namespace ctformer::nn {

Tensor Initializer::fan_in_uniform(std::size_t rows, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(rows * fan_in);
  for (double& v : values) v = dist(rng_);
  return Tensor({rows, fan_in}, std::move(values), true);
}

Tensor Initializer::fan_in_bias(std::size_t n, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(n);
  for (double& v : values) v = dist(rng_);
  return Tensor({n}, std::move(values), true);
}

Tensor Initializer::constant(grad::Shape shape, double value) {
  std::vector<double> values(grad::shape_size(shape), value);
  return Tensor(std::move(shape), std::move(values), true);
}

Tensor Initializer::identity_plus_noise(std::size_t n, double noise) {
  std::normal_distribution<double> dist(0.0, noise);
  std::vector<double> values(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) values[i * n + j] = (i == j ? 1.0 : 0.0) + dist(rng_);
  }
  return Tensor({n, n}, std::move(values), true);
}

LogisticHead LogisticHead::init(std::size_t dim, Initializer& init) {
  Tensor weight = init.fan_in_bias(dim, dim);
  return LogisticHead{weight, init.fan_in_bias(1, dim)};
}

LogisticHead LogisticHead::zeros(std::size_t dim) {
  return LogisticHead{Tensor::zeros({dim}, true), Tensor::zeros({1}, true)};
}

Tensor LogisticHead::logit(const Tensor& x) const {
  if (x.size() != weight.size()) {
    throw std::invalid_argument("LogisticHead: input " + grad::shape_to_string(x.shape()) +
                                " vs weight " + grad::shape_to_string(weight.shape()));
  }
  return grad::add(grad::reshape(grad::dot(weight, x), {1}), bias);
}

Tensor LogisticHead::probability(const Tensor& x) const { return grad::sigmoid(logit(x)); }

void LogisticHead::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace ctformer::nn
