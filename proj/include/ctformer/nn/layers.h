#ifndef CTFORMER_NN_LAYERS_H_
#define CTFORMER_NN_LAYERS_H_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ctformer/grad/gradcheck.h"
#include "ctformer/grad/tensor.h"

namespace ctformer::nn {

using grad::NamedTensor;
using grad::Tensor;

// Parameter initializer with its own deterministic stream.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for a [rows x fan_in] matrix.
  Tensor fan_in_uniform(std::size_t rows, std::size_t fan_in);
  // Same bound applied to a length-n bias.
  Tensor fan_in_bias(std::size_t n, std::size_t fan_in);
  Tensor constant(grad::Shape shape, double value);
  Tensor identity_plus_noise(std::size_t n, double noise);

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// sigmoid(w . x + b)
struct LogisticHead {
  Tensor weight;  // [d]
  Tensor bias;    // [1]

  static LogisticHead init(std::size_t dim, Initializer& init);
  static LogisticHead zeros(std::size_t dim);
  Tensor logit(const Tensor& x) const;
  Tensor probability(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

}  // namespace ctformer::nn

#endif  // CTFORMER_NN_LAYERS_H_
