#ifndef CTFORMER_MODEL_FUSION_H_
#define CTFORMER_MODEL_FUSION_H_

#include "ctformer/grad/tensor.h"
#include "ctformer/nn/layers.h"

namespace ctformer::model {

using grad::Tensor;

struct FusionParams {
  Tensor gate_w;  // [d x 2d]
  Tensor gate_b;  // [d]
  nn::LogisticHead classifier;

  static FusionParams init(std::size_t dim, nn::Initializer& init);
  void collect(const std::string& prefix, std::vector<nn::NamedTensor>& out) const;
};

struct FusionOutput {
  Tensor gate;   // g in (0, 1)^d
  Tensor fused;  // g * G + (1 - g) * L
};

FusionOutput gated_fusion(const Tensor& global, const Tensor& local, const FusionParams& params);

// sigmoid(W_cls . h + b_cls)
Tensor predict(const Tensor& fused, const nn::LogisticHead& classifier);

// Cross entropy plus lambda times the mean |B| over the strictly-lower valid
// entries. Throws std::invalid_argument on lambda < 0.
Tensor stage2_loss(const Tensor& probability, int label, const Tensor& causal, double lambda,
                   std::size_t t_valid, double positive_weight = 1.0);

}  // namespace ctformer::model

#endif  // CTFORMER_MODEL_FUSION_H_
