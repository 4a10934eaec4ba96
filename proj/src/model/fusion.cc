#include "ctformer/model/fusion.h"

#include <stdexcept>

#include "ctformer/grad/ops.h"
#include "ctformer/model/causal.h"

namespace ctformer::model {

namespace g = ctformer::grad;

FusionParams FusionParams::init(std::size_t dim, nn::Initializer& init) {
  FusionParams p;
  p.gate_w = init.fan_in_uniform(dim, 2 * dim);
  p.gate_b = init.constant({dim}, 0.0);
  p.classifier = nn::LogisticHead::init(dim, init);
  return p;
}

void FusionParams::collect(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  out.push_back({prefix + ".gate_w", gate_w});
  out.push_back({prefix + ".gate_b", gate_b});
  classifier.collect(prefix + ".classifier", out);
}

FusionOutput gated_fusion(const Tensor& global, const Tensor& local, const FusionParams& params) {
  if (global.shape() != local.shape() || params.gate_w.rows() != global.size() ||
      params.gate_w.cols() != 2 * global.size()) {
    throw std::invalid_argument("gated_fusion: G " + g::shape_to_string(global.shape()) + ", L " +
                                g::shape_to_string(local.shape()) + ", W_g " +
                                g::shape_to_string(params.gate_w.shape()));
  }
  FusionOutput out;
  out.gate = g::sigmoid(g::linear(g::concat({global, local}), params.gate_w, params.gate_b));
  out.fused = g::add(g::mul(out.gate, global), g::mul(g::one_minus(out.gate), local));
  return out;
}

Tensor predict(const Tensor& fused, const nn::LogisticHead& classifier) {
  return classifier.probability(fused);
}

Tensor stage2_loss(const Tensor& probability, int label, const Tensor& causal, double lambda,
                   std::size_t t_valid, double positive_weight) {
  if (lambda < 0.0) throw std::invalid_argument("stage2_loss: lambda must be >= 0");
  Tensor loss = g::binary_cross_entropy(probability, label, positive_weight);
  if (lambda == 0.0) return loss;
  const StructuralMask mask = StructuralMask::valid_strictly_lower(causal.rows(), t_valid);
  return g::add(loss, g::scale(g::l1_masked(causal, mask.entries), lambda));
}

}  // namespace ctformer::model
