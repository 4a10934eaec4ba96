#ifndef CTFORMER_NN_OPTIMIZER_H_
#define CTFORMER_NN_OPTIMIZER_H_

#include <vector>

#include "ctformer/grad/gradcheck.h"

namespace ctformer::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer over a fixed parameter list. Parameters without an
// accumulated gradient are treated as having zero gradient.
class Adam {
 public:
  Adam(std::vector<grad::NamedTensor> params, AdamOptions options);

  void zero_grad();
  void step();
  // Multiplies every accumulated gradient by s (batch averaging).
  void scale_grad(double s);
  double grad_norm() const;
  std::size_t steps() const { return steps_; }
  const std::vector<grad::NamedTensor>& params() const { return params_; }

 private:
  std::vector<grad::NamedTensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace ctformer::nn

#endif  // CTFORMER_NN_OPTIMIZER_H_
