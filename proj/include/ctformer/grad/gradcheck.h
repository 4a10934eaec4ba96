#ifndef CTFORMER_GRAD_GRADCHECK_H_
#define CTFORMER_GRAD_GRADCHECK_H_

#include <functional>
#include <string>
#include <vector>

#include "ctformer/grad/tensor.h"

namespace ctformer::grad {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double epsilon = 1e-6;
  double tolerance = 1e-6;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor), so entries
  // whose true gradient is far below the floor are compared absolutely.
  double denominator_floor = 1e-3;
};

// Compares reverse-mode gradients of a scalar loss against central differences
// (f(x + eps) - f(x - eps)) / 2eps for every entry of every parameter. Throws
// std::runtime_error when the loss is not finite.
GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<NamedTensor>& params,
                                const GradCheckOptions& options = {});

}  // namespace ctformer::grad

#endif  // CTFORMER_GRAD_GRADCHECK_H_
