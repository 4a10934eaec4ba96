#ifndef CTFORMER_MODEL_LTC_REFERENCE_H_
#define CTFORMER_MODEL_LTC_REFERENCE_H_

#include <span>
#include <vector>

#include "ctformer/model/cfc.h"

namespace ctformer::model {

// Liquid time-constant reference dynamics
//   dh/dt = -(w + f(z)) * h + w * f(z),   z = [u; h],
// with f the sigmoid of the CfC layer's f head (so f lies in (0, 1)) and w a
// positive time-constant vector. Integrated with fixed-step RK4 over [0, dt].
// Only used for comparisons against the closed-form cell; it records no
// gradients.
std::vector<double> ltc_reference_cell(std::span<const double> input, std::span<const double> h_prev,
                                       double dt, int solver_steps, const CfcParams& params,
                                       std::span<const double> w);

}  // namespace ctformer::model

#endif  // CTFORMER_MODEL_LTC_REFERENCE_H_
