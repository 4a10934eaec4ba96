#ifndef CTFORMER_MODEL_CAUSAL_H_
#define CTFORMER_MODEL_CAUSAL_H_

#include <cstdint>
#include <vector>

#include "ctformer/grad/tensor.h"

namespace ctformer::model {

using grad::Tensor;

// Binary [n x n] matrix with entry (i, j) = 1 iff i > j.
struct StructuralMask {
  std::size_t size = 0;
  std::vector<std::uint8_t> entries;

  static StructuralMask strictly_lower(std::size_t n);
  // Strictly lower entries restricted to rows and columns below t_valid.
  static StructuralMask valid_strictly_lower(std::size_t n, std::size_t t_valid);
  Tensor as_tensor() const;
};

struct CausalExtract {
  Tensor causal;     // B [t_max x t_max]
  Tensor impact;     // S [t_max]
  Tensor attention;  // alpha [t_max]
  Tensor local;      // L [d_h]
};

// B = ReLU(A . W_c) masked to the strictly lower triangle, with rows and
// columns >= t_valid zeroed.
Tensor causal_matrix(const Tensor& attention, const Tensor& w_c, std::size_t t_valid);

// Column sums of B; entries >= t_valid are 0.
Tensor impact_scores(const Tensor& causal, std::size_t t_valid);

// Softmax of S over the first t_valid steps, 0 elsewhere.
Tensor causal_attention(const Tensor& impact, std::size_t t_valid);

// sum_j alpha_j h_cfc[j]
Tensor local_vector(const Tensor& alpha, const Tensor& h_cfc);

CausalExtract decouple(const Tensor& attention, const Tensor& h_cfc, const Tensor& w_c,
                       std::size_t t_valid);

}  // namespace ctformer::model

#endif  // CTFORMER_MODEL_CAUSAL_H_
