#include "ctformer/model/causal.h"

#include <stdexcept>

#include "ctformer/grad/ops.h"

namespace ctformer::model {

namespace g = ctformer::grad;

StructuralMask StructuralMask::strictly_lower(std::size_t n) { return valid_strictly_lower(n, n); }

StructuralMask StructuralMask::valid_strictly_lower(std::size_t n, std::size_t t_valid) {
  StructuralMask m{n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t i = 0; i < t_valid && i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) m.entries[i * n + j] = 1;
  }
  return m;
}

Tensor StructuralMask::as_tensor() const {
  return Tensor({size, size}, std::vector<double>(entries.begin(), entries.end()));
}

Tensor causal_matrix(const Tensor& attention, const Tensor& w_c, std::size_t t_valid) {
  if (attention.rank() != 2 || attention.rows() != attention.cols() ||
      w_c.shape() != attention.shape()) {
    throw std::invalid_argument("causal_matrix: shape mismatch " +
                                g::shape_to_string(attention.shape()) + " vs " +
                                g::shape_to_string(w_c.shape()));
  }
  const std::size_t n = attention.rows();
  if (t_valid == 0 || t_valid > n) throw std::invalid_argument("causal_matrix: bad t_valid");
  const Tensor mask = StructuralMask::valid_strictly_lower(n, t_valid).as_tensor();
  return g::mul(g::relu(g::matmul(attention, w_c)), mask);
}

Tensor impact_scores(const Tensor& causal, std::size_t t_valid) {
  const Tensor s = g::sum_axis(causal, 0);
  if (t_valid == s.size()) return s;
  std::vector<double> keep(s.size(), 0.0);
  for (std::size_t j = 0; j < t_valid; ++j) keep[j] = 1.0;
  return g::mul(s, Tensor::vector(std::move(keep)));
}

Tensor causal_attention(const Tensor& impact, std::size_t t_valid) {
  if (t_valid == 0) throw std::invalid_argument("causal_attention: t_valid must be >= 1");
  if (t_valid > impact.size()) throw std::invalid_argument("causal_attention: t_valid > length");
  std::vector<std::uint8_t> allowed(impact.size(), 0);
  for (std::size_t j = 0; j < t_valid; ++j) allowed[j] = 1;
  return g::row_softmax_masked(impact, allowed);
}

Tensor local_vector(const Tensor& alpha, const Tensor& h_cfc) {
  if (h_cfc.rank() != 2 || alpha.size() != h_cfc.rows()) {
    throw std::invalid_argument("local_vector: shape mismatch " + g::shape_to_string(alpha.shape()) +
                                " vs " + g::shape_to_string(h_cfc.shape()));
  }
  return g::matmul(g::reshape(alpha, {alpha.size()}), h_cfc);
}

CausalExtract decouple(const Tensor& attention, const Tensor& h_cfc, const Tensor& w_c,
                       std::size_t t_valid) {
  CausalExtract out;
  out.causal = causal_matrix(attention, w_c, t_valid);
  out.impact = impact_scores(out.causal, t_valid);
  out.attention = causal_attention(out.impact, t_valid);
  out.local = local_vector(out.attention, h_cfc);
  return out;
}

}  // namespace ctformer::model
