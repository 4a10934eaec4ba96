#ifndef CTFORMER_MODEL_TRANSFORMER_H_
#define CTFORMER_MODEL_TRANSFORMER_H_

#include <cstdint>
#include <vector>

#include "ctformer/grad/tensor.h"
#include "ctformer/nn/layers.h"

namespace ctformer::model {

using grad::Tensor;

struct TransformerLayerParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor qkv_w, qkv_b;  // [3d x d], [3d]; rows ordered query, key, value
  Tensor out_w, out_b;  // [d x d], [d]
  Tensor ln2_gamma, ln2_beta;
  Tensor ff1_w, ff1_b;  // [ff x d], [ff]
  Tensor ff2_w, ff2_b;  // [d x ff], [d]
};

struct TransformerParams {
  std::size_t d_model = 0;
  std::size_t n_heads = 0;
  std::size_t d_ff = 0;
  std::vector<TransformerLayerParams> layers;
  Tensor final_gamma, final_beta;

  static TransformerParams init(std::size_t d_model, std::size_t n_heads, std::size_t d_ff,
                                std::size_t n_layers, nn::Initializer& init);
  void collect(const std::string& prefix, std::vector<nn::NamedTensor>& out) const;
};

struct AttentionOutput {
  Tensor h_trans;    // [t_max x d], rows >= t_valid zero
  Tensor attention;  // [t_max x t_max], head-averaged final-layer weights
  Tensor global;     // [d], h_trans row t_valid - 1
};

// allowed[i][j] = 1 iff j <= i, over an n x n block.
std::vector<std::uint8_t> causal_attention_mask(std::size_t n);

// Pre-norm blocks x += MHA(LN(x)); x += FFN(LN(x)) followed by a final layer
// norm, evaluated on the valid rows of h_cfc only. No positional encoding is
// added: elapsed time reaches the block through the CfC states.
AttentionOutput transformer_encode(const Tensor& h_cfc, std::size_t t_valid,
                                   const TransformerParams& params);

}  // namespace ctformer::model

#endif  // CTFORMER_MODEL_TRANSFORMER_H_
