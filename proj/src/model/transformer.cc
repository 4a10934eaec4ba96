#include "ctformer/model/transformer.h"

#include <cmath>
#include <stdexcept>

#include "ctformer/grad/ops.h"

namespace ctformer::model {

namespace g = ctformer::grad;

TransformerParams TransformerParams::init(std::size_t d_model, std::size_t n_heads,
                                          std::size_t d_ff, std::size_t n_layers,
                                          nn::Initializer& init) {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw std::invalid_argument("TransformerParams: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  TransformerParams p;
  p.d_model = d_model;
  p.n_heads = n_heads;
  p.d_ff = d_ff;
  for (std::size_t l = 0; l < n_layers; ++l) {
    TransformerLayerParams layer;
    layer.ln1_gamma = init.constant({d_model}, 1.0);
    layer.ln1_beta = init.constant({d_model}, 0.0);
    layer.qkv_w = init.fan_in_uniform(3 * d_model, d_model);
    layer.qkv_b = init.constant({3 * d_model}, 0.0);
    layer.out_w = init.fan_in_uniform(d_model, d_model);
    layer.out_b = init.constant({d_model}, 0.0);
    layer.ln2_gamma = init.constant({d_model}, 1.0);
    layer.ln2_beta = init.constant({d_model}, 0.0);
    layer.ff1_w = init.fan_in_uniform(d_ff, d_model);
    layer.ff1_b = init.fan_in_bias(d_ff, d_model);
    layer.ff2_w = init.fan_in_uniform(d_model, d_ff);
    layer.ff2_b = init.fan_in_bias(d_model, d_ff);
    p.layers.push_back(std::move(layer));
  }
  p.final_gamma = init.constant({d_model}, 1.0);
  p.final_beta = init.constant({d_model}, 0.0);
  return p;
}

void TransformerParams::collect(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = prefix + "." + std::to_string(l);
    const TransformerLayerParams& p = layers[l];
    out.push_back({pre + ".ln1_gamma", p.ln1_gamma});
    out.push_back({pre + ".ln1_beta", p.ln1_beta});
    out.push_back({pre + ".qkv_w", p.qkv_w});
    out.push_back({pre + ".qkv_b", p.qkv_b});
    out.push_back({pre + ".out_w", p.out_w});
    out.push_back({pre + ".out_b", p.out_b});
    out.push_back({pre + ".ln2_gamma", p.ln2_gamma});
    out.push_back({pre + ".ln2_beta", p.ln2_beta});
    out.push_back({pre + ".ff1_w", p.ff1_w});
    out.push_back({pre + ".ff1_b", p.ff1_b});
    out.push_back({pre + ".ff2_w", p.ff2_w});
    out.push_back({pre + ".ff2_b", p.ff2_b});
  }
  out.push_back({prefix + ".final_gamma", final_gamma});
  out.push_back({prefix + ".final_beta", final_beta});
}

std::vector<std::uint8_t> causal_attention_mask(std::size_t n) {
  std::vector<std::uint8_t> mask(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask[i * n + j] = 1;
  }
  return mask;
}

AttentionOutput transformer_encode(const Tensor& h_cfc, std::size_t t_valid,
                                   const TransformerParams& params) {
  if (t_valid == 0) throw std::invalid_argument("transformer_encode: t_valid must be >= 1");
  if (h_cfc.rank() != 2 || h_cfc.cols() != params.d_model) {
    throw std::invalid_argument("transformer_encode: d_model " + std::to_string(params.d_model) +
                                " does not match CfC states " +
                                g::shape_to_string(h_cfc.shape()));
  }
  if (t_valid > h_cfc.rows()) throw std::invalid_argument("transformer_encode: t_valid > t_max");
  const std::size_t t_max = h_cfc.rows();
  const std::size_t d = params.d_model, heads = params.n_heads, dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::vector<std::uint8_t> mask = causal_attention_mask(t_valid);

  Tensor x = g::slice_rows(h_cfc, 0, t_valid);
  Tensor attention_sum;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const TransformerLayerParams& p = params.layers[l];
    const bool last = l + 1 == params.layers.size();
    const Tensor qkv = g::linear(g::layer_norm(x, p.ln1_gamma, p.ln1_beta), p.qkv_w, p.qkv_b);
    std::vector<Tensor> head_outputs;
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor q = g::slice_cols(qkv, h * dk, dk);
      const Tensor k = g::slice_cols(qkv, d + h * dk, dk);
      const Tensor v = g::slice_cols(qkv, 2 * d + h * dk, dk);
      const Tensor logits = g::scale(g::matmul(q, g::transpose(k)), inv_sqrt_dk);
      const Tensor weights = g::row_softmax_masked(logits, mask);
      if (last) attention_sum = attention_sum.defined() ? g::add(attention_sum, weights) : weights;
      head_outputs.push_back(g::matmul(weights, v));
    }
    const Tensor merged = heads == 1 ? head_outputs[0] : g::concat(head_outputs);
    x = g::add(x, g::linear(merged, p.out_w, p.out_b));
    const Tensor hidden =
        g::relu(g::linear(g::layer_norm(x, p.ln2_gamma, p.ln2_beta), p.ff1_w, p.ff1_b));
    x = g::add(x, g::linear(hidden, p.ff2_w, p.ff2_b));
  }
  x = g::layer_norm(x, params.final_gamma, params.final_beta);

  AttentionOutput out;
  out.global = g::row(x, t_valid - 1);
  out.h_trans = g::pad(x, t_max, d);
  if (attention_sum.defined()) {
    out.attention = g::pad(g::scale(attention_sum, 1.0 / static_cast<double>(heads)), t_max, t_max);
  }
  return out;
}

}  // namespace ctformer::model
